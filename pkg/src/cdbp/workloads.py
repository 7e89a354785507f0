"""Synthetic workloads and SWF trace ingestion.

Synthetic requests draw arrivals from a uniform window and durations from a
Gaussian, with VM types picked from the catalog below.  Real traces come in
the Standard Workload Format (``;`` comments, 18 whitespace-separated fields
per job).
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .model import (
    ContractViolation,
    ProblemInstance,
    ServerPool,
    ServerType,
    VmRequest,
    as_amount,
)

log = logging.getLogger(__name__)

# (vcpu, memory GB, ssd GB)
SERVER_CATALOG: tuple[ServerType, ...] = (
    ServerType.make("s1", (16, 32, 160)),
    ServerType.make("s2", (8, 32, 160)),
    ServerType.make("s3", (8, 64, 320)),
)

VM_CATALOG: tuple[tuple[Fraction, ...], ...] = tuple(
    tuple(as_amount(x) for x in v)
    for v in [
        (1, 3.75, 4), (2, 7.5, 32), (4, 15, 80), (2, 3.75, 32),
        (4, 7.5, 80), (8, 15, 160), (2, 15.25, 32), (4, 30.5, 80),
    ]
)


@dataclass(frozen=True)
class SyntheticSpec:
    n_vms: int
    arrival_a: float = 0.0
    arrival_b: float = 240.0
    duration_mu: float = 360.0
    duration_sigma: float = 60.0
    vm_type_mix: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_vms < 0:
            raise ContractViolation("n_vms must be non-negative")
        if not (self.arrival_b > self.arrival_a >= 0):
            raise ContractViolation("arrival bounds must satisfy b > a >= 0")
        if not self.duration_mu > 0:
            raise ContractViolation("duration_mu must be positive")
        if self.duration_sigma < 0:
            raise ContractViolation("duration_sigma must be non-negative")
        if self.vm_type_mix is not None:
            mix = self.vm_type_mix
            if len(mix) != len(VM_CATALOG) or min(mix) < 0 or sum(mix) <= 0:
                raise ContractViolation("vm_type_mix needs one non-negative weight per VM type")


def generate(spec: SyntheticSpec) -> list[VmRequest]:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_vms
    arrivals = np.rint(rng.uniform(spec.arrival_a, spec.arrival_b, n)).astype(np.int64)
    durations = np.maximum(1, np.rint(rng.normal(spec.duration_mu, spec.duration_sigma, n))).astype(np.int64)
    p = None
    if spec.vm_type_mix is not None:
        w = np.asarray(spec.vm_type_mix, dtype=float)
        p = w / w.sum()
    types = rng.choice(len(VM_CATALOG), size=n, p=p)
    return [
        VmRequest.make(f"vm{j}", int(arrivals[j]), int(durations[j]), VM_CATALOG[int(types[j])])
        for j in range(n)
    ]


def default_pool(n_vms: int, catalog: Sequence[ServerType] = SERVER_CATALOG) -> ServerPool:
    """``n_vms`` servers of each type, grouped by type; always large enough."""
    return ServerPool.from_counts([(st, max(n_vms, 1)) for st in catalog])


def synthetic_instance(spec: SyntheticSpec) -> ProblemInstance:
    return ProblemInstance(tuple(generate(spec)), default_pool(spec.n_vms))


# --------------------------------------------------------------------------
# SWF ingestion
# --------------------------------------------------------------------------

SWF_FIELDS = 18


@dataclass
class CleanReport:
    total_records: int = 0
    emitted: int = 0
    truncated: int = 0
    capped: int = 0
    dropped: Counter = field(default_factory=Counter)

    @property
    def dropped_total(self) -> int:
        return sum(self.dropped.values())

    def consistent(self) -> bool:
        return self.emitted + self.truncated + self.dropped_total == self.total_records


class SwfFormatError(ValueError):
    pass


def _cost(demand: Sequence[Fraction]) -> Fraction:
    # normalized by the largest catalog value per dimension
    tops = [max(v[q] for v in VM_CATALOG) for q in range(len(demand))]
    return sum((d / t for d, t in zip(demand, tops)), Fraction(0))


def snap_to_catalog(request: Sequence[Fraction]) -> tuple[tuple[Fraction, ...], bool]:
    """Cheapest catalog VM type dominating ``request``; capped to the largest if none.

    Returns the type and whether capping happened.
    """
    fits = [v for v in VM_CATALOG if all(v[q] >= request[q] for q in range(len(request)))]
    if fits:
        return min(fits, key=lambda v: (_cost(v), v)), False
    return max(VM_CATALOG, key=lambda v: (_cost(v), v)), True


def ingest_swf(path, limit: int = 500, completed_only: bool = True) -> tuple[list[VmRequest], CleanReport]:
    """Read an SWF log into VM requests.

    Submit time becomes arrival (rebased so the earliest kept arrival is 0),
    run time becomes duration, requested processors become vCPUs (allocated
    processors when the request is missing) and requested memory, read as MB,
    becomes GB.  SSD is absent from SWF and defaults to the smallest catalog
    value; so does missing memory.  Each request is snapped to a catalog type.
    """
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SwfFormatError(f"cannot read {path}: {exc}") from exc
    report = CleanReport()
    kept: list[tuple[int, int, tuple[Fraction, ...], int]] = []
    min_mem = min(v[1] for v in VM_CATALOG)
    min_ssd = min(v[2] for v in VM_CATALOG)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        parts = line.split()
        if len(parts) != SWF_FIELDS:
            raise SwfFormatError(f"line {lineno}: expected {SWF_FIELDS} fields, got {len(parts)}")
        try:
            f = [float(x) for x in parts]
        except ValueError as exc:
            raise SwfFormatError(f"line {lineno}: {exc}") from exc
        report.total_records += 1
        job, submit, run, alloc_proc, req_proc, req_mem, status = (
            int(f[0]), f[1], f[3], f[4], f[7], f[9], int(f[10]))
        procs = req_proc if req_proc > 0 else alloc_proc
        if run <= 0:
            report.dropped["missing duration"] += 1
            continue
        if procs <= 0:
            report.dropped["missing processors"] += 1
            continue
        if submit < 0:
            report.dropped["missing submit time"] += 1
            continue
        if completed_only and status != 1:
            report.dropped["not completed"] += 1
            continue
        if len(kept) >= limit:
            report.truncated += 1
            continue
        mem = Fraction(req_mem).limit_denominator(1 << 20) / 1024 if req_mem > 0 else min_mem
        request = (Fraction(math.ceil(procs)), mem, min_ssd)
        demand, capped = snap_to_catalog(request)
        if capped:
            report.capped += 1
            log.warning("job %d exceeds every catalog VM type; capped to the largest", job)
        kept.append((job, int(submit), demand, max(1, int(round(run)))))
    if not kept:
        raise SwfFormatError("zero qualified records")
    base = min(k[1] for k in kept)
    vms = [VmRequest.make(f"job{job}", submit - base, dur, demand) for job, submit, demand, dur in kept]
    report.emitted = len(vms)
    return vms, report


def format_swf_line(job: int, submit: int, run: int, procs: int, mem_mb: float, status: int = 1) -> str:
    """One SWF job line; unused fields are ``-1``."""
    fields = [-1] * SWF_FIELDS
    fields[0], fields[1], fields[2], fields[3] = job, submit, 0, run
    fields[4], fields[7], fields[9], fields[10] = procs, procs, mem_mb, status
    return " ".join(str(x) for x in fields)


def write_swf(path, jobs: Sequence[tuple], header: str = "; synthetic SWF fixture") -> None:
    """Write ``(job, submit, run, procs, mem_mb[, status])`` tuples as an SWF file."""
    lines = [header] + [format_swf_line(*j) for j in jobs]
    Path(path).write_text("\n".join(lines) + "\n")
