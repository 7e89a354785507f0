"""Problem model: requests, servers, allocations and reservation timelines.

Time is integer seconds and every request occupies the half-open window
``[arrival, arrival + duration)``; an unbounded request occupies
``[arrival, inf)``.  Resource amounts are exact rationals restricted to
multiples of ``1 / QUANTUM`` so that the numeric kernels can work in int64
fixed point without any float tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import kernels
from .kernels import END

QUANTUM = 4
UNBOUNDED = math.inf
DEFAULT_DIMENSIONS = ("vcpu", "memory_gb", "ssd_gb")


class ContractViolation(ValueError):
    """A precondition of an operation was not met by the caller."""


class InsufficientPoolError(RuntimeError):
    """A finite server pool cannot host every request."""

    def __init__(self, vm_id, message=None):
        self.vm_id = vm_id
        super().__init__(message or f"insufficient pool: no server can host {vm_id!r}")


def as_amount(x) -> Fraction:
    """Parse a resource amount, rejecting values off the 1/QUANTUM grid."""
    if isinstance(x, float):
        x = Fraction(str(x))
    else:
        x = Fraction(x)
    if x < 0:
        raise ContractViolation(f"negative resource amount {x}")
    if (x * QUANTUM).denominator != 1:
        raise ContractViolation(f"resource amount {x} is not a multiple of 1/{QUANTUM}")
    return x


def to_units(vec: Sequence[Fraction]) -> np.ndarray:
    return np.array([int(v * QUANTUM) for v in vec], dtype=np.int64)


def resource_vector(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(as_amount(v) for v in values)


@dataclass(frozen=True)
class Interval:
    start: int
    duration: float | int = UNBOUNDED

    def __post_init__(self):
        if int(self.start) != self.start or self.start < 0:
            raise ContractViolation(f"arrival must be a non-negative integer, got {self.start}")
        if self.duration != UNBOUNDED:
            if int(self.duration) != self.duration or self.duration <= 0:
                raise ContractViolation(f"duration must be a positive integer, got {self.duration}")

    @property
    def bounded(self) -> bool:
        return self.duration != UNBOUNDED

    @property
    def end(self):
        return self.start + self.duration if self.bounded else UNBOUNDED

    def contains(self, t) -> bool:
        return self.start <= t < self.end

    def overlaps(self, other: "Interval") -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class VmRequest:
    id: str
    window: Interval
    demand: tuple[Fraction, ...]

    @classmethod
    def make(cls, id, arrival, duration, demand) -> "VmRequest":
        if duration is None or duration == "inf":
            duration = UNBOUNDED
        return cls(str(id), Interval(int(arrival), duration), resource_vector(demand))

    @property
    def arrival(self) -> int:
        return self.window.start

    @property
    def duration(self):
        return self.window.duration


@dataclass(frozen=True)
class ServerType:
    type_id: str
    capacity: tuple[Fraction, ...]

    @classmethod
    def make(cls, type_id, capacity) -> "ServerType":
        return cls(str(type_id), resource_vector(capacity))

    def dominates(self, demand: Sequence[Fraction]) -> bool:
        return all(c >= d for c, d in zip(self.capacity, demand))


@dataclass(frozen=True)
class ServerInstance:
    instance_id: str
    stype: ServerType


@dataclass(frozen=True)
class ServerPool:
    """Ordered server instances; the order is the first-fit scan order."""

    instances: tuple[ServerInstance, ...]

    def __post_init__(self):
        ids = [s.instance_id for s in self.instances]
        if len(set(ids)) != len(ids):
            raise ContractViolation("server instance ids must be unique")

    @classmethod
    def from_counts(cls, spec: Iterable[tuple[ServerType, int]]) -> "ServerPool":
        out = []
        for stype, count in spec:
            out.extend(ServerInstance(f"{stype.type_id}-{k}", stype) for k in range(count))
        return cls(tuple(out))

    def __len__(self):
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    @cached_property
    def types(self) -> tuple[ServerType, ...]:
        seen = {}
        for s in self.instances:
            seen.setdefault(s.stype.type_id, s.stype)
        return tuple(seen.values())

    @cached_property
    def index(self) -> dict[str, int]:
        return {s.instance_id: i for i, s in enumerate(self.instances)}

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for s in self.instances:
            out[s.stype.type_id] = out.get(s.stype.type_id, 0) + 1
        return out


@dataclass(frozen=True)
class ProblemInstance:
    vms: tuple[VmRequest, ...]
    pool: ServerPool
    dimensions: tuple[str, ...] = DEFAULT_DIMENSIONS

    def __post_init__(self):
        object.__setattr__(self, "vms", tuple(self.vms))
        object.__setattr__(self, "dimensions", tuple(self.dimensions))
        l = len(self.dimensions)
        ids = [v.id for v in self.vms]
        if len(set(ids)) != len(ids):
            raise ContractViolation("VM ids must be unique")
        for s in self.pool:
            if len(s.stype.capacity) != l:
                raise ContractViolation(f"server {s.instance_id} has {len(s.stype.capacity)} dimensions, expected {l}")
        types = self.pool.types
        for v in self.vms:
            if len(v.demand) != l:
                raise ContractViolation(f"VM {v.id} has {len(v.demand)} dimensions, expected {l}")
            if types and not any(t.dominates(v.demand) for t in types):
                raise ContractViolation(f"no server type can host VM {v.id}")

    @property
    def n(self) -> int:
        return len(self.vms)

    @property
    def m(self) -> int:
        return len(self.pool)

    def with_vms(self, vms: Iterable[VmRequest]) -> "ProblemInstance":
        return ProblemInstance(tuple(vms), self.pool, self.dimensions)

    @cached_property
    def vm_index(self) -> dict[str, int]:
        return {v.id: i for i, v in enumerate(self.vms)}

    @cached_property
    def arrays(self) -> "InstanceArrays":
        return InstanceArrays.build(self)


@dataclass(frozen=True)
class InstanceArrays:
    """Fixed-point array view of an instance, as consumed by the kernels."""

    starts: np.ndarray      # (n,) int64
    ends: np.ndarray        # (n,) int64, END for unbounded
    demand: np.ndarray      # (n, l) int64 units
    caps: np.ndarray        # (m, l) int64 units, per pool instance
    type_caps: np.ndarray   # (T, l) int64 units
    server_type: np.ndarray  # (m,) index into type_caps

    @classmethod
    def build(cls, inst: ProblemInstance) -> "InstanceArrays":
        l = len(inst.dimensions)
        n = inst.n
        starts = np.array([v.arrival for v in inst.vms], dtype=np.int64).reshape(n)
        ends = np.array([END if not v.window.bounded else v.window.end for v in inst.vms],
                        dtype=np.int64).reshape(n)
        demand = np.array([to_units(v.demand) for v in inst.vms], dtype=np.int64).reshape(n, l)
        types = inst.pool.types
        tindex = {t.type_id: i for i, t in enumerate(types)}
        type_caps = np.array([to_units(t.capacity) for t in types], dtype=np.int64).reshape(len(types), l)
        server_type = np.array([tindex[s.stype.type_id] for s in inst.pool], dtype=np.int64)
        caps = type_caps[server_type] if len(server_type) else np.zeros((0, l), dtype=np.int64)
        return cls(starts, ends, demand, np.ascontiguousarray(caps), type_caps, server_type)

    @property
    def horizon(self) -> int:
        """An instant after which the set of active reservations never changes."""
        finite = [int(e) for e in self.ends if e != END]
        return max(finite + [int(s) + 1 for s in self.starts] + [1])


@dataclass(frozen=True)
class Allocation:
    """Total map from VM id to server instance id."""

    assignments: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "assignments", dict(self.assignments))

    def __len__(self):
        return len(self.assignments)

    def __getitem__(self, vm_id):
        return self.assignments[vm_id]

    def items(self):
        return self.assignments.items()

    def servers(self) -> set[str]:
        return set(self.assignments.values())

    def by_server(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for vm, srv in self.assignments.items():
            out.setdefault(srv, []).append(vm)
        return out

    @classmethod
    def from_indices(cls, inst: ProblemInstance, assign: Sequence[int]) -> "Allocation":
        return cls({v.id: inst.pool[int(s)].instance_id for v, s in zip(inst.vms, assign)})


def count_servers(alloc: Allocation) -> int:
    """Number of distinct servers that host at least one VM."""
    return len(alloc.servers())


class ReservationTimeline:
    """Per-server reservations over a pool; the single-writer mutable state.

    Each server keeps its reserved ``(window, demand)`` entries in growable
    int64 buffers so that :func:`kernels.fits_window` can test new requests
    at event points only.
    """

    def __init__(self, pool: ServerPool, dimensions: int | Sequence[str] = 3):
        self.pool = pool
        self.l = dimensions if isinstance(dimensions, int) else len(dimensions)
        self._caps = {s.instance_id: to_units(s.stype.capacity) for s in pool}
        self._start: dict[str, np.ndarray] = {}
        self._end: dict[str, np.ndarray] = {}
        self._dem: dict[str, np.ndarray] = {}
        self._k: dict[str, int] = {}
        self._vms: dict[str, list[str]] = {}

    def _buffers(self, sid):
        if sid not in self._caps:
            raise ContractViolation(f"unknown server {sid!r}")
        if sid not in self._start:
            self._start[sid] = np.zeros(4, dtype=np.int64)
            self._end[sid] = np.zeros(4, dtype=np.int64)
            self._dem[sid] = np.zeros((4, self.l), dtype=np.int64)
            self._k[sid] = 0
            self._vms[sid] = []
        return self._start[sid], self._end[sid], self._dem[sid], self._k[sid]

    def _vm_arrays(self, vm: VmRequest):
        if len(vm.demand) != self.l:
            raise ContractViolation(
                f"VM {vm.id} has {len(vm.demand)} dimensions, timeline has {self.l}")
        a = np.int64(vm.arrival)
        e = END if not vm.window.bounded else np.int64(vm.window.end)
        return a, e, to_units(vm.demand)

    def can_accommodate(self, server_id: str, vm: VmRequest) -> bool:
        a, e, d = self._vm_arrays(vm)
        st, en, dm, k = self._buffers(server_id)
        return bool(kernels.fits_window(st, en, dm, k, self._caps[server_id], a, e, d))

    def reserve(self, server_id: str, vm: VmRequest) -> "ReservationTimeline":
        if not self.can_accommodate(server_id, vm):
            raise ContractViolation(f"server {server_id} cannot accommodate VM {vm.id}")
        a, e, d = self._vm_arrays(vm)
        st, en, dm, k = self._buffers(server_id)
        if k == st.shape[0]:
            st = np.concatenate([st, np.zeros_like(st)])
            en = np.concatenate([en, np.zeros_like(en)])
            dm = np.concatenate([dm, np.zeros_like(dm)])
            self._start[server_id], self._end[server_id], self._dem[server_id] = st, en, dm
        st[k], en[k], dm[k] = a, e, d
        self._k[server_id] = k + 1
        self._vms[server_id].append(vm.id)
        return self

    def entries(self, server_id: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Starts, ends and unit demands of the reservations on a server."""
        st, en, dm, k = self._buffers(server_id)
        return st[:k], en[:k], dm[:k]

    def capacity_units(self, server_id: str) -> np.ndarray:
        self._buffers(server_id)
        return self._caps[server_id]

    def vms_on(self, server_id: str) -> list[str]:
        return list(self._vms.get(server_id, []))

    def used_servers(self) -> list[str]:
        return [s.instance_id for s in self.pool if self._k.get(s.instance_id, 0) > 0]

    def usage_at(self, server_id: str, t: int) -> tuple[Fraction, ...]:
        st, en, dm, k = self._buffers(server_id)
        use = np.zeros(self.l, dtype=np.int64)
        for i in range(k):
            if st[i] <= t < en[i]:
                use += dm[i]
        return tuple(Fraction(int(u), QUANTUM) for u in use)

    def usage_integral(self, server_id: str) -> tuple[Fraction, ...]:
        """Sum of demand x duration over the server's bounded reservations."""
        st, en, dm, k = self._buffers(server_id)
        acc = [Fraction(0)] * self.l
        for i in range(k):
            if en[i] == END:
                raise ContractViolation("usage integral of an unbounded reservation is infinite")
            for q in range(self.l):
                acc[q] += Fraction(int(dm[i, q]), QUANTUM) * int(en[i] - st[i])
        return tuple(acc)


def can_accommodate(timeline: ReservationTimeline, server_id: str, vm: VmRequest) -> bool:
    return timeline.can_accommodate(server_id, vm)


def reserve(timeline: ReservationTimeline, server_id: str, vm: VmRequest) -> ReservationTimeline:
    return timeline.reserve(server_id, vm)


@dataclass(frozen=True)
class Violation:
    kind: str               # "unassigned" | "duplicate" | "unknown_vm" | "unknown_server" | "capacity"
    vm_id: str | None = None
    server_id: str | None = None
    time: int | None = None
    dimension: str | None = None
    overload: Fraction | None = None


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple[Violation, ...] = ()

    def __bool__(self):
        return self.ok


def validate_allocation(instance: ProblemInstance,
                        alloc: Allocation | Iterable[tuple[str, str]]) -> ValidationReport:
    """Check totality and the capacity constraint at every instant.

    Capacity is verified with an exact sweep over start/end events (ends
    processed before starts at the same instant), independent of the
    event-point kernels used by the solvers.
    """
    pairs = list(alloc.items()) if isinstance(alloc, Allocation) else list(alloc)
    violations: list[Violation] = []
    known_vm = {v.id: v for v in instance.vms}
    known_srv = {s.instance_id: s for s in instance.pool}
    seen: dict[str, str] = {}
    for vm_id, sid in pairs:
        if vm_id not in known_vm:
            violations.append(Violation("unknown_vm", vm_id=vm_id, server_id=sid))
            continue
        if sid not in known_srv:
            violations.append(Violation("unknown_server", vm_id=vm_id, server_id=sid))
            continue
        if vm_id in seen:
            violations.append(Violation("duplicate", vm_id=vm_id, server_id=sid))
            continue
        seen[vm_id] = sid
    for v in instance.vms:
        if v.id not in seen:
            violations.append(Violation("unassigned", vm_id=v.id))

    groups: dict[str, list[VmRequest]] = {}
    for vm_id, sid in seen.items():
        groups.setdefault(sid, []).append(known_vm[vm_id])
    for sid, vms in groups.items():
        cap = known_srv[sid].stype.capacity
        events = []
        for v in vms:
            events.append((v.arrival, 1, v))
            if v.window.bounded:
                events.append((v.window.end, 0, v))
        events.sort(key=lambda ev: (ev[0], ev[1]))
        use = [Fraction(0)] * len(cap)
        i = 0
        while i < len(events):
            t = events[i][0]
            while i < len(events) and events[i][0] == t:
                _, kind, v = events[i]
                sign = 1 if kind == 1 else -1
                for q, dq in enumerate(v.demand):
                    use[q] += sign * dq
                i += 1
            for q, (u, c) in enumerate(zip(use, cap)):
                if u > c:
                    violations.append(Violation("capacity", server_id=sid, time=t,
                                                dimension=instance.dimensions[q], overload=u - c))
    return ValidationReport(not violations, tuple(violations))
