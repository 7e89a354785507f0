"""Temporal clustering of requests into clustered sets (CS) and a left set (LS).

A valid partition satisfies two conditions: every pair of windows inside one
CS overlaps, and no window of one CS overlaps a window of another CS.  VMs
that cannot be placed in any CS without breaking either condition go to LS.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .model import ContractViolation, VmRequest
from .kernels import END


@dataclass(frozen=True)
class ClusterPartition:
    scs: tuple[frozenset[str], ...]
    ls: frozenset[str]

    def canonical(self) -> tuple[tuple[str, ...], ...]:
        """CS contents with ordering removed, for comparing partitions."""
        return tuple(sorted(tuple(sorted(c)) for c in self.scs))

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.scs]


def _window_arrays(vms: Sequence[VmRequest]):
    starts = np.array([v.arrival for v in vms], dtype=np.int64)
    ends = np.array([END if not v.window.bounded else v.window.end for v in vms], dtype=np.int64)
    return starts, ends


def find_time_most_vms(vms: Sequence[VmRequest]) -> int:
    """Earliest instant covered by the largest number of windows.

    The active count only rises at arrivals, so arrivals are the only
    candidates.
    """
    vms = list(vms)
    if not vms:
        raise ContractViolation("find_time_most_vms needs at least one VM")
    starts, ends = _window_arrays(vms)
    pts = np.unique(starts)
    active = (starts[None, :] <= pts[:, None]) & (pts[:, None] < ends[None, :])
    counts = active.sum(axis=1)
    return int(pts[int(np.argmax(counts))])


def _overlap_any(starts, ends, idx, cs_idx):
    # for each VM in idx: does its window overlap any window in cs_idx?
    if len(idx) == 0 or len(cs_idx) == 0:
        return np.zeros(len(idx), dtype=bool)
    a, e = starts[idx][:, None], ends[idx][:, None]
    ca, ce = starts[cs_idx][None, :], ends[cs_idx][None, :]
    return ((a < ce) & (ca < e)).any(axis=1)


def mgc_cluster(vms: Iterable[VmRequest]) -> ClusterPartition:
    """Most-greedy clustering: repeatedly cut out the largest stabbed set."""
    vms = list(vms)
    starts, ends = _window_arrays(vms)
    remaining = np.arange(len(vms))
    scs: list[frozenset[str]] = []
    ls: list[str] = []
    while len(remaining):
        t = find_time_most_vms([vms[i] for i in remaining])
        inside = (starts[remaining] <= t) & (t < ends[remaining])
        cs = remaining[inside]
        scs.append(frozenset(vms[i].id for i in cs))
        remaining = remaining[~inside]
        hit = _overlap_any(starts, ends, remaining, cs)
        ls.extend(vms[i].id for i in remaining[hit])
        remaining = remaining[~hit]
    return ClusterPartition(tuple(scs), frozenset(ls))


def sweep_cluster(vms: Iterable[VmRequest]) -> ClusterPartition:
    """Earliest-arrival-first greedy clustering.

    Seeds each CS with the earliest remaining arrival, then scans the rest in
    arrival order, admitting a VM while the common intersection of the CS
    stays non-empty.
    """
    vms = list(vms)
    starts, ends = _window_arrays(vms)
    order = sorted(range(len(vms)), key=lambda i: (vms[i].arrival, vms[i].id))
    remaining = list(order)
    scs: list[frozenset[str]] = []
    ls: list[str] = []
    while remaining:
        seed = remaining[0]
        lo, hi = starts[seed], ends[seed]
        cs = [seed]
        for i in remaining[1:]:
            if starts[i] < hi and lo < ends[i]:
                lo, hi = max(lo, starts[i]), min(hi, ends[i])
                cs.append(i)
        scs.append(frozenset(vms[i].id for i in cs))
        chosen = set(cs)
        rest = np.array([i for i in remaining if i not in chosen], dtype=np.int64)
        hit = _overlap_any(starts, ends, rest, np.array(cs, dtype=np.int64))
        ls.extend(vms[i].id for i in rest[hit])
        remaining = [int(i) for i in rest[~hit]]
    return ClusterPartition(tuple(scs), frozenset(ls))


def verify_partition(vms: Iterable[VmRequest], partition: ClusterPartition) -> bool:
    """True iff the partition covers the VMs disjointly and meets both conditions."""
    by_id = {v.id: v for v in vms}
    seen: set[str] = set()
    for group in list(partition.scs) + [partition.ls]:
        for vid in group:
            if vid in seen or vid not in by_id:
                return False
            seen.add(vid)
    if seen != set(by_id):
        return False
    for cs in partition.scs:
        members = [by_id[i] for i in cs]
        for x in range(len(members)):
            for y in range(x + 1, len(members)):
                if not members[x].window.overlaps(members[y].window):
                    return False
    groups = [[by_id[i] for i in cs] for cs in partition.scs]
    for g1 in range(len(groups)):
        for g2 in range(g1 + 1, len(groups)):
            for v in groups[g1]:
                for w in groups[g2]:
                    if v.window.overlaps(w.window):
                        return False
    return True
