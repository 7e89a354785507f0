"""First-fit placement: FF, DDFF and their shuffled variants FF+ / DDFF+.

FF scans VMs in arrival order, DDFF in descending duration order; the plus
variants shuffle the server pool once, up front, with a seeded generator.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .model import (
    UNBOUNDED,
    Allocation,
    InsufficientPoolError,
    ProblemInstance,
    ServerPool,
)


@dataclass(frozen=True)
class HeuristicConfig:
    shuffle: bool = True
    sort_by_duration_desc: bool = False
    rng_seed: int = 0


FF = HeuristicConfig(shuffle=False)
FF_PLUS = HeuristicConfig(shuffle=True)
DDFF = HeuristicConfig(shuffle=False, sort_by_duration_desc=True)
DDFF_PLUS = HeuristicConfig(shuffle=True, sort_by_duration_desc=True)


def shuffle_order(m: int, seed: int) -> np.ndarray:
    """Seeded uniform permutation of ``range(m)``."""
    return np.random.default_rng(seed).permutation(m).astype(np.int64)


def shuffle_pool(pool: ServerPool, seed: int) -> ServerPool:
    perm = shuffle_order(len(pool), seed)
    return ServerPool(tuple(pool[int(i)] for i in perm))


def arrival_order(inst: ProblemInstance, subset=None) -> np.ndarray:
    idx = range(inst.n) if subset is None else subset
    return np.array(sorted(idx, key=lambda j: (inst.vms[j].arrival, inst.vms[j].id)), dtype=np.int64)


def duration_desc_order(inst: ProblemInstance, subset=None) -> np.ndarray:
    """Unbounded first, then longest first; ties broken by id."""
    idx = range(inst.n) if subset is None else subset

    def key(j):
        v = inst.vms[j]
        unbounded = v.duration == UNBOUNDED
        return (0 if unbounded else 1, 0 if unbounded else -int(v.duration), v.id)

    return np.array(sorted(idx, key=key), dtype=np.int64)


def empty_members(inst: ProblemInstance):
    m = max(inst.m, 1)
    members = np.zeros((m, max(inst.n, 1)), dtype=np.int64)
    nmem = np.zeros(m, dtype=np.int64)
    return members, nmem


def first_fit_assign(inst: ProblemInstance, order: np.ndarray, scan: np.ndarray,
                     members=None, nmem=None, assign=None) -> np.ndarray:
    """Run the first-fit kernel; optional ``members``/``nmem`` carry prior load.

    Returns the per-VM pool index array (-1 for VMs not in ``order``).
    """
    arr = inst.arrays
    if members is None:
        members, nmem = empty_members(inst)
    if assign is None:
        assign = np.full(inst.n, -1, dtype=np.int64)
    if len(order) == 0:
        return assign
    bad = kernels.first_fit(np.asarray(order, dtype=np.int64), np.asarray(scan, dtype=np.int64),
                            arr.caps, arr.starts, arr.ends, arr.demand, members, nmem, assign)
    if bad >= 0:
        raise InsufficientPoolError(inst.vms[bad].id)
    return assign


def _solve(inst: ProblemInstance, config: HeuristicConfig) -> Allocation:
    if inst.n == 0:
        return Allocation({})
    order = duration_desc_order(inst) if config.sort_by_duration_desc else arrival_order(inst)
    scan = shuffle_order(inst.m, config.rng_seed) if config.shuffle else np.arange(inst.m, dtype=np.int64)
    assign = first_fit_assign(inst, order, scan)
    return Allocation.from_indices(inst, assign)


def solve_first_fit(inst: ProblemInstance, config: HeuristicConfig = FF_PLUS) -> Allocation:
    """First fit in arrival order (FF, or FF+ when ``config.shuffle``)."""
    return _solve(inst, config)


def solve_ddff(inst: ProblemInstance, config: HeuristicConfig = DDFF_PLUS) -> Allocation:
    """Duration-descending first fit (DDFF, or DDFF+ when ``config.shuffle``)."""
    return _solve(inst, replace(config, sort_by_duration_desc=True))
