"""Exact anytime branch and bound, its lower bound, and a brute-force oracle.

The search itself is :func:`cdbp.kernels.bb_search`; this module prepares the
item order, bound tables and DDFF+ incumbent, then runs the kernel in short
node-limited slices so the wall clock can be checked between them.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from . import kernels
from .heuristics import duration_desc_order, empty_members, shuffle_order
from .kernels import END
from .model import (
    Allocation,
    ContractViolation,
    InsufficientPoolError,
    ProblemInstance,
    ReservationTimeline,
    ServerType,
    VmRequest,
    count_servers,
    to_units,
)

VM_ORDERS = ("volume_desc", "duration_desc", "input")


class InfeasibleError(InsufficientPoolError):
    """Every branch exhausts the finite pool."""


@dataclass(frozen=True)
class BbConfig:
    time_limit: float = 1000.0
    vm_order: str = "volume_desc"
    symmetry_breaking: bool = True
    pruning: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ContractViolation("time_limit must be positive")
        if self.vm_order not in VM_ORDERS:
            raise ContractViolation(f"vm_order must be one of {VM_ORDERS}")


@dataclass
class SolveOutcome:
    allocation: Allocation
    server_count: int
    proved_optimal: bool
    elapsed: float
    incumbent_trace: list[tuple[float, int]] = field(default_factory=list)


# --------------------------------------------------------------------------
# lower bound
# --------------------------------------------------------------------------


def _cover(total: np.ndarray, caps: np.ndarray) -> int:
    """Fewest servers (any mix of types) whose summed capacity covers ``total``."""
    if not (total > 0).any():
        return 0
    T = caps.shape[0]
    res = milp(np.ones(T), integrality=np.ones(T),
               constraints=LinearConstraint(caps.T.astype(float), lb=total.astype(float)),
               bounds=Bounds(0, np.inf))
    if res.status != 0:
        # fall back to the per-dimension ratio bound
        return int(max(math.ceil(total[q] / caps[:, q].max()) for q in range(len(total))))
    return int(round(res.fun))


def _pair_fits(dem: np.ndarray, caps: np.ndarray) -> np.ndarray:
    """``ok[i, j]``: items i and j fit together on at least one type."""
    s = dem[:, None, :] + dem[None, :, :]
    return (s[:, :, None, :] <= caps[None, None, :, :]).all(axis=3).any(axis=2)


def _static_bound(dem: np.ndarray, caps: np.ndarray) -> int:
    """Bound for items that are all simultaneously active."""
    k = dem.shape[0]
    if k == 0:
        return 0
    ok = _pair_fits(dem, caps)
    np.fill_diagonal(ok, False)
    isolated = ~ok.any(axis=1)
    b1 = int(isolated.sum()) + _cover(dem[~isolated].sum(axis=0), caps)
    # greedy clique of pairwise incompatible items
    order = np.argsort(-dem.sum(axis=1) if dem.size else np.zeros(0), kind="stable")
    clique: list[int] = []
    for i in order:
        if all(not ok[i, j] for j in clique):
            clique.append(int(i))
    return max(b1, len(clique))


def _maximal_instants(starts: np.ndarray, ends: np.ndarray) -> list[int]:
    """Arrival instants whose active set is not contained in a later one."""
    pts = np.unique(starts)
    out = []
    for i, t in enumerate(pts):
        nxt = pts[i + 1] if i + 1 < len(pts) else END
        # a departure in (t, nxt] means the active set at t is maximal
        if ((ends > t) & (ends <= nxt)).any() or nxt == END:
            out.append(int(t))
    return out


def _bound_arrays(starts, ends, dem, caps) -> int:
    best = 0
    for t in _maximal_instants(starts, ends):
        act = (starts <= t) & (t < ends)
        best = max(best, _static_bound(dem[act], caps))
    return best


def lower_bound(remaining_vms: Iterable[VmRequest], server_types: Sequence[ServerType],
                timeline_state: ReservationTimeline | None = None) -> int:
    """Admissible bound on the additional servers the remaining VMs need.

    At every maximal arrival instant the active VMs must be hosted
    simultaneously: items that cannot share any server type with another
    active item each take a server, and the rest need at least the smallest
    integer mix of server types covering their summed demand.  A pairwise
    incompatible clique gives a second bound.  Servers already in use in
    ``timeline_state`` may absorb some of that need, so they are subtracted.
    """
    vms = list(remaining_vms)
    if not vms or not server_types:
        return 0
    caps = np.array([to_units(t.capacity) for t in server_types], dtype=np.int64)
    starts = np.array([v.arrival for v in vms], dtype=np.int64)
    ends = np.array([END if not v.window.bounded else v.window.end for v in vms], dtype=np.int64)
    dem = np.array([to_units(v.demand) for v in vms], dtype=np.int64)
    b = _bound_arrays(starts, ends, dem, caps)
    if timeline_state is not None:
        b -= len(timeline_state.used_servers())
    return max(b, 0)


# --------------------------------------------------------------------------
# exhaustive oracle
# --------------------------------------------------------------------------


def _fits_oracle(placed: list[VmRequest], vm: VmRequest, cap) -> bool:
    # usage is piecewise constant and only rises at starts
    group = placed + [vm]
    for t in {v.arrival for v in group}:
        for q in range(len(cap)):
            if sum((v.demand[q] for v in group if v.window.contains(t)), Fraction(0)) > cap[q]:
                return False
    return True


def exhaustive_optimal(instance: ProblemInstance) -> int:
    """Minimum server count by enumerating server subsets and assignments.

    Refuses instances with more than 10 VMs or 6 pool servers.
    """
    if instance.n > 10 or instance.m > 6:
        raise ContractViolation("exhaustive_optimal is limited to n <= 10 and m <= 6")
    if instance.n == 0:
        return 0
    vms = list(instance.vms)
    pool = list(instance.pool)
    for size in range(1, len(pool) + 1):
        seen = set()
        for subset in itertools.combinations(range(len(pool)), size):
            key = tuple(sorted(pool[i].stype.type_id for i in subset))
            if key in seen:
                continue
            seen.add(key)
            caps = [pool[i].stype.capacity for i in subset]
            bins: list[list[VmRequest]] = [[] for _ in subset]

            def place(j: int) -> bool:
                if j == len(vms):
                    return all(bins)
                for b in range(len(bins)):
                    if not bins[b] and any(not bins[c] and caps[c] == caps[b] for c in range(b)):
                        continue
                    if _fits_oracle(bins[b], vms[j], caps[b]):
                        bins[b].append(vms[j])
                        if place(j + 1):
                            return True
                        bins[b].pop()
                return False

            if place(0):
                return size
    raise InfeasibleError(vms[0].id, "pool cannot host every request")


# --------------------------------------------------------------------------
# branch and bound
# --------------------------------------------------------------------------


def _item_order(inst: ProblemInstance, idx: list[int], how: str, static: bool) -> list[int]:
    arr = inst.arrays
    if how == "input":
        return list(idx)
    if how == "duration_desc":
        return [int(j) for j in duration_desc_order(inst, idx)]
    horizon = arr.horizon
    caps = arr.type_caps.max(axis=0).astype(float)
    caps[caps == 0] = 1.0

    def key(j):
        vol = float((arr.demand[j] / caps).sum())
        if not static:
            vol *= float(min(arr.ends[j], horizon) - arr.starts[j])
        return (-vol, tuple(-arr.demand[j]), int(arr.starts[j]), int(arr.ends[j]), inst.vms[j].id)

    return sorted(idx, key=key)


def _dominance(type_caps: np.ndarray, avail: np.ndarray, n: int) -> np.ndarray:
    """``dom[u, t]``: never open a fresh ``t`` while a ``u`` is still available.

    Identical types are opened in index order.  Strict dominance is only
    safe when ``u`` can never run out, i.e. it has at least one instance per
    item; otherwise saving the bigger server for a later item may matter.
    """
    T = type_caps.shape[0]
    dom = np.zeros((T, T), dtype=np.bool_)
    for u in range(T):
        for t in range(T):
            if u != t and (type_caps[u] >= type_caps[t]).all():
                if (type_caps[u] == type_caps[t]).all():
                    dom[u, t] = u < t
                else:
                    dom[u, t] = avail[u] >= n
    return dom


def _type_preference(dem: np.ndarray, type_caps: np.ndarray) -> np.ndarray:
    # per item: fitting types, the ones that could hold most copies first
    n, T = dem.shape[0], type_caps.shape[0]
    pref = np.full((n, T), -1, dtype=np.int64)
    safe = np.where(type_caps > 0, type_caps, 1)
    for d in range(n):
        keys = []
        for t in range(T):
            if (dem[d] <= type_caps[t]).all():
                share = dem[d] / safe[t]
                keys.append((float(share.max()), float(share.sum()), t))
        keys.sort()
        for r, (_, _, t) in enumerate(keys):
            pref[d, r] = t
    return pref


def _peak_total(starts, ends, dem) -> np.ndarray:
    l = dem.shape[1]
    peak = np.zeros(l, dtype=np.int64)
    for t in np.unique(starts):
        act = (starts <= t) & (t < ends)
        peak = np.maximum(peak, dem[act].sum(axis=0))
    return peak


_WARM = False


def warmup() -> None:
    """Compile the search kernels on a toy instance (no-op without numba)."""
    global _WARM
    if _WARM:
        return
    _WARM = True
    from .model import ServerPool
    st = ServerType.make("w", (2, 2))
    vms = [VmRequest.make(f"v{i}", i, 2, (1, 1)) for i in range(3)]
    inst = ProblemInstance(tuple(vms), ServerPool.from_counts([(st, 3)]), ("a", "b"))
    bb_solve(inst, BbConfig(time_limit=5.0), _warm=False)
    bb_solve(inst.with_vms([VmRequest.make(f"v{i}", 0, 2, (1, 1)) for i in range(3)]),
             BbConfig(time_limit=5.0), _warm=False)


def bb_solve(instance: ProblemInstance, config: BbConfig = BbConfig(),
             free_servers: Sequence[int] = (), on_incumbent: Callable[[float, Allocation], None] | None = None,
             initial: Allocation | None = None, _warm: bool = True) -> SolveOutcome:
    """Branch and bound over VM -> server assignments with a time limit.

    ``free_servers`` are pool indices that are already paid for: they start
    open and empty and cost nothing extra (used by DCBB to reuse servers of
    other, time-disjoint clusters).  ``on_incumbent`` is called with the
    elapsed time and allocation whenever the incumbent improves.
    ``initial`` is a known feasible allocation used as the starting
    incumbent when it beats DDFF+.
    """
    if _warm:
        warmup()
    t0 = time.perf_counter()
    deadline = t0 + config.time_limit
    n = instance.n
    if n == 0:
        return SolveOutcome(Allocation({}), 0, True, 0.0, [(0.0, 0)])
    arr = instance.arrays
    l = arr.demand.shape[1]
    free = [int(s) for s in free_servers]
    n_free = len(free)
    T = arr.type_caps.shape[0]
    free_set = set(free)
    rest_by_type: list[list[int]] = [[] for _ in range(T)]
    for s in range(instance.m):
        if s not in free_set:
            rest_by_type[int(arr.server_type[s])].append(s)
    avail = np.array([len(r) for r in rest_by_type], dtype=np.int64)
    type_caps = arr.type_caps

    static = bool(arr.starts.max() < arr.ends.min())
    order = _item_order(instance, list(range(n)), config.vm_order, static)
    starts = np.ascontiguousarray(arr.starts[order])
    ends = np.ascontiguousarray(arr.ends[order])
    dem = np.ascontiguousarray(arr.demand[order])
    for d in range(n):
        usable = [t for t in range(T) if avail[t] > 0] + [int(arr.server_type[s]) for s in free]
        if not any((dem[d] <= type_caps[t]).all() for t in usable):
            raise InfeasibleError(instance.vms[order[d]].id)

    present = [t for t in range(T) if avail[t] > 0 or any(arr.server_type[s] == t for s in free)]
    lb_root = _bound_arrays(starts, ends, dem, type_caps[present]) if present else 0
    lb_root = max(lb_root, n_free)
    same_prev = np.zeros(n, dtype=np.bool_)
    if config.symmetry_breaking:
        for d in range(1, n):
            same_prev[d] = (starts[d] == starts[d - 1] and ends[d] == ends[d - 1]
                            and (dem[d] == dem[d - 1]).all())
    suffix = np.zeros((n + 1, l), dtype=np.int64)
    sufmin = np.full((n + 1, l), np.iinfo(np.int64).max // 4, dtype=np.int64)
    for d in range(n - 1, -1, -1):
        suffix[d] = suffix[d + 1] + dem[d]
        sufmin[d] = np.minimum(sufmin[d + 1], dem[d])
    peak = _peak_total(starts, ends, dem)
    maxcap = type_caps[present].max(axis=0) if present else np.ones(l, dtype=np.int64)
    maxcap = np.maximum(maxcap, 1)
    if not config.pruning:
        suffix[:] = 0
        peak[:] = 0
        lb_root = n_free

    M = n_free + n
    ctl = np.zeros(kernels.CTL_SIZE, dtype=np.int64)
    st_srv = np.full(n, -1, dtype=np.int64)
    st_new = np.zeros(n, dtype=np.int64)
    st_cursor = np.zeros(n, dtype=np.int64)
    st_ncand = np.zeros(n, dtype=np.int64)
    st_cand = np.zeros((n, M + T), dtype=np.int64)
    scores = np.zeros(M + T, dtype=np.float64)
    srv_type = np.zeros(M, dtype=np.int64)
    type_used = np.zeros(T, dtype=np.int64)
    load = np.zeros((M, l), dtype=np.int64)
    members = np.zeros((M, n), dtype=np.int64)
    nmem = np.zeros(M, dtype=np.int64)
    capsum = np.zeros(l, dtype=np.int64)
    best_srv = np.full(n, -1, dtype=np.int64)
    best_type = np.zeros(M, dtype=np.int64)
    for s, g in enumerate(free):
        srv_type[s] = arr.server_type[g]
        capsum += type_caps[srv_type[s]]
    dom = _dominance(type_caps, avail, n)
    type_pref = _type_preference(dem, type_caps)

    def to_allocation(bs: np.ndarray, bt: np.ndarray) -> Allocation:
        nxt = [0] * T
        glob = {}
        out = {}
        for d in range(n):
            s = int(bs[d])
            if s < n_free:
                g = free[s]
            elif s in glob:
                g = glob[s]
            else:
                t = int(bt[s])
                g = rest_by_type[t][nxt[t]]
                nxt[t] += 1
                glob[s] = g
            out[instance.vms[order[d]].id] = instance.pool[g].instance_id
        return Allocation(out)

    # DDFF+ incumbent (free servers first, then the shuffled rest) or ``initial``
    best = M + 1
    starts_inc = [_ddff_incumbent(instance, free, config.seed)]
    if initial is not None:
        ix = instance.pool.index
        starts_inc.append(np.array([ix[initial[v.id]] for v in instance.vms], dtype=np.int64))
    inc = None
    for cand in starts_inc:
        if cand is None:
            continue
        remap: dict[int, int] = {g: s for s, g in enumerate(free)}
        srv = np.empty(n, dtype=np.int64)
        typ = best_type.copy()
        nxt_s = n_free
        for d in range(n):
            g = int(cand[order[d]])
            if g not in remap:
                remap[g] = nxt_s
                typ[nxt_s] = arr.server_type[g]
                nxt_s += 1
            srv[d] = remap[g]
        if nxt_s < best:
            best, inc = nxt_s, cand
            best_srv[:] = srv
            best_type[:] = typ
    trace: list[tuple[float, int]] = []
    incumbent_alloc = to_allocation(best_srv, best_type) if inc is not None else None
    if incumbent_alloc is not None:
        el = time.perf_counter() - t0
        trace.append((el, count_servers(incumbent_alloc)))
        if on_incumbent:
            on_incumbent(el, incumbent_alloc)

    ctl[kernels.CTL_OPENED] = n_free
    ctl[kernels.CTL_BEST] = best
    ctl[kernels.CTL_NEED_GEN] = 1
    status = kernels.BB_HIT_BOUND if best <= lb_root else kernels.BB_RUNNING
    slice_nodes = 2000
    improved = 0
    while status == kernels.BB_RUNNING:
        now = time.perf_counter()
        if now >= deadline:
            break
        status = kernels.bb_search(starts, ends, dem, type_caps, avail, dom, type_pref, same_prev,
                                   static, suffix, sufmin, peak, maxcap, lb_root,
                                   ctl, st_srv, st_new, st_cursor, st_ncand, st_cand, scores,
                                   srv_type, type_used, load, members, nmem, capsum,
                                   best_srv, best_type, slice_nodes)
        after = time.perf_counter()
        if ctl[kernels.CTL_IMPROVED] != improved:
            improved = ctl[kernels.CTL_IMPROVED]
            incumbent_alloc = to_allocation(best_srv, best_type)
            el = after - t0
            trace.append((el, count_servers(incumbent_alloc)))
            if on_incumbent:
                on_incumbent(el, incumbent_alloc)
        # aim for ~20 ms slices so the limit is honoured closely
        dt = after - now
        if dt < 0.01:
            slice_nodes = min(slice_nodes * 2, 1 << 24)
        elif dt > 0.04:
            slice_nodes = max(slice_nodes // 2, 64)

    if incumbent_alloc is None:
        raise InfeasibleError(instance.vms[order[0]].id, "no feasible allocation in the pool")
    elapsed = time.perf_counter() - t0
    proved = status in (kernels.BB_EXHAUSTED, kernels.BB_HIT_BOUND)
    count = count_servers(incumbent_alloc)
    if trace[-1][1] != count:
        trace.append((elapsed, count))
    return SolveOutcome(incumbent_alloc, count, proved, elapsed, trace)


def _ddff_incumbent(instance: ProblemInstance, free: list[int], seed: int):
    arr = instance.arrays
    free_set = set(free)
    rest = np.array([s for s in range(instance.m) if s not in free_set], dtype=np.int64)
    rest = rest[shuffle_order(len(rest), seed)] if len(rest) else rest
    scan = np.concatenate([np.array(free, dtype=np.int64), rest])
    members, nmem = empty_members(instance)
    assign = np.full(instance.n, -1, dtype=np.int64)
    order = duration_desc_order(instance)
    bad = kernels.first_fit(order, scan, arr.caps, arr.starts, arr.ends, arr.demand,
                            members, nmem, assign)
    return None if bad >= 0 else assign
