"""Divide-and-conquer branch and bound.

VMs are split by :func:`cdbp.clustering.mgc_cluster` into time-disjoint
clustered sets plus a left set.  Each cluster is solved exactly (within its
share of the budget) by :func:`cdbp.bb.bb_solve`; because clusters never
overlap in time their solutions can share servers.  The left set is then
placed by DDFF+ against the merged reservations.

Merging per type (``merge_subsolutions``) is exact for a single server type.
With several types the per-type maxima can overshoot, so a coordination
pass re-solves each cluster with the servers of all other clusters offered
as free capacity, keeping any improvement.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import kernels
from .bb import BbConfig, SolveOutcome, bb_solve, warmup
from .clustering import ClusterPartition, mgc_cluster
from .heuristics import DDFF_PLUS, duration_desc_order, empty_members, shuffle_order, solve_ddff
from .model import (
    Allocation,
    ContractViolation,
    InsufficientPoolError,
    ProblemInstance,
    ServerPool,
    count_servers,
)

BUDGET_POLICIES = ("proportional_to_cluster_size", "equal")


@dataclass(frozen=True)
class DcbbConfig:
    total_time_budget: float = 50.0
    per_cluster_budget_policy: str = "proportional_to_cluster_size"
    seed: int = 0
    coordinate: bool = True
    first_pass_share: float = 0.6

    def __post_init__(self):
        if not self.total_time_budget > 0:
            raise ContractViolation("total_time_budget must be positive")
        if self.per_cluster_budget_policy not in BUDGET_POLICIES:
            raise ContractViolation(f"per_cluster_budget_policy must be one of {BUDGET_POLICIES}")
        if not 0 < self.first_pass_share <= 1:
            raise ContractViolation("first_pass_share must be in (0, 1]")


def merge_subsolutions(cluster_solutions: Sequence[Allocation], pool: ServerPool) -> Allocation:
    """Map each cluster's k-th server of a type onto the pool's k-th server of that type.

    Clusters must be pairwise disjoint in time, so the merged allocation
    needs, per type, only the maximum count over clusters.
    """
    ix = pool.index
    by_type: dict[str, list[str]] = {}
    for s in pool:
        by_type.setdefault(s.stype.type_id, []).append(s.instance_id)
    out: dict[str, str] = {}
    for alloc in cluster_solutions:
        local: dict[str, list[str]] = {}
        for sid in sorted(alloc.servers(), key=lambda x: ix.get(x, -1)):
            if sid not in ix:
                raise ContractViolation(f"server {sid} is not part of the pool")
            local.setdefault(pool[ix[sid]].stype.type_id, []).append(sid)
        remap = {}
        for tid, sids in local.items():
            if len(sids) > len(by_type[tid]):
                raise InsufficientPoolError(sids[-1], f"pool has too few servers of type {tid}")
            for k, sid in enumerate(sids):
                remap[sid] = by_type[tid][k]
        for vm, sid in alloc.items():
            if vm in out:
                raise ContractViolation(f"VM {vm} appears in two cluster solutions")
            out[vm] = remap[sid]
    return Allocation(out)


def _place_left(instance: ProblemInstance, base: Allocation, left: list[int], seed: int) -> Allocation:
    """DDFF+ for the left set on top of ``base``; used servers are scanned first."""
    if not left:
        return base
    arr = instance.arrays
    ix = instance.pool.index
    members, nmem = empty_members(instance)
    assign = np.full(instance.n, -1, dtype=np.int64)
    for j, v in enumerate(instance.vms):
        if v.id in base.assignments:
            s = ix[base[v.id]]
            members[s, nmem[s]] = j
            nmem[s] += 1
            assign[j] = s
    perm = shuffle_order(instance.m, seed)
    used = nmem[perm] > 0
    scan = np.concatenate([perm[used], perm[~used]])
    order = duration_desc_order(instance, left)
    bad = kernels.first_fit(order, scan, arr.caps, arr.starts, arr.ends, arr.demand,
                            members, nmem, assign)
    if bad >= 0:
        raise InsufficientPoolError(instance.vms[bad].id)
    return Allocation.from_indices(instance, assign)


def _cluster_ddff(sub: ProblemInstance, seed: int) -> Allocation | None:
    arr = sub.arrays
    members, nmem = empty_members(sub)
    assign = np.full(sub.n, -1, dtype=np.int64)
    bad = kernels.first_fit(duration_desc_order(sub), shuffle_order(sub.m, seed), arr.caps,
                            arr.starts, arr.ends, arr.demand, members, nmem, assign)
    if bad >= 0:
        return None
    return Allocation.from_indices(sub, assign)


def dcbb_solve(instance: ProblemInstance, config: DcbbConfig = DcbbConfig(),
               partition: ClusterPartition | None = None) -> SolveOutcome:
    """Cluster, solve clusters by BB, place the left set by DDFF+, merge.

    The budget covers clustering, every BB call and merging.  The incumbent
    trace records every complete solution that improves on the previous one,
    starting from DDFF+ on the whole instance.
    """
    warmup()
    t0 = time.perf_counter()
    deadline = t0 + config.total_time_budget
    if instance.n == 0:
        return SolveOutcome(Allocation({}), 0, True, 0.0, [(0.0, 0)])
    if partition is None:
        partition = mgc_cluster(instance.vms)
    vix = instance.vm_index
    clusters = sorted((sorted(c, key=vix.__getitem__) for c in partition.scs),
                      key=lambda c: (-len(c), vix[c[0]]))
    left = sorted(vix[v] for v in partition.ls)
    subs = [instance.with_vms(instance.vms[vix[v]] for v in c) for c in clusters]

    current: list[Allocation | None] = []
    for sub in subs:
        a = _cluster_ddff(sub, config.seed)
        current.append(None if a is None else merge_subsolutions([a], instance.pool))
    proved = [False] * len(subs)
    own = [0] * len(subs)
    best: dict = {"alloc": None, "count": None}
    trace: list[tuple[float, int]] = []

    def compose(parts: Sequence[Allocation | None], merge: bool) -> Allocation | None:
        # None while some cluster has no solution or the pool is too small
        if any(p is None for p in parts):
            return None
        try:
            base = merge_subsolutions(parts, instance.pool) if merge else _union(parts)
            return _place_left(instance, base, left, config.seed)
        except InsufficientPoolError:
            return None

    def offer(alloc: Allocation | None) -> None:
        if alloc is None:
            return
        c = count_servers(alloc)
        if best["count"] is None or c < best["count"]:
            best["alloc"], best["count"] = alloc, c
            trace.append((time.perf_counter() - t0, c))

    # whole-instance DDFF+ as the starting incumbent
    try:
        offer(solve_ddff(instance, replace(DDFF_PLUS, rng_seed=config.seed)))
    except InsufficientPoolError:
        pass
    offer(compose(current, True))

    # pass 1: independent clusters, merged per type
    multi = len(subs) > 1 and config.coordinate
    share = config.first_pass_share if multi else 1.0
    pass_end = t0 + share * config.total_time_budget
    for k, sub in enumerate(subs):
        budget = _budget(config, subs[k:], pass_end - time.perf_counter())
        if budget <= 0:
            break

        def on_inc(_el, alloc, k=k):
            parts = list(current)
            parts[k] = alloc
            offer(compose(parts, True))

        out = bb_solve(sub, BbConfig(time_limit=budget, seed=config.seed),
                       on_incumbent=on_inc, initial=current[k])
        if current[k] is None or count_servers(out.allocation) <= count_servers(current[k]):
            current[k] = out.allocation
        proved[k] = out.proved_optimal
        own[k] = out.server_count
    if all(p is not None for p in current):
        try:
            merged = merge_subsolutions(current, instance.pool)
            current = [Allocation({v: merged[v] for v in c}) for c in clusters]
        except InsufficientPoolError:
            pass
        offer(compose(current, False))
    else:
        multi = False

    # pass 2: re-solve each cluster with the other clusters' servers free
    if multi:
        changed = True
        while changed and time.perf_counter() < deadline:
            changed = False
            for k, sub in enumerate(subs):
                remaining = deadline - time.perf_counter()
                if remaining <= 0:
                    break
                others = set().union(*(current[i].servers() for i in range(len(subs)) if i != k))
                ix = instance.pool.index
                free = sorted(ix[s] for s in others)
                before = len(others | current[k].servers())
                budget = _budget(config, subs[k:], remaining)

                def on_inc2(_el, alloc, k=k):
                    parts = list(current)
                    parts[k] = alloc
                    offer(compose(parts, False))

                out = bb_solve(sub, BbConfig(time_limit=budget, seed=config.seed),
                               free_servers=free, on_incumbent=on_inc2, initial=current[k])
                if len(others | out.allocation.servers()) < before:
                    current[k] = out.allocation
                    changed = True
                    offer(compose(current, False))

    # pass 3: with no left set the exact merge is the smallest type multiset
    # every cluster packs into; search it while time remains
    merge_exact = len(subs) == 1 or len(instance.pool.types) == 1
    if not left and not merge_exact and best["count"] is not None:
        lb = max(c if pr else 1 for c, pr in zip(own, proved))
        found, complete = _multiset_merge(instance, subs, lb, best["count"] - 1, deadline, config.seed)
        if found is not None:
            offer(found)
        merge_exact = complete and all(proved)

    if best["alloc"] is None:
        # a finite pool too small for the cluster/left-set split: solve whole
        out = bb_solve(instance, BbConfig(time_limit=max(deadline - time.perf_counter(), 0.05),
                                          seed=config.seed))
        offer(out.allocation)
    alloc = best["alloc"]
    count = best["count"]
    elapsed = time.perf_counter() - t0
    # optimal only without a left set, with every cluster and the merge proved
    exact = not left and all(proved) and merge_exact
    return SolveOutcome(alloc, count, exact, elapsed, trace)


def _union(parts: Sequence[Allocation]) -> Allocation:
    out: dict[str, str] = {}
    for p in parts:
        out.update(p.assignments)
    return Allocation(out)


def _budget(config: DcbbConfig, pending: Sequence[ProblemInstance], remaining: float) -> float:
    if remaining <= 0:
        return 0.0
    if config.per_cluster_budget_policy == "equal":
        return remaining / len(pending)
    total = sum(s.n for s in pending)
    return remaining * pending[0].n / total


def _multiset_merge(instance: ProblemInstance, subs: Sequence[ProblemInstance], lo: int, hi: int,
                    deadline: float, seed: int) -> tuple[Allocation | None, bool]:
    """Smallest per-type server counts (total in ``[lo, hi]``) hosting every cluster.

    Per-cluster feasibility is monotone in the counts, so verdicts are
    cached in both directions.  Only proved infeasibility rejects a
    multiset; a timed-out check gives up.  Returns the merged allocation
    (or None) and whether the search was conclusive.
    """
    from .bb import InfeasibleError

    types = instance.pool.types
    by_type = {t.type_id: [s for s in instance.pool if s.stype.type_id == t.type_id] for t in types}
    limit = [len(by_type[t.type_id]) for t in types]
    feasible: list[list[tuple[tuple[int, ...], Allocation]]] = [[] for _ in subs]
    infeasible: list[list[tuple[int, ...]]] = [[] for _ in subs]

    def check(k: int, x: tuple[int, ...]):
        for y, a in feasible[k]:
            if all(yi <= xi for yi, xi in zip(y, x)):
                return a
        for y in infeasible[k]:
            if all(xi <= yi for yi, xi in zip(y, x)):
                return False
        remaining = deadline - time.perf_counter()
        if remaining <= 0:
            return None
        servers = [s for t, c in zip(types, x) for s in by_type[t.type_id][:c]]
        try:
            sub = ProblemInstance(subs[k].vms, ServerPool(tuple(servers)), instance.dimensions)
            out = bb_solve(sub, BbConfig(time_limit=remaining, seed=seed))
        except (InfeasibleError, ContractViolation):
            infeasible[k].append(x)
            return False
        feasible[k].append((x, out.allocation))
        return out.allocation

    def vectors(total: int, t: int):
        if t == len(types) - 1:
            if total <= limit[t]:
                yield (total,)
            return
        for c in range(min(total, limit[t]), -1, -1):
            for rest in vectors(total - c, t + 1):
                yield (c,) + rest

    for total in range(lo, hi + 1):
        for x in vectors(total, 0):
            parts = []
            for k in range(len(subs)):
                a = check(k, x)
                if a is None:
                    return None, False
                if a is False:
                    break
                parts.append(a)
            else:
                return _union(parts), True
    return None, True
