"""OEMACS+: ant colony system with order-exchange and migration local search.

Ants place VMs one by one on servers chosen by the ACS rule, weighing the
pheromone ``tau[vm, server]`` against a heuristic that prefers placements
leaving balanced, small normalized slack averaged over the VM's window.
The first iteration opens servers as needed to fix the server count ``m``;
every later iteration asks the ants to fit the VMs onto ``m - 1`` of the
best solution's servers, repairing overloads by local search.

The functions :func:`feasible_servers`, :func:`heuristic_info`,
:func:`overload_ratio`, :func:`solution_objective` and
:func:`pheromone_update` expose the individual formulas on a
:class:`~cdbp.model.ReservationTimeline`; the solver evaluates the same
formulas through :mod:`cdbp.kernels`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from . import kernels
from .bb import SolveOutcome, warmup
from .heuristics import DDFF_PLUS, solve_ddff, shuffle_order
from .kernels import END
from .model import (
    Allocation,
    ContractViolation,
    InsufficientPoolError,
    ProblemInstance,
    ReservationTimeline,
    VmRequest,
    count_servers,
    to_units,
    validate_allocation,
)


@dataclass(frozen=True)
class AcoParams:
    ant_count: int = 10
    iteration_limit: int = 5
    evaporation_rate: float = 0.1
    exploitation_prob: float = 0.9
    pheromone_init: float | None = None
    alpha: float = 1.0
    beta: float = 2.0
    seed: int = 0
    local_search_passes: int = 0

    def __post_init__(self):
        if self.ant_count < 1 or self.iteration_limit < 1:
            raise ContractViolation("ant_count and iteration_limit must be at least 1")
        if not 0 < self.evaporation_rate < 1:
            raise ContractViolation("evaporation_rate must be in (0, 1)")
        if not 0 <= self.exploitation_prob <= 1:
            raise ContractViolation("exploitation_prob must be in [0, 1]")
        if self.pheromone_init is not None and not self.pheromone_init > 0:
            raise ContractViolation("pheromone_init must be positive")
        if self.alpha < 0 or self.beta < 0:
            raise ContractViolation("alpha and beta must be non-negative")


# --------------------------------------------------------------------------
# formulas on a reservation timeline
# --------------------------------------------------------------------------


def _timeline_horizon(state: ReservationTimeline, extra: Iterable[VmRequest] = ()) -> int:
    h = 1
    for s in state.pool:
        st, en, _ = state.entries(s.instance_id)
        for a, e in zip(st, en):
            h = max(h, int(a) + 1, int(e) if e != END else 0)
    for v in extra:
        h = max(h, v.arrival + 1, int(v.window.end) if v.window.bounded else 0)
    return h


def _window(vm: VmRequest, horizon: int) -> tuple[int, int]:
    a = vm.arrival
    e = int(vm.window.end) if vm.window.bounded else max(horizon, a + 1)
    return a, e


def _mean_remaining(state: ReservationTimeline, server_id: str, a: int, e: int) -> np.ndarray:
    st, en, dm = state.entries(server_id)
    cap = state.capacity_units(server_id)
    out = np.zeros(len(cap), dtype=np.float64)
    kernels.mean_remaining_window(np.arange(len(st), dtype=np.int64), len(st), st, en, dm, cap, a, e, out)
    return out


def feasible_servers(vm: VmRequest, state: ReservationTimeline) -> set[str]:
    """Servers that keep enough of every resource at every instant of the window."""
    return {s.instance_id for s in state.pool if state.can_accommodate(s.instance_id, vm)}


def heuristic_info(vm: VmRequest, server_id: str, state: ReservationTimeline) -> float:
    """Desirability of placing ``vm`` on ``server_id``.

    With ``s_d`` the window-averaged remaining minus demand, normalized by
    capacity: ``(1 - mean_{pairs}|s_d - s_e|) / (mean_d |s_d| + 1)``.
    """
    if not state.can_accommodate(server_id, vm):
        raise ContractViolation(f"server {server_id} cannot accommodate VM {vm.id}")
    a, e = _window(vm, _timeline_horizon(state, [vm]))
    mr = _mean_remaining(state, server_id, a, e)
    cap = state.capacity_units(server_id).astype(np.float64)
    return float(kernels.eta_from_mean(mr, cap, to_units(vm.demand).astype(np.float64)))


def overload_ratio(server_id: str, vm: VmRequest, state: ReservationTimeline) -> float:
    """Summed absolute normalized slack over dimensions after placing ``vm``."""
    a, e = _window(vm, _timeline_horizon(state, [vm]))
    mr = _mean_remaining(state, server_id, a, e)
    cap = state.capacity_units(server_id).astype(np.float64)
    return float(kernels.over_from_mean(mr, cap, to_units(vm.demand).astype(np.float64)))


def _server_remaining(state: ReservationTimeline, server_id: str, horizon: int) -> float:
    st, en, dm = state.entries(server_id)
    cap = state.capacity_units(server_id)
    out = np.zeros(len(cap), dtype=np.float64)
    kernels.mean_remaining_active(np.arange(len(st), dtype=np.int64), len(st), st, en, dm, cap, horizon, out)
    return float((out / cap).sum())


def solution_objective(solution: Allocation | Iterable[str], state: ReservationTimeline) -> float:
    """Sum over used servers of the normalized remaining capacity.

    Each server's remaining is averaged over the union of its reservation
    windows (full capacity when empty).  ``solution`` is an allocation or an
    explicit collection of open server ids.
    """
    servers = solution.servers() if isinstance(solution, Allocation) else set(solution)
    horizon = _timeline_horizon(state)
    return sum(_server_remaining(state, s, horizon) for s in servers)


def pheromone_delta(server_count: int, normalized_remaining: float) -> float:
    """Deposit for a server of the global best: ``1/f1 + 1/(remaining + 1)``."""
    return 1.0 / server_count + 1.0 / (normalized_remaining + 1.0)


def pheromone_update(tau: np.ndarray, best_assign: np.ndarray, server_count: int,
                     remaining: np.ndarray, rho: float) -> np.ndarray:
    """Global update: evaporate everywhere, deposit on the best (vm, server) pairs.

    ``remaining[s]`` is the normalized remaining of pool server ``s`` in the
    global best.  Returns ``tau`` (updated in place).
    """
    tau *= 1.0 - rho
    for j, s in enumerate(best_assign):
        if s >= 0:
            tau[j, s] += rho * pheromone_delta(server_count, float(remaining[s]))
    return tau


# --------------------------------------------------------------------------
# solver
# --------------------------------------------------------------------------


def _remaining_per_server(arr, horizon, members, nmem, rows) -> np.ndarray:
    out = np.zeros(len(rows), dtype=np.float64)
    buf = np.zeros(arr.demand.shape[1], dtype=np.float64)
    for i, s in enumerate(rows):
        cap = arr.caps[s]
        kernels.mean_remaining_active(members[i], nmem[i], arr.starts, arr.ends, arr.demand, cap, horizon, buf)
        out[i] = (buf / cap).sum()
    return out


def _evaluate(arr, horizon, members, nmem, rows):
    """(server count, objective) of a slot assignment; unused slots are ignored."""
    rem = _remaining_per_server(arr, horizon, members, nmem, rows)
    used = nmem[: len(rows)] > 0
    return int(used.sum()), float(rem[used].sum()), rem


def oemacs_plus_solve(instance: ProblemInstance, params: AcoParams = AcoParams()) -> SolveOutcome:
    warmup()
    t0 = time.perf_counter()
    n = instance.n
    if n == 0:
        return SolveOutcome(Allocation({}), 0, False, 0.0, [(0.0, 0)])
    arr = instance.arrays
    horizon = arr.horizon
    rng = np.random.default_rng(params.seed)
    order = np.arange(n, dtype=np.int64)
    passes = params.local_search_passes or 4 * n

    ddff = count_servers(solve_ddff(instance, replace(DDFF_PLUS, rng_seed=params.seed)))
    tau0 = params.pheromone_init or 1.0 / (n * ddff)
    tau = np.full((n, instance.m), tau0, dtype=np.float64)

    best_assign = None
    best_key = None
    trace: list[tuple[float, int]] = []

    def consider(assign_pool: np.ndarray, count: int, f2: float):
        nonlocal best_assign, best_key
        key = (count, f2)
        if best_key is None or key < best_key:
            improved = best_key is None or count < best_key[0]
            best_assign, best_key = assign_pool.copy(), key
            if improved:
                trace.append((time.perf_counter() - t0, count))

    for it in range(params.iteration_limit):
        if it == 0:
            rows = shuffle_order(instance.m, params.seed)
            open_as_needed = True
        else:
            used_rows = np.unique(best_assign)
            if len(used_rows) <= 1:
                break
            members, nmem = _members_from(best_assign, used_rows, n)
            rem = _remaining_per_server(arr, horizon, members, nmem, used_rows)
            # drop the least utilised server of the best solution
            rows = np.delete(used_rows, int(np.argmax(rem)))
            open_as_needed = False
        caps = np.ascontiguousarray(arr.caps[rows])
        it_best = None
        for _ in range(params.ant_count):
            ant_order = order[rng.permutation(n)]
            u_exploit = rng.random(n)
            u_pick = rng.random(n)
            members = np.zeros((len(rows), n), dtype=np.int64)
            nmem = np.zeros(len(rows), dtype=np.int64)
            assign = np.full(n, -1, dtype=np.int64)
            sub_tau = np.ascontiguousarray(tau[:, rows])
            bad = kernels.ant_construct(ant_order, caps, arr.starts, arr.ends, arr.demand, sub_tau, tau0,
                                        params.evaporation_rate, params.exploitation_prob, params.alpha,
                                        params.beta, u_exploit, u_pick, open_as_needed, horizon,
                                        members, nmem, assign)
            tau[:, rows] = sub_tau
            if bad >= 0:
                raise InsufficientPoolError(instance.vms[bad].id)
            if not open_as_needed:
                ok = kernels.local_search(caps, arr.starts, arr.ends, arr.demand, horizon,
                                          members, nmem, assign, passes)
                if not ok:
                    continue
            count, f2, _ = _evaluate(arr, horizon, members, nmem, rows)
            if it_best is None or (count, f2) < it_best[0]:
                it_best = ((count, f2), rows[assign])
        if it_best is not None:
            consider(it_best[1], *it_best[0])
        # global update from the global best
        used_rows = np.unique(best_assign)
        members, nmem = _members_from(best_assign, used_rows, n)
        rem = np.zeros(instance.m, dtype=np.float64)
        rem[used_rows] = _remaining_per_server(arr, horizon, members, nmem, used_rows)
        pheromone_update(tau, best_assign, best_key[0], rem, params.evaporation_rate)

    alloc = Allocation.from_indices(instance, best_assign)
    report = validate_allocation(instance, alloc)
    if not report.ok:  # pragma: no cover - kernels keep every solution feasible
        raise RuntimeError(f"OEMACS+ produced an infeasible allocation: {report.violations[:3]}")
    count = count_servers(alloc)
    return SolveOutcome(alloc, count, False, time.perf_counter() - t0, trace)


def _members_from(assign_pool: np.ndarray, rows: np.ndarray, n: int):
    pos = {int(s): i for i, s in enumerate(rows)}
    members = np.zeros((len(rows), n), dtype=np.int64)
    nmem = np.zeros(len(rows), dtype=np.int64)
    for j, s in enumerate(assign_pool):
        i = pos[int(s)]
        members[i, nmem[i]] = j
        nmem[i] += 1
    return members, nmem
