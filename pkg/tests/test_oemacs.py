import itertools
import random

import numpy as np
import pytest

from cdbp.model import (
    ContractViolation,
    ProblemInstance,
    ReservationTimeline,
    ServerPool,
    ServerType,
    VmRequest,
    validate_allocation,
)
from cdbp.oemacs import (
    AcoParams,
    feasible_servers,
    heuristic_info,
    oemacs_plus_solve,
    overload_ratio,
    pheromone_delta,
    pheromone_update,
    solution_objective,
)
from cdbp.workloads import SyntheticSpec, synthetic_instance


def _timeline(cap, placed):
    pool = ServerPool.from_counts([(ServerType.make("a", cap), 2)])
    tl = ReservationTimeline(pool, len(cap))
    for v in placed:
        tl.reserve("a-0", v)
    return tl


def _slacks_dense(cap, placed, vm):
    """Window-averaged remaining minus demand, normalized, by dense integer scan."""
    a, e = vm.arrival, vm.window.end
    rem = []
    for q, c in enumerate(cap):
        tot = 0.0
        for t in range(a, e):
            tot += c - sum(float(v.demand[q]) for v in placed if v.window.contains(t))
        rem.append(tot / (e - a))
    return [(r - float(d)) / c for r, d, c in zip(rem, vm.demand, cap)]


def _eta_oracle(s):
    pairs = list(itertools.combinations(s, 2))
    imb = sum(abs(x - y) for x, y in pairs) / len(pairs) if pairs else 0.0
    return (1 - imb) / (sum(abs(x) for x in s) / len(s) + 1)


def test_heuristic_hand_value():
    tl = _timeline((10, 10), [VmRequest.make("old", 0, 10, (4, 2))])
    vm = VmRequest.make("new", 0, 10, (2, 2))
    assert heuristic_info(vm, "a-0", tl) == pytest.approx(0.8 / 1.5)
    assert overload_ratio("a-0", vm, tl) == pytest.approx(1.0)


def test_heuristic_perfect_fit_and_balanced():
    tl = _timeline((10, 10), [VmRequest.make("old", 0, 10, (4, 2))])
    assert heuristic_info(VmRequest.make("fit", 0, 10, (6, 8)), "a-0", tl) == pytest.approx(1.0)
    assert overload_ratio("a-0", VmRequest.make("fit", 0, 10, (6, 8)), tl) == pytest.approx(0.0)
    # equal slack 0.3 in both dimensions
    assert heuristic_info(VmRequest.make("eq", 0, 10, (3, 5)), "a-0", tl) == pytest.approx(1 / 1.3)


def test_overload_of_zero_demand_on_empty_server():
    tl = _timeline((16, 32, 160), [])
    assert overload_ratio("a-1", VmRequest.make("z", 0, 5, (0, 0, 0)), tl) == pytest.approx(3.0)


def test_heuristic_rejects_infeasible_server():
    tl = _timeline((10, 10), [VmRequest.make("old", 0, 10, (9, 2))])
    with pytest.raises(ContractViolation):
        heuristic_info(VmRequest.make("new", 5, 10, (2, 2)), "a-0", tl)


def test_heuristic_matches_dense_oracle():
    rng = random.Random(8)
    for _ in range(200):
        l = rng.randint(1, 3)
        cap = tuple(rng.randint(8, 20) for _ in range(l))
        placed = []
        tl = _timeline(cap, [])
        for k in range(rng.randint(0, 5)):
            v = VmRequest.make(f"p{k}", rng.randint(0, 20), rng.randint(1, 15),
                               tuple(rng.randint(0, 12) / 4 for _ in range(l)))
            if tl.can_accommodate("a-0", v):
                tl.reserve("a-0", v)
                placed.append(v)
        vm = VmRequest.make("x", rng.randint(0, 20), rng.randint(1, 15), tuple(rng.randint(0, 12) / 4 for _ in range(l)))
        if not tl.can_accommodate("a-0", vm):
            continue
        s = _slacks_dense(cap, placed, vm)
        assert heuristic_info(vm, "a-0", tl) == pytest.approx(_eta_oracle(s))
        assert overload_ratio("a-0", vm, tl) == pytest.approx(sum(abs(x) for x in s))


def test_feasible_servers():
    tl = _timeline((10,), [VmRequest.make("old", 0, 10, (8,))])
    assert feasible_servers(VmRequest.make("x", 5, 3, (3,)), tl) == {"a-1"}
    assert feasible_servers(VmRequest.make("y", 10, 3, (3,)), tl) == {"a-0", "a-1"}
    assert feasible_servers(VmRequest.make("z", 0, 3, (0,)), tl) == {"a-0", "a-1"}


def test_solution_objective():
    tl = _timeline((16, 32, 160), [])
    assert solution_objective([], tl) == 0
    assert solution_objective(["a-1"], tl) == pytest.approx(3.0)
    full = _timeline((4, 8), [VmRequest.make("f", 0, 5, (4, 8))])
    assert solution_objective(["a-0"], full) == pytest.approx(0.0)
    half = _timeline((4, 8), [VmRequest.make("f", 0, 5, (2, 8)), VmRequest.make("g", 10, 5, (4, 4))])
    assert solution_objective(["a-0"], half) == pytest.approx(0.5 * 0.5 + 0.5 * 0.5)


def test_pheromone_update():
    assert pheromone_delta(1, 0.0) == 2.0
    assert pheromone_delta(3, 0.5) < pheromone_delta(2, 0.5)
    tau = np.full((3, 4), 0.5)
    best = np.array([0, 0, 2])
    rem = np.array([0.0, 9.0, 1.0, 9.0])
    pheromone_update(tau, best, 2, rem, 0.1)
    assert tau[0, 1] == pytest.approx(0.45)
    assert tau[0, 0] == pytest.approx(0.45 + 0.1 * (0.5 + 1.0))
    assert tau[2, 2] == pytest.approx(0.45 + 0.1 * (0.5 + 0.5))


def test_params_validation():
    for bad in (dict(ant_count=0), dict(evaporation_rate=1.0), dict(exploitation_prob=2),
                dict(pheromone_init=0), dict(beta=-1)):
        with pytest.raises(ContractViolation):
            AcoParams(**bad)


def test_solver_is_feasible_and_seeded():
    inst = synthetic_instance(SyntheticSpec(40, seed=6))
    a = oemacs_plus_solve(inst, AcoParams(seed=2, iteration_limit=3))
    b = oemacs_plus_solve(inst, AcoParams(seed=2, iteration_limit=3))
    assert validate_allocation(inst, a.allocation).ok
    assert dict(a.allocation.items()) == dict(b.allocation.items())
    counts = [c for _, c in a.incumbent_trace]
    assert counts == sorted(counts, reverse=True) and counts[-1] == a.server_count
    assert not a.proved_optimal


def test_solver_fig1(fig1):
    assert oemacs_plus_solve(fig1).server_count == 2


def test_solver_empty():
    assert oemacs_plus_solve(synthetic_instance(SyntheticSpec(0))).server_count == 0


def test_solver_small_pool():
    pool = ServerPool.from_counts([(ServerType.make("a", (4,)), 3)])
    vms = tuple(VmRequest.make(f"v{j}", j, 6, (2,)) for j in range(6))
    inst = ProblemInstance(vms, pool, ("c",))
    out = oemacs_plus_solve(inst)
    assert validate_allocation(inst, out.allocation).ok and out.server_count == 3
