import random

import numpy as np
import pytest

from cdbp.heuristics import (
    DDFF,
    DDFF_PLUS,
    FF,
    FF_PLUS,
    HeuristicConfig,
    duration_desc_order,
    shuffle_order,
    solve_ddff,
    solve_first_fit,
)
from cdbp.model import (
    InsufficientPoolError,
    ProblemInstance,
    ReservationTimeline,
    ServerPool,
    ServerType,
    VmRequest,
    count_servers,
    validate_allocation,
)
from cdbp.workloads import SyntheticSpec, synthetic_instance

from conftest import rand_instance


def _oracle_first_fit(inst, order, scan):
    """First fit written against the reservation timeline only."""
    tl = ReservationTimeline(inst.pool, inst.dimensions)
    out = {}
    for j in order:
        v = inst.vms[j]
        for s in scan:
            sid = inst.pool[int(s)].instance_id
            if tl.can_accommodate(sid, v):
                tl.reserve(sid, v)
                out[v.id] = sid
                break
        else:
            raise InsufficientPoolError(v.id)
    return out


def test_fig1_first_fit_uses_two_servers(fig1):
    alloc = solve_first_fit(fig1, FF)
    assert count_servers(alloc) == 2
    assert alloc["vm1"] == alloc["vm4"]


def test_duration_order_puts_unbounded_first():
    pool = ServerPool.from_counts([(ServerType.make("a", (4,)), 3)])
    vms = (VmRequest.make("x", 0, 5, (1,)), VmRequest.make("y", 1, None, (1,)), VmRequest.make("z", 2, 9, (1,)))
    inst = ProblemInstance(vms, pool, ("c",))
    assert list(duration_desc_order(inst)) == [1, 2, 0]


def test_shuffle_is_seeded_permutation():
    a, b = shuffle_order(50, 3), shuffle_order(50, 3)
    assert np.array_equal(a, b)
    assert sorted(a) == list(range(50))
    assert not np.array_equal(a, shuffle_order(50, 4))


@pytest.mark.parametrize("config", [FF, FF_PLUS, DDFF, DDFF_PLUS], ids=["ff", "ff+", "ddff", "ddff+"])
def test_matches_timeline_oracle(config):
    rng = random.Random(11)
    for _ in range(60):
        inst = rand_instance(rng, max_n=12, max_m=8)
        if config.sort_by_duration_desc:
            order = duration_desc_order(inst)
        else:
            order = sorted(range(inst.n), key=lambda j: (inst.vms[j].arrival, inst.vms[j].id))
        scan = shuffle_order(inst.m, config.rng_seed) if config.shuffle else range(inst.m)
        try:
            expect = _oracle_first_fit(inst, order, scan)
        except InsufficientPoolError:
            with pytest.raises(InsufficientPoolError):
                solve_first_fit(inst, config)
            continue
        got = solve_first_fit(inst, config)
        assert dict(got.items()) == expect
        assert validate_allocation(inst, got).ok


def test_solve_ddff_forces_duration_order():
    inst = synthetic_instance(SyntheticSpec(40, seed=2))
    assert dict(solve_ddff(inst, FF).items()) == dict(solve_first_fit(inst, DDFF).items())


def test_empty_instance():
    inst = synthetic_instance(SyntheticSpec(0))
    assert count_servers(solve_first_fit(inst)) == 0


def test_heuristics_are_deterministic_for_a_seed():
    inst = synthetic_instance(SyntheticSpec(60, seed=1))
    cfg = HeuristicConfig(rng_seed=9)
    assert dict(solve_first_fit(inst, cfg).items()) == dict(solve_first_fit(inst, cfg).items())
