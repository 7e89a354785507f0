import random

import pytest

from cdbp.model import ProblemInstance, ServerPool, ServerType, VmRequest, as_amount


def rand_instance(rng: random.Random, n: int | None = None, max_n: int = 8, max_m: int = 5) -> ProblemInstance:
    """Small mixed instance: 1-3 dimensions, 1-3 server types, some unbounded VMs."""
    l = rng.choice([1, 2, 3])
    n_types = rng.randint(1, 3)
    types = [ServerType.make(f"t{i}", tuple(rng.randint(4, 12) for _ in range(l))) for i in range(n_types)]
    counts = [1] * n_types
    for _ in range(rng.randint(n_types, max(n_types, max_m)) - n_types):
        counts[rng.randrange(n_types)] += 1
    pool = ServerPool.from_counts(list(zip(types, counts)))
    n = rng.randint(1, max_n) if n is None else n
    top = [max(t.capacity[q] for t in types) for q in range(l)]
    vms = []
    for j in range(n):
        while True:
            d = tuple(rng.randint(0, int(top[q]) * 4) / 4 for q in range(l))
            if any(t.dominates(tuple(map(as_amount, d))) for t in types):
                break
        a = rng.choice([0, rng.randint(0, 20)])
        dur = rng.choice([None, rng.randint(1, 15), rng.randint(1, 15)])
        vms.append(VmRequest.make(f"v{j}", a, dur, d))
    return ProblemInstance(tuple(vms), pool, tuple(f"d{q}" for q in range(l)))


@pytest.fixture
def fig1():
    """Four VMs on capacity-10 servers: 4 servers if windows are ignored, 2 otherwise."""
    vms = (
        VmRequest.make("vm1", 0, 6, (6,)),
        VmRequest.make("vm2", 0, 3, (7,)),
        VmRequest.make("vm3", 3, 5, (7,)),
        VmRequest.make("vm4", 6, 4, (6,)),
    )
    pool = ServerPool.from_counts([(ServerType.make("c10", (10,)), 4)])
    return ProblemInstance(vms, pool, ("cpu",))


@pytest.fixture
def fig2_vms():
    spans = [(0, 10), (5, 15), (20, 32), (30, 50), (35, 55), (38, 60), (40, 52)]
    return [VmRequest.make(f"vm{i + 1}", a, e - a, (1,)) for i, (a, e) in enumerate(spans)]
