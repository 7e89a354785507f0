import random

import pytest
from hypothesis import given, settings, strategies as st

from cdbp.clustering import (
    ClusterPartition,
    find_time_most_vms,
    mgc_cluster,
    sweep_cluster,
    verify_partition,
)
from cdbp.model import ContractViolation, VmRequest


def _ids(*k):
    return frozenset(f"vm{i}" for i in k)


def test_fig2_partition(fig2_vms):
    assert find_time_most_vms(fig2_vms) == 40
    p = mgc_cluster(fig2_vms)
    assert p.scs == (_ids(4, 5, 6, 7), _ids(1, 2))
    assert p.ls == _ids(3)
    assert verify_partition(fig2_vms, p)


def test_find_time_prefers_earliest_of_ties():
    vms = [VmRequest.make("a", 0, 2, (1,)), VmRequest.make("b", 5, 2, (1,))]
    assert find_time_most_vms(vms) == 0
    with pytest.raises(ContractViolation):
        find_time_most_vms([])


def test_verify_rejects_bad_partitions(fig2_vms):
    good = mgc_cluster(fig2_vms)
    assert not verify_partition(fig2_vms, ClusterPartition(good.scs, frozenset()))
    # vm1 and vm3 do not overlap, so they cannot share a CS
    assert not verify_partition(fig2_vms, ClusterPartition((_ids(1, 3), _ids(2), _ids(4, 5, 6, 7)), frozenset()))
    # vm3 overlaps the first CS, so it cannot be a CS of its own
    assert not verify_partition(fig2_vms, ClusterPartition((_ids(4, 5, 6, 7), _ids(1, 2), _ids(3)), frozenset()))


def _brute_max_stab(vms):
    pts = {v.arrival for v in vms}
    return max(sum(v.window.contains(t) for v in vms) for t in pts)


windows = st.tuples(st.integers(0, 40), st.one_of(st.none(), st.integers(1, 25)))


@settings(max_examples=300, deadline=None)
@given(st.lists(windows, min_size=1, max_size=14))
def test_partitions_are_valid_and_agree(ws):
    vms = [VmRequest.make(f"v{i}", a, d, (1,)) for i, (a, d) in enumerate(ws)]
    mgc, sweep = mgc_cluster(vms), sweep_cluster(vms)
    assert verify_partition(vms, mgc)
    assert verify_partition(vms, sweep)
    # the first MGC cluster is a maximum stabbed set
    assert len(mgc.scs[0]) == _brute_max_stab(vms)
    assert (len(mgc.ls) == 0) == (len(sweep.ls) == 0)
    if not mgc.ls:
        assert mgc.canonical() == sweep.canonical()


def test_chained_groups_have_empty_leftover():
    rng = random.Random(5)
    vms, t = [], 0
    for g in range(6):
        c = t + 20
        for _ in range(rng.randint(1, 5)):
            a = rng.randint(t, c)
            vms.append(VmRequest.make(f"v{len(vms)}", a, rng.randint(c + 1, c + 15) - a, (1,)))
        t = c + 16
    assert mgc_cluster(vms).ls == frozenset()
    assert len(mgc_cluster(vms).scs) == 6
