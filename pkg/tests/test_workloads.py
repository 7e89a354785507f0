import random
from fractions import Fraction

import numpy as np
import pytest

from cdbp.model import ContractViolation
from cdbp.workloads import (
    SERVER_CATALOG,
    VM_CATALOG,
    SwfFormatError,
    SyntheticSpec,
    default_pool,
    generate,
    ingest_swf,
    snap_to_catalog,
    synthetic_instance,
    write_swf,
)


def test_catalogs():
    assert [s.capacity for s in SERVER_CATALOG] == [(16, 32, 160), (8, 32, 160), (8, 64, 320)]
    assert len(VM_CATALOG) == 8
    assert VM_CATALOG[6] == (2, Fraction(61, 4), 32)
    # every VM type fits on every server type
    assert all(s.dominates(v) for s in SERVER_CATALOG for v in VM_CATALOG)


def test_generate_defaults_and_determinism():
    spec = SyntheticSpec(500, seed=4)
    a, b = generate(spec), generate(spec)
    assert a == b
    arr = np.array([v.arrival for v in a])
    dur = np.array([v.duration for v in a])
    assert arr.min() >= 0 and arr.max() <= 240
    assert abs(dur.mean() - 360) < 10 and abs(dur.std() - 60) < 10
    assert {v.demand for v in a} <= set(VM_CATALOG)
    assert [v.id for v in a[:3]] == ["vm0", "vm1", "vm2"]
    assert generate(SyntheticSpec(500, seed=5)) != a


def test_type_mix():
    vms = generate(SyntheticSpec(50, vm_type_mix=(0, 0, 1, 0, 0, 0, 0, 0)))
    assert {v.demand for v in vms} == {VM_CATALOG[2]}


@pytest.mark.parametrize("kw", [dict(n_vms=-1), dict(n_vms=1, arrival_b=0), dict(n_vms=1, duration_mu=0),
                                dict(n_vms=1, duration_sigma=-1), dict(n_vms=1, vm_type_mix=(1, 2))])
def test_spec_validation(kw):
    with pytest.raises(ContractViolation):
        SyntheticSpec(**kw)


def test_default_pool_is_blocked_by_type():
    pool = default_pool(3)
    assert [s.instance_id for s in pool] == ["s1-0", "s1-1", "s1-2", "s2-0", "s2-1", "s2-2", "s3-0", "s3-1", "s3-2"]
    assert synthetic_instance(SyntheticSpec(5)).m == 15


def test_snap_to_catalog():
    assert snap_to_catalog((1, Fraction(2), 4)) == (VM_CATALOG[0], False)
    typ, capped = snap_to_catalog((2, Fraction(10), 4))
    assert typ == VM_CATALOG[6] and not capped
    typ, capped = snap_to_catalog((64, Fraction(1), 4))
    assert capped and all(t <= c for t, c in zip(typ, (8, 30.5, 160)))


def _jobs(valid, invalid, seed=0):
    rng = random.Random(seed)
    jobs, t = [], 0
    for j in range(valid + invalid):
        t += rng.randint(0, 30)
        if j < invalid:
            jobs.append((j + 1, t, -1, 2, 1024, 1))
        else:
            jobs.append((j + 1, t, rng.randint(10, 900), rng.choice([1, 2, 4]), rng.choice([-1, 2048, 6000])))
    rng.shuffle(jobs)
    return jobs


def test_ingest_limit_and_report(tmp_path):
    path = tmp_path / "trace.swf"
    write_swf(path, _jobs(600, 50))
    vms, report = ingest_swf(path, limit=500)
    assert len(vms) == 500 and report.emitted == 500
    assert report.dropped == {"missing duration": 50}
    assert report.truncated == 100 and report.consistent()
    assert min(v.arrival for v in vms) == 0
    assert all(v.demand in VM_CATALOG for v in vms)


def test_ingest_field_mapping(tmp_path):
    path = tmp_path / "one.swf"
    write_swf(path, [(7, 100, 50, 4, 15360, 1), (8, 130, 20, 1, -1, 1), (9, 140, 20, 1, 100, 0)])
    vms, report = ingest_swf(path)
    assert [v.id for v in vms] == ["job7", "job8"]
    assert (vms[0].arrival, vms[0].duration, vms[0].demand) == (0, 50, VM_CATALOG[2])
    assert (vms[1].arrival, vms[1].demand) == (30, VM_CATALOG[0])
    assert report.dropped == {"not completed": 1}
    vms, _ = ingest_swf(path, completed_only=False)
    assert len(vms) == 3


def test_ingest_errors(tmp_path):
    empty = tmp_path / "empty.swf"
    empty.write_text("; header only\n")
    with pytest.raises(SwfFormatError):
        ingest_swf(empty)
    short = tmp_path / "short.swf"
    short.write_text("1 2 3\n")
    with pytest.raises(SwfFormatError):
        ingest_swf(short)
    with pytest.raises(SwfFormatError):
        ingest_swf(tmp_path / "missing.swf")
