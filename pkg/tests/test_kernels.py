import json
import os
import subprocess
import sys

import numpy as np
import pytest

from cdbp import _jit, kernels
from cdbp.heuristics import arrival_order, empty_members, shuffle_order
from cdbp.workloads import SyntheticSpec, synthetic_instance

SCRIPT = """
import json
from cdbp import _jit
from cdbp.bb import BbConfig, bb_solve
from cdbp.heuristics import solve_ddff, solve_first_fit
from cdbp.oemacs import AcoParams, oemacs_plus_solve
from cdbp.workloads import SyntheticSpec, synthetic_instance
inst = synthetic_instance(SyntheticSpec(14, seed=3))
print(json.dumps({
    "numba": _jit.NUMBA_ENABLED,
    "ff": sorted(solve_first_fit(inst).items()),
    "ddff": sorted(solve_ddff(inst).items()),
    "bb": bb_solve(inst, BbConfig(time_limit=60)).server_count,
    "aco": sorted(oemacs_plus_solve(inst, AcoParams(iteration_limit=3)).allocation.items()),
}))
"""


def _run(disable: bool) -> dict:
    env = dict(os.environ)
    env["CDBP_DISABLE_NUMBA"] = "1" if disable else ""
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True,
                         check=True, timeout=600)
    return json.loads(out.stdout.strip().splitlines()[-1])


@pytest.mark.skipif(not _jit.NUMBA_ENABLED, reason="numba not available")
def test_fallback_matches_compiled_solvers():
    fast, slow = _run(False), _run(True)
    assert fast["numba"] and not slow["numba"]
    for key in ("ff", "ddff", "bb", "aco"):
        assert fast[key] == slow[key], key


def _inputs(n=40, seed=2):
    inst = synthetic_instance(SyntheticSpec(n, seed=seed))
    return inst, inst.arrays


def test_first_fit_py_func_matches():
    inst, arr = _inputs()
    results = []
    for fn in (kernels.first_fit, _jit.python_version(kernels.first_fit)):
        members, nmem = empty_members(inst)
        assign = np.full(inst.n, -1, dtype=np.int64)
        bad = fn(arrival_order(inst), shuffle_order(inst.m, 1), arr.caps, arr.starts, arr.ends,
                 arr.demand, members, nmem, assign)
        results.append((bad, assign.copy()))
    assert results[0][0] == results[1][0] == -1
    assert np.array_equal(results[0][1], results[1][1])


def test_mean_remaining_py_func_matches():
    inst, arr = _inputs(20)
    row = np.arange(10, dtype=np.int64)
    outs = []
    for fn in (kernels.mean_remaining_window, _jit.python_version(kernels.mean_remaining_window)):
        out = np.zeros(3)
        fn(row, 10, arr.starts, arr.ends, arr.demand, arr.caps[0], 50, 400, out)
        outs.append(out)
    np.testing.assert_allclose(outs[0], outs[1])


def test_python_version_of_plain_function():
    def f():
        return 1
    assert _jit.python_version(f) is f
