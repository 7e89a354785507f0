"""Compare the numba kernels with the pure-Python fallback.

Each workload runs in a fresh interpreter, once with numba and once with
``CDBP_DISABLE_NUMBA=1``.  Compilation happens before timing starts.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
from cdbp import _jit
from cdbp.bb import BbConfig, bb_solve, warmup
from cdbp.heuristics import solve_ddff, solve_first_fit
from cdbp.oemacs import AcoParams, oemacs_plus_solve
from cdbp.workloads import SyntheticSpec, synthetic_instance

repeat = int(sys.argv[1])
warmup()
cases = {
    "ffplus n=336": (synthetic_instance(SyntheticSpec(336, seed=0)), solve_first_fit),
    "ddffplus n=336": (synthetic_instance(SyntheticSpec(336, seed=0)), solve_ddff),
    "oemacsplus n=48 (2 iters)": (synthetic_instance(SyntheticSpec(48, seed=0)),
                                  lambda i: oemacs_plus_solve(i, AcoParams(iteration_limit=2))),
    "bb n=20 to proof": (synthetic_instance(SyntheticSpec(20, seed=3)),
                         lambda i: bb_solve(i, BbConfig(time_limit=120))),
}
out = {"numba": _jit.NUMBA_ENABLED, "times": {}}
for name, (inst, fn) in cases.items():
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn(inst)
        best = min(best, time.perf_counter() - t)
    out["times"][name] = best
print(json.dumps(out))
"""


def measure(disable: bool, repeat: int) -> dict:
    env = dict(os.environ, CDBP_DISABLE_NUMBA="1" if disable else "")
    res = subprocess.run([sys.executable, "-c", WORKER, str(repeat)], env=env,
                         capture_output=True, text=True, check=True)
    return json.loads(res.stdout.strip().splitlines()[-1])


def main() -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args()
    fast = measure(False, args.repeat)
    slow = measure(True, args.repeat)
    if not fast["numba"]:
        print("numba is not installed; both runs used the fallback")
    print(f"{'workload':<28} {'numba s':>10} {'python s':>10} {'speedup':>8}")
    for name, t_fast in fast["times"].items():
        t_slow = slow["times"][name]
        print(f"{name:<28} {t_fast:>10.4f} {t_slow:>10.4f} {t_slow / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
