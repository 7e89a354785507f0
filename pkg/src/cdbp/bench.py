"""Experiment harness and command-line entry point.

``bench run`` executes every (solver, seed, workload) cell of an experiment,
re-validates each allocation, writes one CSV row per cell and prints per
solver mean and standard deviation.  ``bench solve``, ``bench generate`` and
``bench ingest`` work on single instance files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import statistics
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

from . import instance_io
from .bb import BbConfig, SolveOutcome, bb_solve, warmup
from .dcbb import DcbbConfig, dcbb_solve
from .heuristics import DDFF, FF, HeuristicConfig, solve_ddff, solve_first_fit
from .model import ContractViolation, ProblemInstance, count_servers, validate_allocation
from .oemacs import AcoParams, oemacs_plus_solve
from .workloads import SyntheticSpec, default_pool, generate, ingest_swf

log = logging.getLogger("cdbp.bench")

SOLVERS = ("ff", "ffplus", "ddff", "ddffplus", "bb", "dcbb", "oemacsplus")
SEARCH_SOLVERS = ("bb", "dcbb", "oemacsplus")
EXPERIMENTS = ("real", "convergence", "shuffle", "scale", "timefactor", "single")
SCALE_SIZES = tuple(range(24, 337, 24))
TIME_GRID = (60, 180, 300, 420)

DEFAULT_SOLVERS = {
    "real": SOLVERS[1:],
    "convergence": SEARCH_SOLVERS,
    "shuffle": ("ff", "ffplus", "ddff", "ddffplus"),
    "scale": ("bb", "dcbb", "oemacsplus", "ddffplus", "ffplus"),
    "timefactor": ("bb", "dcbb", "oemacsplus", "ddffplus", "ffplus"),
    "single": ("ffplus",),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    solvers: tuple[str, ...] = ()
    seeds: tuple[int, ...] = tuple(range(5))
    n_values: tuple[int, ...] = ()
    arrival_b: tuple[float, ...] = (240.0,)
    duration_mu: tuple[float, ...] = (360.0,)
    arrival_a: float = 0.0
    duration_sigma: float = 60.0
    budget_dcbb: float = 50.0
    budget_bb: float = 1000.0
    oemacs_iters: int = 5
    swf: str | None = None
    swf_limit: int = 500
    out: str = "results.csv"
    checkpoints: tuple[float, ...] = (1, 2, 5, 10, 20, 30, 40, 50)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ContractViolation(f"experiment must be one of {EXPERIMENTS}")
        solvers = self.solvers or DEFAULT_SOLVERS[self.experiment]
        object.__setattr__(self, "solvers", tuple(solvers))
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise ContractViolation(f"unknown solvers {bad}; choose from {SOLVERS}")
        if not self.seeds:
            raise ContractViolation("at least one seed is required")
        if self.experiment == "real" and not self.swf:
            raise ContractViolation("the real experiment needs --swf")
        if not self.n_values:
            default = {"scale": SCALE_SIZES, "shuffle": SCALE_SIZES, "convergence": (120,),
                       "timefactor": (160,), "single": (24,), "real": ()}
            object.__setattr__(self, "n_values", default[self.experiment])


@dataclass
class ResultRow:
    experiment: str
    solver: str
    seed: int
    n_vms: int
    arrival_a: float
    arrival_b: float
    duration_mu: float
    duration_sigma: float
    server_count: int | None
    elapsed: float
    proved_optimal: bool
    error: str = ""


COLUMNS = [f.name for f in fields(ResultRow)]


@dataclass(frozen=True)
class Workload:
    instance: ProblemInstance
    n_vms: int
    arrival_a: float
    arrival_b: float
    duration_mu: float
    duration_sigma: float


def solve(solver: str, instance: ProblemInstance, seed: int = 0, budget_dcbb: float = 50.0,
          budget_bb: float = 1000.0, oemacs_iters: int = 5) -> SolveOutcome:
    """Run one named solver; heuristics are wrapped into a :class:`SolveOutcome`."""
    if solver in ("ff", "ffplus", "ddff", "ddffplus"):
        cfg = {"ff": FF, "ddff": DDFF}.get(solver) or HeuristicConfig(rng_seed=seed)
        fn = solve_ddff if solver.startswith("dd") else solve_first_fit
        t0 = time.perf_counter()
        alloc = fn(instance, cfg)
        el = time.perf_counter() - t0
        c = count_servers(alloc)
        return SolveOutcome(alloc, c, False, el, [(el, c)])
    if solver == "bb":
        return bb_solve(instance, BbConfig(time_limit=budget_bb, seed=seed))
    if solver == "dcbb":
        return dcbb_solve(instance, DcbbConfig(total_time_budget=budget_dcbb, seed=seed))
    if solver == "oemacsplus":
        return oemacs_plus_solve(instance, AcoParams(iteration_limit=oemacs_iters, seed=seed))
    raise ContractViolation(f"unknown solver {solver!r}")


def sample_trace(trace: Sequence[tuple[float, int]], checkpoints: Sequence[float]) -> list[tuple[float, int | None]]:
    """Step-function value of ``trace`` at each checkpoint (None before the first entry)."""
    out = []
    for c in checkpoints:
        val = None
        for t, v in trace:
            if t <= c:
                val = v
            else:
                break
        out.append((float(c), val))
    return out


def convergence_trace(solver: str, instance: ProblemInstance, checkpoints: Sequence[float],
                      seed: int = 0, budget: float | None = None,
                      outcome: SolveOutcome | None = None) -> list[tuple[float, int | None]]:
    """Incumbent server count of a search solver sampled at ``checkpoints`` seconds."""
    if solver not in SEARCH_SOLVERS:
        raise ContractViolation(f"{solver} is not a search-based solver")
    if outcome is None:
        horizon = budget if budget is not None else max(checkpoints)
        outcome = solve(solver, instance, seed, budget_dcbb=horizon, budget_bb=horizon)
    return sample_trace(outcome.incumbent_trace, checkpoints)


def workloads(config: ExperimentConfig, seed: int) -> list[Workload]:
    if config.experiment == "real":
        vms, report = ingest_swf(config.swf, config.swf_limit)
        log.info("ingested %d requests, dropped %s", report.emitted, dict(report.dropped))
        inst = ProblemInstance(tuple(vms), default_pool(len(vms)))
        return [Workload(inst, len(vms), float("nan"), float("nan"), float("nan"), float("nan"))]
    cells = []
    if config.experiment == "timefactor":
        grid = [(b, 360.0) for b in TIME_GRID] + [(240.0, mu) for mu in TIME_GRID]
        grid = list(dict.fromkeys(grid))
    else:
        grid = [(b, mu) for b in config.arrival_b for mu in config.duration_mu]
    for n in config.n_values:
        for b, mu in grid:
            spec = SyntheticSpec(n, config.arrival_a, b, mu, config.duration_sigma, seed=seed)
            inst = ProblemInstance(tuple(generate(spec)), default_pool(n))
            cells.append(Workload(inst, n, spec.arrival_a, b, mu, spec.duration_sigma))
    return cells


def run(config: ExperimentConfig, progress: Callable[[ResultRow], None] | None = None) -> dict:
    """Execute an experiment, write the CSV (and trace CSV), return the summary."""
    warmup()
    rows: list[ResultRow] = []
    traces: list[dict] = []
    for seed in config.seeds:
        for wl in workloads(config, seed):
            for solver in config.solvers:
                row = ResultRow(config.experiment, solver, seed, wl.n_vms, wl.arrival_a, wl.arrival_b,
                                wl.duration_mu, wl.duration_sigma, None, 0.0, False)
                try:
                    out = solve(solver, wl.instance, seed, config.budget_dcbb, config.budget_bb,
                                config.oemacs_iters)
                    report = validate_allocation(wl.instance, out.allocation)
                    if not report.ok:
                        row.error = f"invalid allocation: {report.violations[0]}"
                    else:
                        row.server_count = out.server_count
                    row.elapsed = out.elapsed
                    row.proved_optimal = out.proved_optimal
                    if config.experiment == "convergence" and solver in SEARCH_SOLVERS:
                        for t, v in sample_trace(out.incumbent_trace, config.checkpoints):
                            traces.append({"solver": solver, "seed": seed, "n_vms": wl.n_vms,
                                           "checkpoint": t, "server_count": v})
                except Exception as exc:  # recorded per row, the run continues
                    row.error = f"{type(exc).__name__}: {exc}"
                rows.append(row)
                if progress:
                    progress(row)
    write_rows(config.out, rows)
    if traces:
        tpath = Path(config.out)
        tpath = tpath.with_name(tpath.stem + "_trace.csv")
        with open(tpath, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["solver", "seed", "n_vms", "checkpoint", "server_count"])
            w.writeheader()
            w.writerows(traces)
    return summarize(rows)


def write_rows(path, rows: Sequence[ResultRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=COLUMNS, quoting=csv.QUOTE_MINIMAL)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))


def summarize(rows: Sequence[ResultRow]) -> dict:
    """Per solver (and size): mean/stdev of server count and elapsed, error count."""
    groups: dict[tuple, list[ResultRow]] = {}
    for r in rows:
        groups.setdefault((r.solver, r.n_vms, r.arrival_b, r.duration_mu), []).append(r)
    out = {}
    for key, rs in groups.items():
        ok = [r for r in rs if r.server_count is not None]
        counts = [r.server_count for r in ok]
        times = [r.elapsed for r in ok]
        out[key] = {
            "runs": len(rs),
            "errors": len(rs) - len(ok),
            "mean_servers": statistics.mean(counts) if counts else None,
            "stdev_servers": statistics.stdev(counts) if len(counts) > 1 else 0.0,
            "mean_elapsed": statistics.mean(times) if times else None,
            "stdev_elapsed": statistics.stdev(times) if len(times) > 1 else 0.0,
        }
    return out


def format_summary(summary: dict) -> str:
    lines = [f"{'solver':<11} {'n':>4} {'b':>6} {'mu':>6} {'#S mean':>8} {'sd':>6} {'T mean':>9} {'sd':>8} err"]
    for (solver, n, b, mu), s in sorted(summary.items(), key=lambda kv: (kv[0][1], kv[0][2], kv[0][3], kv[0][0])):
        ms = f"{s['mean_servers']:.2f}" if s["mean_servers"] is not None else "-"
        mt = f"{s['mean_elapsed']:.3f}" if s["mean_elapsed"] is not None else "-"
        lines.append(f"{solver:<11} {n:>4} {b:>6.0f} {mu:>6.0f} {ms:>8} {s['stdev_servers']:>6.2f} "
                     f"{mt:>9} {s['stdev_elapsed']:>8.3f} {s['errors']}")
    return "\n".join(lines)


# --------------------------------------------------------------------------
# command line
# --------------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(x) for x in text.split(",") if x)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x)


def _names(text: str) -> tuple[str, ...]:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bench", description="CDBP VM placement experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run an experiment and write a CSV")
    r.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    r.add_argument("--solvers", type=_names, default=())
    r.add_argument("--seeds", type=int, default=5, help="number of seeds (0..k-1)")
    r.add_argument("--n", type=_ints, default=(), help="comma-separated VM counts")
    r.add_argument("--arrival-b", type=_floats, default=(240.0,))
    r.add_argument("--duration-mu", type=_floats, default=(360.0,))
    r.add_argument("--budget-dcbb", type=float, default=50.0)
    r.add_argument("--budget-bb", type=float, default=1000.0)
    r.add_argument("--oemacs-iters", type=int, default=5)
    r.add_argument("--checkpoints", type=_floats, default=(1, 2, 5, 10, 20, 30, 40, 50))
    r.add_argument("--out", default="results.csv")
    r.add_argument("--swf")
    r.add_argument("--swf-limit", type=int, default=500)

    s = sub.add_parser("solve", help="solve one instance file")
    s.add_argument("instance")
    s.add_argument("--solver", default="dcbb", choices=SOLVERS)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--budget", type=float, default=None, help="time budget for bb/dcbb")
    s.add_argument("--oemacs-iters", type=int, default=5)
    s.add_argument("--allocation-out")

    g = sub.add_parser("generate", help="write a synthetic instance file")
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--arrival-b", type=float, default=240.0)
    g.add_argument("--duration-mu", type=float, default=360.0)
    g.add_argument("--duration-sigma", type=float, default=60.0)
    g.add_argument("--out", required=True)

    i = sub.add_parser("ingest", help="convert an SWF trace into an instance file")
    i.add_argument("swf")
    i.add_argument("--limit", type=int, default=500)
    i.add_argument("--out", required=True)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        config = ExperimentConfig(
            experiment=args.experiment, solvers=args.solvers, seeds=tuple(range(args.seeds)),
            n_values=args.n, arrival_b=args.arrival_b, duration_mu=args.duration_mu,
            budget_dcbb=args.budget_dcbb, budget_bb=args.budget_bb, oemacs_iters=args.oemacs_iters,
            swf=args.swf, swf_limit=args.swf_limit, out=args.out, checkpoints=args.checkpoints)

        def progress(row: ResultRow) -> None:
            log.info("%s seed=%d n=%d -> %s (%.3fs)%s", row.solver, row.seed, row.n_vms,
                     row.server_count, row.elapsed, f" ERROR {row.error}" if row.error else "")

        summary = run(config, progress)
        print(format_summary(summary))
        print(f"wrote {config.out}")
        return 0
    if args.command == "solve":
        inst = instance_io.load(args.instance)
        budget = args.budget
        out = solve(args.solver, inst, args.seed,
                    budget_dcbb=budget if budget is not None else 50.0,
                    budget_bb=budget if budget is not None else 1000.0,
                    oemacs_iters=args.oemacs_iters)
        ok = validate_allocation(inst, out.allocation).ok
        print(f"solver={args.solver} servers={out.server_count} proved_optimal={out.proved_optimal} "
              f"elapsed={out.elapsed:.3f}s valid={ok}")
        if args.allocation_out:
            rows = sorted(out.allocation.items())
            with open(args.allocation_out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["vm_id", "server_id"])
                w.writerows(rows)
        return 0 if ok else 1
    if args.command == "generate":
        spec = SyntheticSpec(args.n, 0.0, args.arrival_b, args.duration_mu, args.duration_sigma, seed=args.seed)
        inst = ProblemInstance(tuple(generate(spec)), default_pool(args.n))
        instance_io.save(inst, args.out)
        print(f"wrote {args.out} ({inst.n} VMs, {inst.m} servers)")
        return 0
    if args.command == "ingest":
        vms, report = ingest_swf(args.swf, args.limit)
        inst = ProblemInstance(tuple(vms), default_pool(len(vms)))
        instance_io.save(inst, args.out)
        print(f"records={report.total_records} emitted={report.emitted} truncated={report.truncated} "
              f"capped={report.capped} dropped={dict(report.dropped)}")
        print(f"wrote {args.out}")
        return 0
    return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
