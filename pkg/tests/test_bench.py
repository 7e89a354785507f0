import csv

import pytest

from cdbp import bench
from cdbp.bench import ExperimentConfig, convergence_trace, sample_trace, solve
from cdbp.instance_io import load
from cdbp.model import ContractViolation, validate_allocation
from cdbp.workloads import SyntheticSpec, synthetic_instance, write_swf


def test_sample_trace():
    trace = [(0.5, 12), (3.0, 11), (7.0, 10)]
    assert sample_trace(trace, [0.1, 1, 5, 10]) == [(0.1, None), (1, 12), (5, 11), (10, 10)]


@pytest.mark.parametrize("solver", bench.SOLVERS)
def test_every_solver_is_valid(solver):
    inst = synthetic_instance(SyntheticSpec(30, seed=1))
    out = solve(solver, inst, seed=1, budget_dcbb=1, budget_bb=1, oemacs_iters=2)
    assert validate_allocation(inst, out.allocation).ok


def test_convergence_rejects_heuristics():
    inst = synthetic_instance(SyntheticSpec(10))
    with pytest.raises(ContractViolation):
        convergence_trace("ffplus", inst, [1])
    trace = convergence_trace("dcbb", inst, [0.5, 1], budget=1)
    assert trace[-1][1] is not None


def test_config_validation():
    with pytest.raises(ContractViolation):
        ExperimentConfig("nope")
    with pytest.raises(ContractViolation):
        ExperimentConfig("single", solvers=("magic",))
    with pytest.raises(ContractViolation):
        ExperimentConfig("real")
    assert ExperimentConfig("timefactor").n_values == (160,)


def test_run_writes_csv(tmp_path):
    out = tmp_path / "r.csv"
    cfg = ExperimentConfig("shuffle", seeds=(0, 1), n_values=(24,), out=str(out))
    summary = bench.run(cfg)
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 8 and list(rows[0]) == bench.COLUMNS
    assert all(r["error"] == "" for r in rows)
    assert summary[("ff", 24, 240.0, 360.0)]["runs"] == 2
    assert "ffplus" in bench.format_summary(summary)


def test_run_convergence_trace(tmp_path):
    out = tmp_path / "c.csv"
    cfg = ExperimentConfig("convergence", solvers=("dcbb",), seeds=(0,), n_values=(20,),
                           budget_dcbb=1, checkpoints=(0.5, 1), out=str(out))
    bench.run(cfg)
    trace = list(csv.DictReader(open(tmp_path / "c_trace.csv")))
    assert [float(r["checkpoint"]) for r in trace] == [0.5, 1.0]


def test_cli_round_trip(tmp_path, capsys):
    inst_path = tmp_path / "i.json"
    assert bench.main(["generate", "--n", "20", "--seed", "3", "--out", str(inst_path)]) == 0
    assert load(inst_path).n == 20
    alloc_path = tmp_path / "a.csv"
    assert bench.main(["solve", str(inst_path), "--solver", "dcbb", "--budget", "1",
                       "--allocation-out", str(alloc_path)]) == 0
    assert "valid=True" in capsys.readouterr().out
    assert len(list(csv.reader(open(alloc_path)))) == 21
    swf = tmp_path / "t.swf"
    write_swf(swf, [(j, 10 * j, 100, 2, 4096) for j in range(1, 30)])
    assert bench.main(["ingest", str(swf), "--limit", "20", "--out", str(tmp_path / "s.json")]) == 0
    assert "emitted=20" in capsys.readouterr().out
    out = tmp_path / "real.csv"
    assert bench.main(["run", "--experiment", "real", "--swf", str(swf), "--solvers", "ffplus,dcbb",
                       "--seeds", "1", "--budget-dcbb", "1", "--out", str(out)]) == 0
    assert len(list(csv.DictReader(open(out)))) == 2
