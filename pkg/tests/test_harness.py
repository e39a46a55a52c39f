import csv
import json
import math

import numpy as np
import pytest

from ipwdebias.data import Dataset, ScenarioSpec
from ipwdebias.exceptions import ConfigError
from ipwdebias.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    ExperimentTable,
    MethodOutcome,
    TrialResult,
    aggregate,
    dimension_grid,
    emit_plot_script,
    evaluate_trial,
    export_table,
    run_experiment,
    run_trial,
)
from ipwdebias.inference import Method


def test_dimension_grid():
    assert dimension_grid(1000, 15) == [3, 4, 5, 7, 10, 14, 19, 27, 37, 52, 72, 100, 139, 193, 268]
    assert dimension_grid(1000, 1) == [round(1000 ** (3 / 7))]
    assert dimension_grid(2, 3) == [1, 1, 1]
    with pytest.raises(ConfigError):
        dimension_grid(1, 3)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig("wellspec", 100, 10, methods=())
    with pytest.raises(ConfigError):
        ExperimentConfig("wellspec", 100, 0)
    with pytest.raises(ConfigError):
        ExperimentConfig("wellspec", 100, 10, grid_points=0)
    cfg = ExperimentConfig("wellspec", 1000, 1, grid_points=2)
    assert cfg.dimensions() == dimension_grid(1000, 2)
    assert ExperimentConfig("wellspec", 1000, 1, dims=[4, 9]).dimensions() == [4, 9]


def _result(k, d, **outcomes):
    return TrialResult(k, d, {Method.parse(m): o for m, o in outcomes.items()})


def test_aggregate_examples():
    results = [
        _result(0, 3, ipw=MethodOutcome(1.0, 1.0, True, False)),
        _result(1, 3, ipw=MethodOutcome(3.0, 2.0, False, False)),
    ]
    (row,) = aggregate(results, tau_star=2.0, n=50)
    assert row.abs_bias == 0.0
    assert row.mse == 1.0
    assert row.coverage == 0.5
    assert row.mean_ci_length == pytest.approx(5.88)
    assert row.trials_used == 2 and row.failures == 0


def test_aggregate_single_trial_and_failures():
    results = [
        _result(0, 5, ipw=MethodOutcome(2.5, 1.0, True, False), oracle=MethodOutcome(1.0, 0.1, False, False)),
        _result(1, 5, ipw=MethodOutcome(math.nan, math.nan, False, True, "boom"), oracle=MethodOutcome(2.0, 0.1, True, False)),
    ]
    rows = {r.method: r for r in aggregate(results, tau_star=2.0, n=10)}
    assert rows[Method.IPW].mse == (2.5 - 2.0) ** 2
    assert rows[Method.IPW].failures == 1 and rows[Method.IPW].trials_used == 1
    all_failed = aggregate([_result(0, 5, ipw=MethodOutcome(math.nan, math.nan, False, True))], 0.0, 10)
    assert all_failed[0].missing and math.isnan(all_failed[0].coverage)


def test_evaluate_trial_isolates_separation():
    spec = ScenarioSpec("wellspec", 1)
    data = Dataset(np.array([[-2.0], [-1.0], [1.0], [2.0]]), [0, 0, 1, 1], [0.0, 0.0, 1.0, 2.0])
    res = evaluate_trial(data, spec, [Method.ORACLE, Method.IPW, Method.DEBIASED_IPW], tau_star=0.8)
    assert not res.outcomes[Method.ORACLE].failed
    assert math.isfinite(res.outcomes[Method.ORACLE].tau_hat)
    assert res.outcomes[Method.IPW].failed and res.outcomes[Method.DEBIASED_IPW].failed
    assert "NonConvergenceError" in res.outcomes[Method.IPW].error


def test_run_trial_is_deterministic():
    cfg = ExperimentConfig("wellspec", 200, 5, methods=list(Method))
    a = run_trial(cfg, 3, 2)
    b = run_trial(cfg, 3, 2)
    assert a == b
    assert a.outcomes[Method.ORACLE].sigma_hat >= 0


def test_smoke_experiment(tmp_path):
    cfg = ExperimentConfig(
        "wellspec", 200, 10, grid_points=2, out_csv=str(tmp_path / "t.csv"), out_json=str(tmp_path / "t.json")
    )
    table = run_experiment(cfg)
    assert len(table.rows) == 2 * len(cfg.methods)
    for r in table.rows:
        assert all(math.isfinite(v) for v in (r.abs_bias, r.mse, r.coverage, r.mean_ci_length))
        assert 0 <= r.coverage <= 1
        assert r.coverage * r.trials_used == pytest.approx(round(r.coverage * r.trials_used))
        assert r.mse >= r.abs_bias**2 - 1e-12
    assert [(r.method, r.d) for r in table.rows] == sorted(
        [(r.method, r.d) for r in table.rows], key=lambda k: (list(Method).index(k[0]), k[1])
    )
    with open(tmp_path / "t.csv", newline="") as fh:
        lines = list(csv.reader(fh))
    assert lines[0] == CSV_COLUMNS
    assert len(lines) == len(table.rows) + 1
    assert json.loads((tmp_path / "t.json").read_text()) == json.loads(json.dumps(table.to_dict()))
    assert table.metadata["tau_star_source"] == "closed-form"


def test_experiment_is_deterministic_across_threads(tmp_path):
    base = dict(scenario="zerobias", n=150, trials=6, dims=(2, 4), mc_oracle_samples=20_000, methods=list(Method))
    run_experiment(ExperimentConfig(**base, threads=1, out_csv=str(tmp_path / "a.csv")))
    run_experiment(ExperimentConfig(**base, threads=4, out_csv=str(tmp_path / "b.csv")))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_export_one_row(tmp_path):
    results = [_result(0, 3, ipw=MethodOutcome(1.0, 1.0, True, False))]
    table = ExperimentTable(aggregate(results, 1.0, 10), {})
    export_table(table, "csv", tmp_path / "x.csv")
    assert len((tmp_path / "x.csv").read_text().splitlines()) == 2
    export_table(table, "json", tmp_path / "x.json")
    assert json.loads((tmp_path / "x.json").read_text())["rows"][0]["d"] == 3
    with pytest.raises(ConfigError):
        export_table(table, "xml", tmp_path / "x.xml")


def test_plot_script(tmp_path):
    results = [_result(0, d, ipw=MethodOutcome(1.0, 1.0, True, False)) for d in (3, 17)]
    table = ExperimentTable(aggregate(results, 1.0, 10), {"scenario": "wellspec"})
    emit_plot_script(table, tmp_path / "p1.py", "out.csv")
    emit_plot_script(table, tmp_path / "p2.py", "out.csv")
    text = (tmp_path / "p1.py").read_text()
    assert text == (tmp_path / "p2.py").read_text()
    assert "[3, 17]" in text and "0.95" in text
    compile(text, "p1.py", "exec")
