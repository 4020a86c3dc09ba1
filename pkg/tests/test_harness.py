import csv
import io
import json

import numpy as np
import pytest

from scfreq.domain import InvalidInputError, LinkSpec, Objective, SubchannelSpec
from scfreq.harness.config import ConfigError, builtin_scenarios, dump_config, load_config
from scfreq.harness.experiment import CSV_COLUMNS, drift_starts, load_results, run_experiment
from scfreq.harness.report import REPORT_COLUMNS, report
from scfreq.harness.sweep import sweep
from scfreq.plm import PlmModel

FAST = {"optimizer": {"max_iterations": 30, "patience": 8}, "oracle": {"half_range": 1.0}}


def test_builtin_aliases():
    c1 = load_config("table1-case1")
    assert c1.scenario.modulation == "QPSK" and c1.scenario.roll_off == 0.1
    assert (c1.scenario.link.span_count, c1.scenario.link.filter_count) == (2, 2)
    assert c1.scenario.filter_bandwidth == 137.5
    c5 = load_config({"scenario": "table1-case5"})
    assert (c5.scenario.link.span_count, c5.scenario.link.filter_count) == (10, 5)
    n10 = load_config("scaling-n10")
    assert n10.scenario.subchannel_count == 10 and n10.optimizer.minibatch_size == 5
    assert n10.step_sizes == (0.5,) and n10.oracle.half_range == 1.0
    assert len(builtin_scenarios()) == 12


def test_defaults_resolved():
    cfg = load_config(None)
    assert cfg.scenario.name == "table1-case1"
    assert cfg.objectives == (Objective.AVERAGE_SNR, Objective.MIN_SNR)
    assert cfg.start.mode == "equidistant"
    drift = load_config({"start": {"mode": "random_drift"}})
    assert (drift.start.range, drift.start.count) == (2.0, 10)


@pytest.mark.parametrize("source", [
    "table1-case3",
    {"scenario": {"base": "table1-case2", "link": {"span_count": 4}}, "objectives": ["min"],
     "optimizer": {"step_sizes": [0.25, 0.5], "patience": 5}, "start": {"mode": "random_drift", "count": 3}},
    {"scenario": {"subchannel_count": 3, "filter_bandwidth": 110.0,
                  "distances": [20.5, 34.5, 34.5, 20.5]}, "oracle": {"enabled": False},
     "start": {"mode": "explicit", "distances": [20.5, 34.0, 35.0, 20.5]}, "output": {"dir": "out"}},
])
def test_round_trip(source):
    cfg = load_config(source)
    assert load_config(dump_config(cfg)) == cfg


def test_yaml_file(tmp_path):
    path = tmp_path / "exp.yaml"
    path.write_text("name: demo\nscenario: table1-case4\nobjectives: [average]\nmodel:\n  monitor_noise_sigma: 0.05\n")
    cfg = load_config(path)
    assert cfg.name == "demo" and cfg.model.monitor_noise_sigma == 0.05
    assert cfg.objectives == (Objective.AVERAGE_SNR,)
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "missing.yaml")


def test_parse_error_reports_position():
    with pytest.raises(ConfigError, match=r"line 3, column 13"):
        load_config("name: x\nmodel:\n  rng_seed: : 3\n")


@pytest.mark.parametrize("data, field", [
    ({"modle": {}}, "modle"),
    ({"model": {"noise": 0.1}}, "noise"),
    ({"optimizer": {"f_step": 0.3}}, "f_step"),
    ({"model": {"monitor_noise_sigma": -1}}, "monitor_noise_sigma"),
    ({"scenario": "table9-case1"}, "scenario"),
    ({"objectives": ["max"]}, "objective"),
    ({"scenario": {"link": {"spans": 3}}}, "spans"),
    ({"start": {"mode": "explicit"}}, "distances"),
    ({"scenario": {"distances": [10, 10, 10]}}, "distances"),
])
def test_semantic_errors_name_the_field(data, field):
    with pytest.raises(ConfigError, match=field):
        load_config(data)


# -- experiments -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def default_run():
    return run_experiment(load_config({"oracle": {"half_range": 1.0}}), persist=False)


def test_default_case_improves(default_run):
    assert len(default_run.runs) == 2
    for r in default_run.runs:
        assert r.true_objective >= r.initial_objective
        assert r.oracle_best is not None and r.improvement_vs_worst > 0
        assert abs(sum(r.best_distances) - 137.5) < 1e-9
        assert r.t_opt == r.iterations * (2 * 60 + 1)


def test_csv_and_json_are_stable(default_run, tmp_path):
    paths = default_run.persist(tmp_path)
    rows = list(csv.DictReader(io.StringIO(paths["csv"].read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    again = run_experiment(load_config({"oracle": {"half_range": 1.0}}), out_dir=tmp_path / "b")
    assert again.paths["csv"].read_bytes() == paths["csv"].read_bytes()
    assert again.paths["json"].read_bytes() == paths["json"].read_bytes()
    runs, _ = load_results(paths["json"])
    assert [r.best_distances for r in runs] == [r.best_distances for r in default_run.runs]


def test_every_persisted_plan_sums_to_bandwidth(default_run):
    record = json.loads(default_run.json_text())
    for run in record["runs"]:
        plans = [run["best_distances"], run["start_distances"]]
        for it in run["trace"]["records"]:
            plans += [it["applied_distances"], it["best_distances"]]
            plans += [p["distances"] for p in it["probes"] if p["distances"] is not None]
        for d in plans:
            assert abs(sum(d) - 137.5) < 1e-9


def test_drift_starts_are_seeded_and_bounded(plan):
    a = drift_starts(plan, 2.0, 10, 5)
    assert a == drift_starts(plan, 2.0, 10, 5)
    assert a != drift_starts(plan, 2.0, 10, 6)
    for p in a:
        delta = np.asarray(p.offsets) - plan.offsets
        assert np.all(np.abs(delta) <= 2.0 + 1e-12)
        assert np.allclose(delta / 0.25, np.round(delta / 0.25))


def test_worker_pool_matches_serial():
    cfg = {**FAST, "start": {"mode": "random_drift", "count": 3}, "objectives": ["min"], "oracle": {"enabled": False}}
    serial = run_experiment(load_config(cfg), persist=False)
    pooled = run_experiment(load_config({**cfg, "workers": 2}), persist=False)
    assert serial.csv_text() == pooled.csv_text()


def test_cap_exceeded_becomes_warning():
    result = run_experiment(load_config({**FAST, "objectives": ["average"], "oracle": {"cap": 10}}), persist=False)
    assert result.warnings and "oracle skipped" in result.warnings[0]
    row = next(csv.DictReader(io.StringIO(result.csv_text())))
    assert row["oracle_best_db"] == row["improvement_vs_worst_db"] == "NA"


def test_scaling_n10_accounting():
    result = run_experiment(load_config({"scenario": "scaling-n10", "objectives": ["min"],
                                         "oracle": {"enabled": False}}), persist=False)
    run = result.runs[0]
    assert run.status == "patience" and run.minibatch_size == 5
    trace = run.trace
    assert trace.monitor_calls == sum(r.baseline_measured + sum(not p.skipped for p in r.probes)
                                      for r in trace.records)
    assert trace.monitor_calls <= trace.iterations * 6
    assert run.true_objective >= run.equidistant_objective


# -- sweep and report ------------------------------------------------------------------

def _b2b(spans=0, **kw):
    return PlmModel(link=LinkSpec(span_count=spans, filter_count=1), monitor_noise_sigma=0.0,
                    ripple_amplitude=0.0, **kw)


def test_sweep_is_concave_and_symmetric():
    res = sweep(SubchannelSpec(), 69.0, 0.25, _b2b(), span=4.0)
    assert res.is_concave() and abs(res.peak - 34.5) <= 0.25
    assert np.allclose(res.snr, res.snr[::-1], atol=1e-9)
    assert res.csv_text().splitlines()[0] == "d1_ghz,snr_db"
    assert all(len(line.split(",")) == 2 for line in res.csv_text().splitlines())


def test_more_spans_lower_the_sweep():
    ten = sweep(SubchannelSpec(), 69.0, 0.25, _b2b(10))
    two = sweep(SubchannelSpec(), 69.0, 0.25, _b2b(2))
    assert np.all(ten.snr < two.snr)


def test_sweep_validation():
    with pytest.raises(InvalidInputError):
        sweep(SubchannelSpec(), 0.4, 0.25, _b2b())


def test_report_layout(default_run):
    text = report(default_run.runs[:1])
    header, row = text.splitlines()[:2]
    for col in REPORT_COLUMNS:
        assert col in header
    assert len(REPORT_COLUMNS) == 8
    assert "NA" not in row


def test_report_marks_missing_oracle():
    result = run_experiment(load_config({**FAST, "objectives": ["min"], "oracle": {"enabled": False}}),
                            persist=False)
    row = report(result.runs).splitlines()[1]
    assert row.split()[-2] == "NA"  # improvement vs worst is absent, not zero
    with pytest.raises(InvalidInputError):
        report([])
