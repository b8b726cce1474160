import xml.etree.ElementTree as ET

import pytest

from aoiagg import cli
from aoiagg.harness import (RunError, emit_plots, reconstruct_exit_and_entry, run_experiment, scenario_id, sweep,
                            train_pipeline, write_run)
from aoiagg.kinematics import NodeKind, NodeState
from aoiagg.metrics import CycleMetrics, aggregate_report, read_csv_rows, write_report_csv
from aoiagg.channel import DelayModel
from aoiagg.predictor.forecasters import ModelForecaster
from aoiagg.scenario import PredictorSettings, RosterSpec, Scenario, default_scenario, serialize_scenario
from aoiagg.svg import bar_chart, line_chart


def small(**changes):
    base = dict(roster=RosterSpec(sensors=4, vehicles=4, vehicle_phase_max=60.0, oncoming_fraction=0.5),
                ring_length=800.0, duration_ms=20_000.0, predictor=PredictorSettings(kind="oracle"))
    base.update(changes)
    return default_scenario(**base)


def test_ideal_single_sensor():
    # parked ego next to one static sensor, no delays at all
    delay = DelayModel(access_delay_mean=0.0, access_delay_jitter=0.0, origination_offset_max=0.0)
    sc = Scenario(nodes=(NodeState("S1", NodeKind.SENSOR, 10.0),), duration_ms=5000.0, ego_speed=0.0,
                  speed_min=0.0, ring_length=None, perturbation=0.0, delay=delay,
                  predictor=PredictorSettings(kind="oracle"))
    report, _ = run_experiment(sc, "predictive", 1)
    assert report.mean_dssr == 100.0
    served = [c for c in report.cycles if c.dssr is not None]
    assert len(served) >= len(report.cycles) - 2
    overhead = sc.costs.decision_base_ms + sc.predictor.l_pred_ms / sc.predictor.sensor_period
    # nothing to wait for: latency is the decision cost plus amortized prediction
    assert all(c.latency_ms == pytest.approx(overhead, abs=1e-3) for c in served)


def test_run_experiment_is_deterministic(tmp_path):
    sc = small()
    a, ra = run_experiment(sc, "fifo", 4)
    b, rb = run_experiment(sc, "fifo", 4)
    assert a == b
    when = cli.datetime(2024, 1, 1, tzinfo=cli.timezone.utc)
    write_run(a, ra, tmp_path / "a", when)
    write_run(b, rb, tmp_path / "b", when)
    for name in ("report.csv", "events.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_unknown_policy_is_a_run_error():
    with pytest.raises(RunError, match="random"):
        run_experiment(small(), "random", 1)


def test_scenario_id_ignores_sweep_knobs():
    sc = small()
    assert scenario_id(sc) == scenario_id(sc.with_(ego_speed=30.0, seed=9, policy="fifo"))
    assert scenario_id(sc) != scenario_id(sc.with_(q=4.0, max_aoi=250.0))


def test_sweep_cells_share_streams(tmp_path):
    table, reports = sweep(small(), [15, 30], ["predictive", "fifo", "stop-n-wait", "priority"], [1, 2],
                           out_dir=tmp_path)
    assert len(reports) == 16
    assert table.buckets == [15.0, 30.0]
    for speed in (15.0, 30.0):
        for seed in (1, 2):
            digests = {r.stream_digest for r in reports if r.speed == speed and r.seed == seed}
            assert len(digests) == 1
    assert all(n == 2 for _, _, n in table.cells.values())
    assert (tmp_path / "comparison.csv").exists()


def test_sweep_single_policy():
    table, _ = sweep(small(), [20], ["fifo"], [1])
    assert table.policies == ["fifo"] and table.reference is None


@pytest.mark.parametrize("args", [([], ["fifo"], [1]), ([20], ["teleport"], [1]), ([20], ["fifo"], [])])
def test_sweep_rejects_bad_lists(args):
    with pytest.raises(ValueError):
        sweep(small(), *args)


def test_train_pipeline_saves_per_kind_models(tmp_path):
    sc = small(duration_ms=30_000.0, predictor=PredictorSettings(kind="linear", window=3))
    models, reports = train_pipeline(sc, "linear", out_dir=tmp_path)
    assert sorted(r.node_kind for r in reports) == ["sensor", "vehicle"]
    assert {r.horizon for r in reports} == {5, 10}
    for r in reports:
        assert r.n_train > 0 and r.evaluation.n_params > 0
        assert r.model_path and r.model_path.endswith(".bin")
    forecaster = ModelForecaster.from_models(*models)
    assert forecaster.window_size == 3


def test_train_pipeline_rejects_unknown_kind():
    with pytest.raises(ValueError, match="unknown predictor"):
        train_pipeline(small(), "oracle-of-delphi")


def test_train_pipeline_rejects_short_trace():
    with pytest.raises(ValueError):
        train_pipeline(small(), "linear", rows=[{"node_id": "S1", "cycle": 1, "time_ms": 0.0, "aoi_ms": 10.0,
                                                 "rel_speed": 20.0, "kind": "sensor"}])


def test_exit_and_entry_phases():
    trace = reconstruct_exit_and_entry()
    assert trace.slow.speed == 15.0 and trace.fast.speed == 30.0
    assert trace.slow.issues == [] and trace.slow.missing == []
    assert any(i.node_id == "S1" and i.offset == -1 for i in trace.fast.issues)
    assert any(i.node_id == "V2" and i.offset == 1 for i in trace.fast.issues)
    assert [node for _, node in trace.fast.missing] == ["S1"]


# plots ----------------------------------------------------------------------------

def write_comparison(path, rows):
    lines = ["# generated 2024-01-01T00:00:00+00:00",
             "speed_bucket,policy,mean_dssr,mean_latency_ms,runs,dssr_delta_vs_reference_pp,"
             "latency_reduction_vs_reference"] + rows
    path.write_text("\n".join(lines) + "\n")


def test_emit_plots_one_chart_per_metric(tmp_path):
    rows = [f"{s},{p},{90 + i},{300 + 10 * i},1,," for i, p in enumerate(["a", "b", "c", "d"]) for s in (15, 30)]
    write_comparison(tmp_path / "comparison.csv", rows)
    paths = emit_plots(tmp_path)
    assert sorted(p.name for p in paths) == ["dssr_vs_speed.svg", "latency_vs_speed.svg"]
    for p in paths:
        root = ET.parse(p).getroot()
        assert root.tag.endswith("svg")
        assert len([e for e in root.iter() if e.tag.endswith("polyline")]) == 4


def test_emit_plots_empty_rows(tmp_path):
    write_comparison(tmp_path / "comparison.csv", [])
    with pytest.raises(ValueError):
        emit_plots(tmp_path)


def test_emit_plots_malformed(tmp_path):
    write_comparison(tmp_path / "comparison.csv", ["15,a,lots,300,1,,"])
    with pytest.raises(ValueError, match="malformed"):
        emit_plots(tmp_path)


def test_emit_plots_nothing_to_plot(tmp_path):
    with pytest.raises(FileNotFoundError):
        emit_plots(tmp_path)


def test_single_cycle_report_plots(tmp_path):
    one = CycleMetrics(1, 100.0, 300.0, 280.0, 5.0, 15.0, 90.0, 20.0)
    out = tmp_path / "fifo"
    out.mkdir()
    write_report_csv(aggregate_report([one], "fifo", 1), out / "report.csv")
    (path,) = emit_plots(tmp_path)
    ET.parse(path)


def test_svg_is_byte_deterministic(tmp_path):
    series = {"b": [(15.0, 1.0), (30.0, 2.0)], "a": [(15.0, 3.0), (30.0, 0.5)]}
    a = line_chart(series, tmp_path / "a.svg", "t", "x", "y").read_bytes()
    b = line_chart(dict(reversed(list(series.items()))), tmp_path / "b.svg", "t", "x", "y").read_bytes()
    assert a == b
    c = bar_chart({"run": (1.0, 2.0, 3.0)}, ("p", "q", "r"), tmp_path / "c.svg", "t", "ms").read_bytes()
    assert c == bar_chart({"run": (1.0, 2.0, 3.0)}, ("p", "q", "r"), tmp_path / "d.svg", "t", "ms").read_bytes()


def test_svg_single_point(tmp_path):
    ET.parse(line_chart({"a": [(20.0, 5.0)]}, tmp_path / "one.svg", "t", "x", "y"))


# CLI ------------------------------------------------------------------------------

def scenario_file(tmp_path, sc):
    path = tmp_path / "sc.txt"
    path.write_text(serialize_scenario(sc))
    return str(path)


def test_cli_simulate_uses_output_root(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "root"))
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    path = scenario_file(tmp_path, small(output_dir="runs"))
    assert cli.main(["simulate", "--scenario", path, "--policy", "fifo", "--seed", "2"]) == 0
    out = tmp_path / "root" / "runs" / "fifo_seed2"
    first = (out / "report.csv").read_bytes()
    assert first.startswith(b"# generated 1970-01-01T00:00:00+00:00")
    assert cli.main(["simulate", "--scenario", path, "--policy", "fifo", "--seed", "2"]) == 0
    assert (out / "report.csv").read_bytes() == first
    assert "DSSR" in capsys.readouterr().out


def test_cli_sweep_and_plot(tmp_path, capsys):
    path = scenario_file(tmp_path, small())
    assert cli.main(["sweep", "--scenario", path, "--speeds", "15,30", "--policies", "fifo,stop-n-wait",
                     "--seeds", "1..2", "--out", str(tmp_path)]) == 0
    sweep_dir = tmp_path / "out" / "sweep"
    rows = read_csv_rows(sweep_dir / "comparison.csv")
    assert len(rows) == 4
    assert cli.main(["plot", "--in", str(sweep_dir)]) == 0
    assert (sweep_dir / "dssr_vs_speed.svg").exists()


def test_cli_train(tmp_path):
    sc = small(duration_ms=30_000.0, predictor=PredictorSettings(kind="linear", window=3))
    assert cli.main(["train", "--scenario", scenario_file(tmp_path, sc), "--model", "linear",
                     "--out", str(tmp_path)]) == 0
    assert len(list((tmp_path / "out" / "models").glob("model_linear_*.bin"))) == 2


def test_cli_bad_scenario_exits_nonzero(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("[scenario]\nq = 0\n")
    assert cli.main(["simulate", "--scenario", str(path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_missing_scenario_exits_nonzero(tmp_path, capsys):
    assert cli.main(["simulate", "--scenario", str(tmp_path / "none.txt")]) == 2


def test_cli_usage_error():
    with pytest.raises(SystemExit) as info:
        cli.main(["sweep", "--policies"])
    assert info.value.code == 2


@pytest.mark.parametrize("text,expected", [("15,20,25", [15.0, 20.0, 25.0]), ("1..3", [1, 2, 3])])
def test_parse_list(text, expected):
    assert cli.parse_list(text, int if ".." in text else float) == expected


def test_parse_list_empty():
    with pytest.raises(ValueError):
        cli.parse_list(",")
