"""Experiment orchestration: training, single runs, sweeps and plots."""
from __future__ import annotations

import dataclasses
import hashlib
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .aggregator import (EngineConfig, Forecaster, PolicyResult, SequencingIssue, policy_fifo,
                         policy_predictive, policy_priority, policy_stop_n_wait)
from .channel import trace_rows
from .kinematics import NodeKind
from .metrics import (ComparisonTable, RunReport, compare_policies, read_csv_rows, report_from_result,
                      write_comparison_csv, write_event_log, write_report_csv)
from .predictor.dataset import make_dataset
from .predictor.forecasters import ConstantForecaster, ModelForecaster, OracleForecaster
from .predictor.model import MODEL_KINDS, Evaluation, PredictorModel, evaluate, load_model, save_model
from .scenario import (POLICIES, Scenario, exit_and_entry_scenario, sawtooth_profile,
                       serialize_scenario)
from .simulation import EventStream, generate_stream
from .svg import line_chart, bar_chart

log = logging.getLogger("aoiagg")


class RunError(RuntimeError):
    pass


# training traces use their own seed stream so they never coincide with evaluation runs
TRACE_SEED_OFFSET = 99


def scenario_id(sc: Scenario) -> str:
    """Identity of a scenario, ignoring the knobs a sweep varies."""
    neutral = dataclasses.replace(sc, ego_speed=sc.speed_min, ego_profile=(), seed=0,
                                  policy="predictive", output_dir="")
    return hashlib.sha256(serialize_scenario(neutral).encode()).hexdigest()[:12]


def engine_config(sc: Scenario) -> EngineConfig:
    ps = sc.policy_settings
    return EngineConfig(max_aoi=sc.max_aoi, history_depth=ps.history_depth, silence_cycles=ps.silence_cycles,
                        deadline=ps.deadline, snw_timeout=ps.stop_n_wait_timeout,
                        decision_base_ms=sc.costs.decision_base_ms,
                        decision_per_node_ms=sc.costs.decision_per_node_ms)


def periods(sc: Scenario) -> Dict[NodeKind, int]:
    return {NodeKind.SENSOR: sc.predictor.sensor_period, NodeKind.VEHICLE: sc.predictor.vehicle_period}


# training -------------------------------------------------------------------

@dataclass
class TrainReport:
    model_kind: str
    node_kind: str
    horizon: int
    window: int
    train_rows: int
    test_rows: int
    n_train: int
    n_test: int
    evaluation: Evaluation
    fit_seconds: float
    model_path: Optional[str] = None


def trace_scenario(sc: Scenario) -> Scenario:
    """The scenario used to collect training traces: same world, ego sweeping its speed range."""
    return dataclasses.replace(sc, ego_profile=sawtooth_profile(sc.duration_ms, sc.speed_min, sc.speed_max))


def generate_trace(sc: Scenario, seed: Optional[int] = None) -> List[dict]:
    seed = (sc.seed + TRACE_SEED_OFFSET) if seed is None else seed
    return trace_rows(generate_stream(trace_scenario(sc), seed).messages)


def model_config(sc: Scenario, kind: str) -> dict:
    if kind == "forest":
        return {"n_trees": sc.predictor.trees, "max_depth": sc.predictor.max_depth}
    return {}


def model_filename(kind: str, node_kind: str, horizon: int) -> str:
    return f"model_{kind}_{node_kind}_h{horizon}.bin"


def train_pipeline(sc: Scenario, kind: str, *, out_dir=None, rows: Optional[List[dict]] = None,
                   config: Optional[dict] = None) -> Tuple[List[PredictorModel], List[TrainReport]]:
    """Trace generation, windowing, fitting, evaluation and (optionally) saving.

    One model is trained per node kind, each for that kind's prediction period.
    Examples whose target cycle falls after the node left coverage are
    labelled with twice the AoI threshold.
    """
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown predictor kind {kind!r}; expected one of {MODEL_KINDS}")
    rows = generate_trace(sc) if rows is None else rows
    config = model_config(sc, kind) if config is None else config
    horizons = {"sensor": sc.predictor.sensor_period, "vehicle": sc.predictor.vehicle_period}
    present = sorted({r.get("kind", "sensor") for r in rows})
    models, reports = [], []
    for node_kind in present:
        horizon = horizons[node_kind]
        ds = make_dataset(rows, sc.predictor.window, horizon, missing_target=2.0 * sc.max_aoi, kind=node_kind)
        if ds.n_train == 0:
            log.warning("no %s training examples; skipping", node_kind)
            continue
        model = PredictorModel.create(kind, horizon, sc.predictor.window, config, node_kind=node_kind)
        start = time.perf_counter()
        model.fit(ds.X_train, ds.y_train)
        fit_seconds = time.perf_counter() - start
        X_eval, y_eval = (ds.X_test, ds.y_test) if ds.n_test else (ds.X_train, ds.y_train)
        report = TrainReport(kind, node_kind, horizon, ds.window, ds.train_rows, ds.test_rows,
                             ds.n_train, ds.n_test, evaluate(model, X_eval, y_eval), fit_seconds)
        if out_dir is not None:
            out = Path(out_dir)
            out.mkdir(parents=True, exist_ok=True)
            report.model_path = str(save_model(model, out / model_filename(kind, node_kind, horizon)))
        log.info("trained %s/%s h=%d: %d examples, MAE %.1f ms", kind, node_kind, horizon,
                 ds.n_train, report.evaluation.mae_ms)
        models.append(model)
        reports.append(report)
    if not models:
        raise ValueError("trace produced no training examples")
    return models, reports


def load_models(model_dir, kind: str) -> List[PredictorModel]:
    paths = sorted(Path(model_dir).glob(f"model_{kind}_*.bin"))
    if not paths:
        raise FileNotFoundError(f"no {kind} models in {model_dir}")
    return [load_model(p) for p in paths]


_MODEL_CACHE: Dict[Tuple[str, str], List[PredictorModel]] = {}


def build_forecaster(sc: Scenario, stream: Optional[EventStream] = None) -> Forecaster:
    """Forecaster for the scenario's predictor choice.

    The oracle reads the stream's ground truth. Trained kinds load from
    ``predictor.model_dir`` when it holds models, otherwise they are trained
    once per scenario and cached for the process.
    """
    kind = sc.predictor.kind
    if kind == "oracle":
        if stream is None:
            raise ValueError("the oracle forecaster needs the event stream")
        return OracleForecaster(stream.truth)
    if sc.predictor.model_dir and list(Path(sc.predictor.model_dir).glob(f"model_{kind}_*.bin")):
        return ModelForecaster.from_models(*load_models(sc.predictor.model_dir, kind))
    key = (scenario_id(sc), kind)
    if key not in _MODEL_CACHE:
        _MODEL_CACHE[key], _ = train_pipeline(sc, kind)
    return ModelForecaster.from_models(*_MODEL_CACHE[key])


# runs ---------------------------------------------------------------------------

def run_policy(stream: EventStream, sc: Scenario, policy: str,
               forecaster: Optional[Forecaster] = None) -> PolicyResult:
    cfg = engine_config(sc)
    if policy == "predictive":
        forecaster = forecaster or build_forecaster(sc, stream)
        return policy_predictive(stream, forecaster, periods(sc), cfg, l_pred_ms=sc.predictor.l_pred_ms,
                                 cluster=sc.predictor.cluster, bucket_width=sc.predictor.bucket_width,
                                 adaptive=sc.predictor.period_mode == "adaptive", n_max=sc.predictor.n_max,
                                 q=sc.q)
    if policy == "fifo":
        return policy_fifo(stream, cfg)
    if policy == "priority":
        return policy_priority(stream, cfg)
    if policy == "stop-n-wait":
        return policy_stop_n_wait(stream, config=cfg)
    raise ValueError(f"unknown policy {policy!r}; expected one of {POLICIES}")


def run_experiment(sc: Scenario, policy: Optional[str] = None, seed: Optional[int] = None, *,
                   forecaster: Optional[Forecaster] = None,
                   stream: Optional[EventStream] = None) -> Tuple[RunReport, PolicyResult]:
    policy = policy or sc.policy
    seed = sc.seed if seed is None else seed
    stream = stream or generate_stream(sc, seed)
    try:
        result = run_policy(stream, sc, policy, forecaster)
    except Exception as exc:
        raise RunError(f"{policy} run (seed {seed}): {exc}") from exc
    speed = sc.ego_speed if not sc.ego_profile else float("nan")
    report = report_from_result(result, stream, seed, scenario_id=scenario_id(sc), speed=speed)
    return report, result


def write_run(report: RunReport, result: PolicyResult, out_dir, when=None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, out / "report.csv", when)
    write_event_log(result, out / "events.csv")
    return out


def sweep(sc: Scenario, speeds: Sequence[float], policies: Sequence[str], seeds: Sequence[int], *,
          forecaster: Optional[Forecaster] = None, out_dir=None, when=None) -> Tuple[ComparisonTable, List[RunReport]]:
    """Every (speed, seed) cell runs all policies on one shared event stream."""
    if not speeds or not policies or not seeds:
        raise ValueError("speeds, policies and seeds must be non-empty")
    unknown = set(policies) - set(POLICIES)
    if unknown:
        raise ValueError(f"unknown policies {sorted(unknown)}")
    if "predictive" in policies and forecaster is None and sc.predictor.kind != "oracle":
        forecaster = build_forecaster(sc)
    reports: List[RunReport] = []
    for speed in speeds:
        cell = dataclasses.replace(sc, ego_speed=float(speed), ego_profile=())
        for seed in seeds:
            stream = generate_stream(cell, seed)
            log.info("cell speed=%s seed=%s stream=%s", speed, seed, stream.digest())
            for policy in policies:
                report, _ = run_experiment(cell, policy, seed, forecaster=forecaster, stream=stream)
                reports.append(report)
    table = compare_policies(reports)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_comparison_csv(table, out / "comparison.csv", when)
    return table, reports


# exit and entry reconstruction ------------------------------------------------

@dataclass
class PhaseSummary:
    speed: float
    cycles: List[int]
    issues: List[SequencingIssue]
    missing: List[Tuple[int, str]]     # (cycle, node) slots left empty
    mean_dssr: float


@dataclass
class ExitEntryTrace:
    slow: PhaseSummary
    fast: PhaseSummary
    result: PolicyResult


def reconstruct_exit_and_entry(sc: Optional[Scenario] = None, seed: int = 1) -> ExitEntryTrace:
    """Run the tagged predictive aggregator on the two-node speed-change scenario.

    Issues and empty slots are split into the slow and fast phases by the
    ego speed of the cycle they concern.
    """
    sc = sc or exit_and_entry_scenario()
    stream = generate_stream(sc, seed)
    # a constant forecast of zero AoI keeps every connection alive, so exits
    # surface as sequencing issues rather than planned terminations
    result = policy_predictive(stream, ConstantForecaster(0.0), periods(sc), engine_config(sc),
                               l_pred_ms=sc.predictor.l_pred_ms, cluster=False)
    speed_of = {r.cycle: r.ego_speed for r in result.records}
    dssr_of = {r.cycle: r.dssr for r in result.records}
    missing = [(int(row[0]), row[1]) for row in result.log if row[2] == "missing"]
    slow_speed = min(speed_of.values())

    def phase(slow: bool) -> PhaseSummary:
        def keep(c):
            return (speed_of.get(c, slow_speed) <= slow_speed) == slow
        cycles = sorted(c for c in speed_of if keep(c))
        values = [dssr_of[c] for c in cycles if dssr_of[c] is not None]
        return PhaseSummary(
            speed=speed_of[cycles[0]] if cycles else float("nan"), cycles=cycles,
            issues=[i for i in result.buffer.issues if keep(i.expected_cycle)],
            missing=[m for m in missing if keep(m[0])],
            mean_dssr=sum(values) / len(values) if values else float("nan"))

    return ExitEntryTrace(phase(True), phase(False), result)


# plots --------------------------------------------------------------------------

def emit_plots(in_dir, out_dir=None) -> List[Path]:
    """Render comparison.csv (and any report.csv below ``in_dir``) as SVG charts."""
    in_dir = Path(in_dir)
    out_dir = Path(out_dir) if out_dir is not None else in_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    comparison = in_dir / "comparison.csv"
    if comparison.exists():
        rows = read_csv_rows(comparison)
        if not rows:
            raise ValueError(f"{comparison}: no data rows")
        series_dssr: Dict[str, List[Tuple[float, float]]] = {}
        series_lat: Dict[str, List[Tuple[float, float]]] = {}
        try:
            for row in rows:
                x = float(row["speed_bucket"])
                series_dssr.setdefault(row["policy"], []).append((x, float(row["mean_dssr"])))
                series_lat.setdefault(row["policy"], []).append((x, float(row["mean_latency_ms"])))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{comparison}: malformed row ({exc})") from None
        written.append(line_chart(series_dssr, out_dir / "dssr_vs_speed.svg", "DSSR by ego speed",
                                  "ego speed (m/s)", "DSSR (%)"))
        written.append(line_chart(series_lat, out_dir / "latency_vs_speed.svg", "Latency by ego speed",
                                  "ego speed (m/s)", "mean latency (ms)"))
    reports = sorted(in_dir.rglob("report.csv"))
    if reports:
        bars: Dict[str, Tuple[float, float, float]] = {}
        for path in reports:
            rows = read_csv_rows(path)
            if not rows:
                raise ValueError(f"{path}: no data rows")
            label = path.parent.name if path.parent != in_dir else "run"
            try:
                parts = [sum(float(r[k]) for r in rows) / len(rows)
                         for k in ("latency_sequencing_ms", "latency_connection_ms",
                                   "latency_prediction_amortized_ms")]
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: malformed row ({exc})") from None
            bars[label] = tuple(parts)
        written.append(bar_chart(bars, ("sequencing", "connection", "prediction"),
                                 out_dir / "latency_breakdown.svg", "Latency breakdown", "ms"))
    if not written:
        raise FileNotFoundError(f"{in_dir}: no comparison.csv or report.csv to plot")
    return written
