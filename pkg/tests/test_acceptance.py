"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even without ``-s``.
"""
import math
import warnings

import numpy as np
import pytest

import test_predictor
import test_properties
from aoiagg.aggregator import policy_predictive
from aoiagg.channel import SPEED_OF_LIGHT, UpdateMessage, aoi, aoi_satisfaction_rate, mean_aoi
from aoiagg.harness import reconstruct_exit_and_entry, sweep
from aoiagg.kinematics import EgoState, NodeKind, NodeState, scar
from aoiagg.predictor.forecasters import ConstantForecaster, ModelForecaster
from aoiagg.predictor.lstm import LSTMConfig, LSTMRegressor, gradient_check
from aoiagg.predictor.model import PredictorModel, evaluate
from aoiagg.predictor.period import EmptyPeriodRange, choose_period, period_bounds
from aoiagg.scenario import POLICIES, default_scenario

from conftest import make_msg, make_stream

CASES = 200
TOL = 1e-9
SPEEDS = (15.0, 20.0, 25.0, 30.0)
SEEDS = (1, 2, 3)


@pytest.fixture
def verdict(capsys):
    def report(label, ok, detail=""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
        assert ok, f"{label}: {detail}"
    return report


# 1. equation oracles ------------------------------------------------------------

def test_criterion_1_equation_oracles(verdict):
    rng = np.random.default_rng(2024)
    worst = {}

    def track(name, got, want):
        worst[name] = max(worst.get(name, 0.0), abs(got - want))

    for _ in range(CASES):
        t_req = rng.uniform(0, 1e6)
        t_n = t_req - rng.uniform(0, 500)
        d = rng.uniform(0, 500)
        msg = UpdateMessage("n", 1, t_n, t_req, d)
        track("aoi", aoi(msg), (t_req - t_n) + d * 1000.0 / SPEED_OF_LIGHT)

        series = list(rng.uniform(0, 600, size=rng.integers(1, 20)))
        qt = len(series) + int(rng.integers(0, 10))
        padded = series + [0.0] * (qt - len(series))
        total = 0.0
        for value in padded:
            total += value
        track("mean_aoi", mean_aoi(series, qt), total / qt)

        threshold = rng.uniform(0, 600)
        hits = 0
        for value in series:
            if value <= threshold:
                hits += 1
        track("aoi_satisfaction_rate", aoi_satisfaction_rate(series, threshold), hits * 100.0 / len(series))

        radius = rng.uniform(10, 400)
        ego = EgoState(0.0, rng.uniform(0, 40))
        node = NodeState("v", NodeKind.VEHICLE, 5.0, speed=rng.uniform(-40, 40), coverage_radius=radius)
        track("scar", scar(ego, node), abs(ego.speed - node.speed) / (2 * radius))

        l_pred, q, s, n_max = rng.uniform(0, 2000), rng.uniform(0.5, 10), rng.uniform(0, 2), int(rng.integers(1, 30))
        lower = l_pred * q / 1000.0
        upper = q / s if s > 0 else math.inf
        admissible = [n for n in range(1, n_max + 1) if lower <= n <= upper]
        want = max(admissible) if admissible else min(n_max, max(1, math.ceil(lower)))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            got = choose_period(l_pred, q, s, n_max)
        track("choose_period", got, want)
        track("choose_period warning", float(any(issubclass(w.category, EmptyPeriodRange) for w in caught)),
              float(not admissible))

    ok = all(err <= TOL for err in worst.values())
    verdict("1 equation oracles", ok, f"{CASES} cases each, max abs error "
            + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


# 2. admissible period regime ---------------------------------------------------------

def test_criterion_2_pinned_periods_admissible(verdict):
    sensor = NodeState("s", NodeKind.SENSOR, 0.0)
    vehicle = NodeState("v", NodeKind.VEHICLE, 0.0, speed=15.0)
    failures = []
    for rel in np.linspace(0.0, 30.0, 301):
        for node, pinned in ((sensor, 5), (vehicle, 10)):
            ego = EgoState(0.0, node.speed + rel)
            lo, hi = period_bounds(100.0, 3.0, scar(ego, node), n_max=20)
            if not lo <= pinned <= hi:
                failures.append((node.kind.value, rel, lo, hi))
    verdict("2 pinned periods 5/10 admissible for relative speeds 0-30 m/s", not failures,
            f"{len(failures)} violations over 301 speeds" + (f", first {failures[0]}" if failures else ""))


# 3. periodic-prediction saving ---------------------------------------------------------

def _one_node_stream(cycles):
    return make_stream([make_msg("a", c, 40.0) for c in range(1, cycles + 1)], cycles)


def _timed_models(horizons, window=4):
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(64, window, 3)), rng.normal(size=64)
    cfg = dict(units=32, layers=2, epochs=0, dropout=0.0, recurrent_dropout=0.0)
    return [PredictorModel.create("recurrent", h, window, cfg).fit(X, y) for h in horizons]


def test_criterion_3_periodic_prediction_saving(verdict):
    ratios = []
    for cycles in (9, 12, 30, 60):
        stream = _one_node_stream(cycles)
        unit = policy_predictive(stream, ConstantForecaster(0.0), {NodeKind.SENSOR: 1}).invocations
        every3 = policy_predictive(stream, ConstantForecaster(0.0), {NodeKind.SENSOR: 3}).invocations
        ratios.append((cycles, every3, unit, every3 / unit))
    calls_ok = all(r[3] <= 0.58 for r in ratios)

    # measured: wall-clock prediction time spread over the cycles it covers
    cycles = 60
    stream = _one_node_stream(cycles)
    totals = {}
    for n in (1, 3):
        samples = []
        for _ in range(5):
            (model,) = _timed_models([n])
            policy_predictive(stream, ModelForecaster.from_models(model), {NodeKind.SENSOR: n})
            samples.append(sum(model.latencies_ms) / cycles)
        totals[n] = float(np.median(samples))
    reduction = 1.0 - totals[3] / totals[1]
    verdict("3 N=3 invocations <= 58% of unit-step and measured amortized latency >= 40% lower",
            calls_ok and reduction >= 0.40,
            "calls " + ", ".join(f"M={c}: {a}/{b}={r:.2f}" for c, a, b, r in ratios)
            + f"; amortized {totals[1]:.4f} -> {totals[3]:.4f} ms/cycle ({100 * reduction:.0f}% lower)")


# 4. gradient check -----------------------------------------------------------------------

def test_criterion_4_lstm_gradient_check(verdict):
    rng = np.random.default_rng(4)
    X, y = rng.normal(size=(5, 4, 3)), rng.normal(size=5)
    model = LSTMRegressor(LSTMConfig(units=4, layers=2, dropout=0.0, recurrent_dropout=0.0))
    err = gradient_check(model, X, y, eps=1e-5)
    verdict("4 recurrent gradient check", err <= 1e-4, f"max relative error {err:.2e} (limit 1e-4)")


# 5. predictor ordering ---------------------------------------------------------------------

def nonlinear_dataset(n=1200, steps=5, seed=5):
    """Windows of (speed, AoI); the target saturates sigmoidally in speed."""
    rng = np.random.default_rng(seed)
    speed = np.cumsum(rng.normal(0, 1.0, size=(n, steps)), axis=1) + rng.uniform(15, 30, size=(n, 1))
    aoi_hist = 60 + 250 / (1 + np.exp(-(speed - 22.5) / 1.5)) + rng.normal(0, 5, size=(n, steps))
    X = np.stack([speed, aoi_hist], axis=2)
    trend = speed[:, -1] + (speed[:, -1] - speed[:, -2])
    y = 60 + 250 / (1 + np.exp(-(trend - 22.5) / 1.5))
    cut = n * 8 // 9
    return X[:cut], y[:cut], X[cut:], y[cut:]


def test_criterion_5_predictor_ordering(verdict):
    X_train, y_train, X_test, y_test = nonlinear_dataset()
    linear = PredictorModel.create("linear", 1, X_train.shape[1]).fit(X_train, y_train)
    recurrent = PredictorModel.create("recurrent", 1, X_train.shape[1],
                                      dict(units=16, layers=1, epochs=40, batch_size=32, learning_rate=1e-2,
                                           dropout=0.0, recurrent_dropout=0.0)).fit(X_train, y_train)
    lin, rec = evaluate(linear, X_test, y_test), evaluate(recurrent, X_test, y_test)
    verdict("5 recurrent beats linear on MAE and costs more per prediction",
            rec.mae_ms < lin.mae_ms and rec.latency_ms > lin.latency_ms,
            f"MAE {rec.mae_ms:.2f} vs {lin.mae_ms:.2f} ms; latency {rec.latency_ms:.4f} vs {lin.latency_ms:.4f} ms")


# 6 and 7. policy comparison on the default scenario --------------------------------------

@pytest.fixture(scope="module")
def comparison():
    return sweep(default_scenario(duration_ms=300_000.0), SPEEDS, list(POLICIES), SEEDS)


def test_criterion_6a_predictive_matches_stop_n_wait(verdict, comparison):
    table, _ = comparison
    gaps = {s: table.dssr(s, "predictive") - table.dssr(s, "stop-n-wait") for s in SPEEDS}
    verdict("6a |DSSR predictive - stop-n-wait| <= 2 pp at every speed", all(abs(g) <= 2.0 for g in gaps.values()),
            ", ".join(f"{s:g}: {g:+.2f}" for s, g in gaps.items()))


def test_criterion_6b_arrival_order_policies_decline(verdict, comparison):
    table, _ = comparison
    details, ok = [], True
    for policy in ("fifo", "priority"):
        values = [table.dssr(s, policy) for s in SPEEDS]
        ok &= all(b <= a + 1.0 for a, b in zip(values, values[1:])) and values[-1] < values[0]
        details.append(f"{policy} " + " > ".join(f"{v:.1f}" for v in values))
    verdict("6b fifo and priority DSSR decline from 15 to 30 m/s", ok, "; ".join(details))


def test_criterion_6c_latency_ordering(verdict, comparison):
    table, _ = comparison
    details, ok = [], True
    for s in SPEEDS:
        snw = table.latency(s, "stop-n-wait")
        highest = all(snw >= table.latency(s, p) for p in POLICIES)
        reduction = table.latency_reduction("predictive", "stop-n-wait", s)
        ok &= highest and reduction >= 0.40
        details.append(f"{s:g}: snw {snw:.0f} ms{'' if highest else ' (not highest)'}, predictive "
                       f"{100 * reduction:.0f}% lower")
    verdict("6c stop-n-wait slowest, predictive >= 40% below it", ok, "; ".join(details))


def test_criterion_6d_predictive_dssr(verdict, comparison):
    table, _ = comparison
    mean = float(np.mean([table.dssr(s, "predictive") for s in SPEEDS]))
    verdict("6d predictive mean DSSR >= 95%", mean >= 95.0, f"{mean:.2f}%")


def test_criterion_7_threshold_compliance(verdict, comparison):
    table, reports = comparison
    pred = [r for r in reports if r.policy == "predictive"]
    latency = float(np.mean([r.mean_latency for r in pred]))
    share = float(np.mean([r.mean_sequencing for r in pred])) / latency
    worst = max(table.latency(s, "predictive") for s in SPEEDS)
    verdict("7 predictive latency <= 333 ms with sequencing 70-95% of it",
            worst <= 1000.0 / 3.0 and latency <= 1000.0 / 3.0 and 0.70 <= share <= 0.95,
            f"mean {latency:.1f} ms (worst speed {worst:.1f} ms), sequencing share {100 * share:.1f}%")


# 8. exit and entry reconstruction -------------------------------------------------------------

def test_criterion_8_exit_and_entry(verdict):
    trace = reconstruct_exit_and_entry()
    slow_ok = not trace.slow.issues and not trace.slow.missing and trace.slow.mean_dssr == 100.0
    exited = [i for i in trace.fast.issues if i.node_id == "S1"]
    entering = [i for i in trace.fast.issues if i.node_id == "V2"]
    missing = [node for _, node in trace.fast.missing]
    fast_ok = ("S1" in missing and any(i.offset == -1 for i in exited)
               and any(i.offset == 1 for i in entering))
    verdict("8 15 m/s sequenced cleanly; 30 m/s shows the exited sensor missing (-1) and the approaching "
            "vehicle early (+1)", slow_ok and fast_ok,
            f"slow: {len(trace.slow.issues)} issues, DSSR {trace.slow.mean_dssr:.1f}; fast: missing {missing}, "
            f"S1 offsets {sorted({i.offset for i in exited})}, V2 offsets {sorted({i.offset for i in entering})}")


# 9. property suites ----------------------------------------------------------------------------

@pytest.mark.parametrize("name,check", [
    ("message conservation", test_properties.test_message_conservation),
    ("clustering partition", test_predictor.test_clusters_partition_nodes),
    ("terminate-then-silence", test_properties.test_terminated_node_stays_silent),
    ("seed-identical reports", test_properties.test_equal_seeds_give_identical_reports),
])
def test_criterion_9_properties(verdict, name, check):
    examples = check._hypothesis_internal_use_settings.max_examples
    failure = None
    try:
        check()
    except Exception as exc:  # the falsifying example is in the message
        failure = exc
    verdict(f"9 property: {name}", failure is None and examples >= 1000,
            f"{examples} examples" + (f", falsified: {failure}" if failure else ""))
