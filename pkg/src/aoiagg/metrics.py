"""Per-cycle metrics, run reports and cross-policy comparison tables."""
from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .aggregator import LOG_FIELDS, CycleRecord, PolicyResult
from .channel import aoi_satisfaction_rate

SPEED_BUCKET = 5.0


class ComparisonError(ValueError):
    pass


@dataclass(frozen=True)
class LatencyComponents:
    sequencing_ms: float
    connection_ms: float
    prediction_ms: float

    @property
    def total_ms(self) -> float:
        return self.sequencing_ms + self.connection_ms + self.prediction_ms


def cycle_latency(wait_ms: float, decision_cost_ms: float, l_pred_ms: float, period: int) -> LatencyComponents:
    """Split one cycle's latency; prediction cost is spread over its period."""
    if min(wait_ms, decision_cost_ms, l_pred_ms) < 0:
        raise ValueError("latency inputs must be >= 0")
    if period < 1:
        raise ValueError("period must be >= 1")
    return LatencyComponents(wait_ms, decision_cost_ms, l_pred_ms / period)


def dssr(segment: Mapping[str, object], expected: Iterable[str], cycle: int) -> Optional[float]:
    """Percent of expected nodes whose own cycle-``cycle`` update sits in the segment.

    ``segment`` maps node id to the message placed in that node's slot. None
    when nothing was expected.
    """
    expected = set(expected)
    if not expected:
        return None
    correct = sum(1 for n in expected if n in segment and getattr(segment[n], "cycle", None) == cycle)
    return 100.0 * correct / len(expected)


@dataclass(frozen=True)
class CycleMetrics:
    cycle: int
    dssr: Optional[float]
    latency_ms: float
    latency_sequencing_ms: float
    latency_connection_ms: float
    latency_prediction_amortized_ms: float
    max_aoi_observed: float
    ego_speed: float = 0.0
    expected: int = 0
    correct: int = 0

    @classmethod
    def from_record(cls, rec: CycleRecord, denominator: str = "expected") -> "CycleMetrics":
        if denominator == "expected":
            value = rec.dssr
        elif denominator == "received":
            value = None if rec.placed == 0 else 100.0 * min(rec.correct, rec.placed) / rec.placed
        else:
            raise ValueError(f"unknown DSSR denominator {denominator!r}")
        parts = LatencyComponents(rec.wait_ms, rec.decision_ms, rec.prediction_ms)
        return cls(rec.cycle, value, parts.total_ms, parts.sequencing_ms, parts.connection_ms,
                   parts.prediction_ms, rec.max_aoi_observed, rec.ego_speed, rec.expected, rec.correct)


@dataclass
class RunReport:
    policy: str
    seed: int
    cycles: List[CycleMetrics]
    mean_dssr: float
    mean_latency: float
    mean_sequencing: float
    mean_connection: float
    mean_prediction: float
    aoi_satisfaction: float
    prediction_invocations: int
    scenario_id: str = ""
    stream_digest: str = ""
    speed: float = float("nan")

    @property
    def sequencing_share(self) -> float:
        return self.mean_sequencing / self.mean_latency if self.mean_latency else float("nan")


def aggregate_report(cycles: Sequence[CycleMetrics], policy: str, seed: int, *,
                     aoi_satisfaction: float = float("nan"), prediction_invocations: int = 0,
                     scenario_id: str = "", stream_digest: str = "", speed: float = float("nan")) -> RunReport:
    cycles = list(cycles)
    defined = [c.dssr for c in cycles if c.dssr is not None]
    if not cycles or not defined:
        raise ValueError("run has no cycle with a defined DSSR")
    return RunReport(
        policy=policy, seed=seed, cycles=cycles,
        mean_dssr=statistics.fmean(defined),
        mean_latency=statistics.fmean(c.latency_ms for c in cycles),
        mean_sequencing=statistics.fmean(c.latency_sequencing_ms for c in cycles),
        mean_connection=statistics.fmean(c.latency_connection_ms for c in cycles),
        mean_prediction=statistics.fmean(c.latency_prediction_amortized_ms for c in cycles),
        aoi_satisfaction=aoi_satisfaction, prediction_invocations=prediction_invocations,
        scenario_id=scenario_id, stream_digest=stream_digest, speed=speed)


def report_from_result(result: PolicyResult, stream, seed: int, *, scenario_id: str = "",
                       speed: float = float("nan"), denominator: str = "expected") -> RunReport:
    cycles = [CycleMetrics.from_record(r, denominator) for r in result.records]
    aois = [m.aoi for m in stream.messages]
    satisfaction = aoi_satisfaction_rate(aois, stream.schedule.max_aoi) if aois else float("nan")
    return aggregate_report(cycles, result.policy, seed, aoi_satisfaction=satisfaction,
                            prediction_invocations=result.invocations, scenario_id=scenario_id,
                            stream_digest=result.stream_digest, speed=speed)


# comparison -------------------------------------------------------------------

def speed_bucket(speed: float, width: float = SPEED_BUCKET) -> float:
    return width * math.floor(speed / width + 0.5)


@dataclass
class ComparisonTable:
    # (bucket, policy) -> (mean DSSR, mean latency, runs)
    cells: Dict[Tuple[float, str], Tuple[float, float, int]]
    policies: List[str]
    buckets: List[float]
    reference: Optional[str] = None

    def dssr(self, bucket: float, policy: str) -> float:
        return self.cells[(bucket, policy)][0]

    def latency(self, bucket: float, policy: str) -> float:
        return self.cells[(bucket, policy)][1]

    def delta(self, a: str, b: str, bucket: float) -> Tuple[float, float]:
        """(DSSR difference in pp, latency difference in ms) of ``a`` minus ``b``."""
        return self.dssr(bucket, a) - self.dssr(bucket, b), self.latency(bucket, a) - self.latency(bucket, b)

    def latency_reduction(self, a: str, b: str, bucket: float) -> float:
        """Fraction by which ``a``'s latency is below ``b``'s."""
        return 1.0 - self.latency(bucket, a) / self.latency(bucket, b)


def _bucket_means(report: RunReport, width: float) -> Dict[float, Tuple[float, float]]:
    grouped: Dict[float, List[CycleMetrics]] = {}
    for c in report.cycles:
        speed = report.speed if not math.isnan(report.speed) else c.ego_speed
        grouped.setdefault(speed_bucket(speed, width), []).append(c)
    out = {}
    for bucket, cs in grouped.items():
        defined = [c.dssr for c in cs if c.dssr is not None]
        if defined:
            out[bucket] = (statistics.fmean(defined), statistics.fmean(c.latency_ms for c in cs))
    return out


def compare_policies(reports: Sequence[RunReport], reference: Optional[str] = "predictive",
                     width: float = SPEED_BUCKET) -> ComparisonTable:
    """Mean DSSR and latency per (speed bucket, policy), averaged over runs.

    Every report must come from the same scenario, and every policy must
    cover the same set of (speed, seed) runs so the comparison is paired.
    """
    if not reports:
        raise ComparisonError("no reports to compare")
    scenario_ids = {r.scenario_id for r in reports}
    if len(scenario_ids) > 1:
        raise ComparisonError(f"reports come from different scenarios: {sorted(scenario_ids)}")
    runs: Dict[str, set] = {}
    for r in reports:
        runs.setdefault(r.policy, set()).add((r.speed, r.seed))
    run_sets = list(runs.values())
    if any(s != run_sets[0] for s in run_sets):
        raise ComparisonError("policies were not run on the same speeds and seeds")
    acc: Dict[Tuple[float, str], List[Tuple[float, float]]] = {}
    for r in reports:
        for bucket, values in _bucket_means(r, width).items():
            acc.setdefault((bucket, r.policy), []).append(values)
    cells = {key: (statistics.fmean(v[0] for v in vals), statistics.fmean(v[1] for v in vals), len(vals))
             for key, vals in acc.items()}
    policies = sorted(runs)
    buckets = sorted({b for b, _ in cells})
    return ComparisonTable(cells, policies, buckets, reference if reference in runs else None)


# CSV output -----------------------------------------------------------------

REPORT_FIELDS = ("cycle", "dssr", "latency_ms", "latency_sequencing_ms", "latency_connection_ms",
                 "latency_prediction_amortized_ms", "max_aoi_observed", "ego_speed")


def timestamp_line(when: Optional[datetime] = None) -> str:
    when = when or datetime.now(timezone.utc)
    return f"# generated {when.replace(microsecond=0).isoformat()}\n"


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6f}"
    return str(value)


def write_report_csv(report: RunReport, path, when: Optional[datetime] = None) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(timestamp_line(when))
    buf.write(f"# policy={report.policy} seed={report.seed} stream={report.stream_digest}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for c in report.cycles:
        writer.writerow([_fmt(getattr(c, f)) for f in REPORT_FIELDS])
    path.write_text(buf.getvalue())
    return path


COMPARISON_FIELDS = ("speed_bucket", "policy", "mean_dssr", "mean_latency_ms", "runs",
                     "dssr_delta_vs_reference_pp", "latency_reduction_vs_reference")


def write_comparison_csv(table: ComparisonTable, path, when: Optional[datetime] = None) -> Path:
    path = Path(path)
    buf = io.StringIO()
    buf.write(timestamp_line(when))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COMPARISON_FIELDS)
    for bucket in table.buckets:
        for policy in table.policies:
            if (bucket, policy) not in table.cells:
                continue
            mean_dssr, mean_lat, n = table.cells[(bucket, policy)]
            d_dssr = red = ""
            ref = table.reference
            if ref and (bucket, ref) in table.cells and policy != ref:
                d_dssr = _fmt(table.delta(ref, policy, bucket)[0])
                red = _fmt(table.latency_reduction(ref, policy, bucket))
            writer.writerow([_fmt(bucket), policy, _fmt(mean_dssr), _fmt(mean_lat), n, d_dssr, red])
    path.write_text(buf.getvalue())
    return path


def read_csv_rows(path) -> List[dict]:
    """Rows of a report/comparison CSV, skipping ``#`` comment lines."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    if not lines:
        raise ValueError(f"{path}: no header row")
    reader = csv.DictReader(lines)
    return list(reader)


def read_event_log(path) -> List[dict]:
    rows = read_csv_rows(path)
    if rows and set(LOG_FIELDS) - set(rows[0]):
        raise ValueError(f"{path}: missing event-log columns")
    return rows


def write_event_log(result: PolicyResult, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_FIELDS)
        for row in result.log:
            writer.writerow([_fmt(v) for v in row])
    return path


def issue_counts(rows: Iterable[Mapping]) -> Dict[int, int]:
    """Number of logged placements per cycle offset (nonzero offsets are issues)."""
    counts: Dict[int, int] = {}
    for row in rows:
        offset = int(row["offset"])
        if offset:
            counts[offset] = counts.get(offset, 0) + 1
    return counts
