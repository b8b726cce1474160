"""Broadcast updates, the delay model and AoI accounting."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence

import numpy as np

from .kinematics import EgoState, NodeKind, NodeState, relative_distance, relative_speed

SPEED_OF_LIGHT = 3.0e8


class ClockError(ValueError):
    """Raised when an update claims to originate after it was requested."""


@dataclass
class UpdateMessage:
    source_id: str
    cycle: int
    originated_at: float
    requested_at: float
    distance_at_send: float
    source_kind: NodeKind = NodeKind.SENSOR
    rel_speed: float = 0.0
    sent_at: Optional[float] = None
    # fraction of the degraded coverage rim reached, in [0, 1]
    edge_stress: float = 0.0
    arrival_at: Optional[float] = None
    aoi: Optional[float] = None

    def __post_init__(self):
        if self.sent_at is None:
            self.sent_at = self.requested_at


@dataclass(frozen=True)
class DelayModel:
    """Parametric stand-in for everything between sampling and reception.

    ``propagation_speed`` is in m/s, all other values in ms. The ``edge_*``
    fields model link degradation near the rim of a node's coverage: the rim
    is the outer ``edge_width + edge_width_per_mps * rel_speed`` fraction of
    the radius, and a node at stress ``s`` in that rim adds
    ``edge_aoi_ms * s**edge_exponent`` of sampling lag and
    ``edge_link_ms * s**edge_exponent`` of link delay.
    """

    propagation_speed: float = SPEED_OF_LIGHT
    access_delay_mean: float = 40.0
    access_delay_jitter: float = 20.0
    origination_offset_max: float = 250.0
    edge_aoi_ms: float = 0.0
    edge_link_ms: float = 0.0
    edge_width: float = 0.1
    edge_width_per_mps: float = 0.0
    edge_exponent: float = 2.0

    def __post_init__(self):
        for name in ("access_delay_mean", "access_delay_jitter", "origination_offset_max",
                     "edge_aoi_ms", "edge_link_ms", "edge_width", "edge_width_per_mps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.propagation_speed <= 0:
            raise ValueError("propagation_speed must be > 0")
        if self.access_delay_jitter > self.access_delay_mean:
            raise ValueError("access_delay_jitter must not exceed access_delay_mean")

    def propagation_ms(self, distance: float) -> float:
        return distance / self.propagation_speed * 1000.0

    def edge_stress(self, distance: float, radius: float, rel_speed: float) -> float:
        width = min(1.0, self.edge_width + self.edge_width_per_mps * rel_speed)
        if width <= 0:
            return 0.0
        return float(np.clip((distance / radius - (1.0 - width)) / width, 0.0, 1.0))


@dataclass(frozen=True)
class UpdateSchedule:
    q: float = 3.0
    total_time: float = 1_200_000.0

    def __post_init__(self):
        if self.q <= 0:
            raise ValueError("q must be > 0")
        if self.total_time <= 0:
            raise ValueError("total_time must be > 0")

    @property
    def max_aoi(self) -> float:
        return 1000.0 / self.q

    @property
    def period_ms(self) -> float:
        return 1000.0 / self.q

    @property
    def total_cycles(self) -> int:
        return int(math.floor(self.q * self.total_time / 1000.0 + 1e-9))

    def request_time(self, cycle: int) -> float:
        return (cycle - 1) * self.period_ms


def originate(node: NodeState, cycle: int, request_time: float, rng: np.random.Generator, *,
              ego: EgoState, delay_model: DelayModel,
              ring_length: Optional[float] = None) -> UpdateMessage:
    """Sample one update from ``node`` for the ego's request at ``request_time``.

    The caller guarantees the node is in coverage. Exactly one uniform is
    drawn here (the sampling offset), keeping the stream layout fixed.
    """
    if cycle <= 0:
        raise ValueError("cycle must be >= 1")
    distance = relative_distance(ego, node, ring_length)
    speed = relative_speed(ego, node)
    stress = delay_model.edge_stress(distance, node.coverage_radius, speed)
    sent_at = request_time + node.phase_ms
    offset = rng.uniform(0.0, delay_model.origination_offset_max) if delay_model.origination_offset_max else 0.0
    offset += delay_model.edge_aoi_ms * stress ** delay_model.edge_exponent
    return UpdateMessage(source_id=node.id, cycle=cycle, originated_at=sent_at - offset,
                         requested_at=request_time, distance_at_send=distance,
                         source_kind=node.kind, rel_speed=speed, sent_at=sent_at,
                         edge_stress=stress)


def deliver(msg: UpdateMessage, delay_model: DelayModel, rng: np.random.Generator) -> UpdateMessage:
    """Fill ``arrival_at``; one uniform is drawn for the access jitter."""
    access = delay_model.access_delay_mean
    if delay_model.access_delay_jitter:
        access += rng.uniform(-delay_model.access_delay_jitter, delay_model.access_delay_jitter)
    access = max(0.0, access)
    link = delay_model.edge_link_ms * msg.edge_stress ** delay_model.edge_exponent
    msg.arrival_at = msg.sent_at + delay_model.propagation_ms(msg.distance_at_send) + access + link
    return msg


def aoi(msg: UpdateMessage, propagation_speed: float = SPEED_OF_LIGHT) -> float:
    """Age of the update at the ego's request, in ms; stored on the message."""
    value = msg.requested_at + msg.distance_at_send / propagation_speed * 1000.0 - msg.originated_at
    if value < 0:
        raise ClockError(
            f"update {msg.source_id}/{msg.cycle} originated at {msg.originated_at} "
            f"after request at {msg.requested_at}")
    msg.aoi = value
    return value


def mean_aoi(series: Sequence[float], cycles: int) -> float:
    """Mean AoI over a fixed number of cycles; silent cycles add zero."""
    if cycles <= 0:
        raise ValueError("cycles must be >= 1")
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    if cycles < len(series):
        raise ValueError("cycles must be >= len(series)")
    return math.fsum(series) / cycles


def aoi_satisfaction_rate(series: Sequence[float], threshold: float) -> float:
    if len(series) == 0:
        raise ValueError("series must be non-empty")
    hits = sum(1 for t in series if t <= threshold)
    return 100.0 * hits / len(series)


TRACE_FIELDS = ("time_ms", "node_id", "cycle", "aoi_ms", "rel_speed_mps", "kind")


def trace_rows(messages: Iterable[UpdateMessage]) -> List[dict]:
    """Trace records in the same shape :func:`read_trace_csv` returns."""
    rows = [{"time_ms": m.requested_at, "node_id": m.source_id, "cycle": m.cycle, "aoi_ms": m.aoi,
             "rel_speed_mps": m.rel_speed, "kind": m.source_kind.value} for m in messages]
    rows.sort(key=lambda r: (r["time_ms"], r["node_id"]))
    return rows


def write_trace_csv(messages: Iterable[UpdateMessage], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_FIELDS)
        for msg in messages:
            writer.writerow([repr(msg.requested_at), msg.source_id, msg.cycle, repr(msg.aoi),
                             repr(msg.rel_speed), msg.source_kind.value])


def read_trace_csv(path) -> List[dict]:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(TRACE_FIELDS[:4]) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing trace columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append({
                    "time_ms": float(row["time_ms"]),
                    "node_id": row["node_id"],
                    "cycle": int(row["cycle"]),
                    "aoi_ms": float(row["aoi_ms"]),
                    "rel_speed_mps": float(row.get("rel_speed_mps") or 0.0),
                    "kind": row.get("kind") or "sensor",
                })
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return rows
