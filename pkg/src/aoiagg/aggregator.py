"""Ego-side service aggregation: update buffer, connection decisions, policies.

All four policies walk the same arrival stream cycle by cycle. A segment
opens at ``max(request time, previous close)`` and closes according to the
policy; arrivals up to the close instant are handled while that segment is
current.

* ``predictive``  - AoI-gated admission, periodic N-step-ahead predictions
  decide Maintain/Terminate, updates are routed by their cycle tag, the
  segment waits for expected nodes until the deadline.
* ``stop-n-wait`` - routes by cycle tag and waits for every expected node
  until a per-node timeout.
* ``fifo``        - fills the current segment with whatever arrives first.
* ``priority``    - like fifo, but vehicle updates are served before sensor
  updates, then by ascending AoI.
"""
from __future__ import annotations

import enum
import math
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Callable, Deque, Dict, Iterable, List, Optional, Sequence, Set, Tuple

from .channel import UpdateMessage
from .kinematics import NodeKind
from .predictor.period import choose_period, cluster_nodes


class Action(enum.Enum):
    INITIATE = "initiate"
    MAINTAIN = "maintain"
    TERMINATE = "terminate"


@dataclass(frozen=True)
class ConnectionDecision:
    node_id: str
    action: Action
    effective_cycle: int
    basis: str  # "measured" | "predicted" | "deferred" | "silence"


@dataclass(frozen=True)
class SequencingIssue:
    node_id: str
    expected_cycle: int
    actual_cycle: int
    detected_at: float
    reason: str = "out-of-order"

    @property
    def offset(self) -> int:
        return self.actual_cycle - self.expected_cycle


class UpdateBuffer:
    """Data buffer B plus per-cycle update segments."""

    def __init__(self, history_depth: int = 2):
        self.history_depth = history_depth
        self.data_buffer: List[UpdateMessage] = []
        self.segments: Dict[int, Dict[str, UpdateMessage]] = defaultdict(dict)
        self.current_cycle = 1
        self.issues: List[SequencingIssue] = []
        self.discarded: List[Tuple[UpdateMessage, str]] = []
        # id(msg) -> fate, for conservation accounting
        self.fate: Dict[int, str] = {}

    def is_frozen(self, cycle: int) -> bool:
        return cycle < self.current_cycle - self.history_depth

    def has(self, cycle: int, node_id: str) -> bool:
        return node_id in self.segments.get(cycle, ())

    def discard(self, msg: UpdateMessage, reason: str) -> str:
        self.discarded.append((msg, reason))
        self.fate[id(msg)] = "discarded"
        return "discarded"

    def place_tagged(self, msg: UpdateMessage, now: float, track_issue: bool = True,
                     reference: Optional[int] = None) -> str:
        """Route ``msg`` to the segment of its own cycle.

        ``track_issue`` is False for a source's initiating update, which no
        segment was waiting for. ``reference`` is the request window the
        arrival fell in (default: the open cycle); offsets are measured
        against it.
        """
        m = self.current_cycle
        ref = m if reference is None else reference
        if self.is_frozen(msg.cycle):
            self.issues.append(SequencingIssue(msg.source_id, ref, msg.cycle, now, "stale"))
            return self.discard(msg, "stale")
        if msg.cycle != ref and track_issue:
            self.issues.append(SequencingIssue(msg.source_id, ref, msg.cycle, now))
        if msg.source_id in self.segments[msg.cycle]:
            return self.discard(msg, "duplicate")
        self.data_buffer.append(msg)
        self.segments[msg.cycle][msg.source_id] = msg
        outcome = "placed" if msg.cycle == m else ("parked" if msg.cycle > m else "late")
        self.fate[id(msg)] = outcome
        return outcome

    def purge(self, node_id: str, from_cycle: int) -> None:
        """Drop updates a departed node had parked in segments >= ``from_cycle``."""
        for cycle in sorted(self.segments):
            if cycle >= from_cycle and node_id in self.segments[cycle]:
                msg = self.segments[cycle].pop(node_id)
                self.data_buffer = [m for m in self.data_buffer if m is not msg]
                self.discard(msg, "terminated")

    def place_into(self, msg: UpdateMessage, segment: int, slot: str, now: float) -> str:
        """Put ``msg`` in ``segment`` regardless of its tag (arrival-order policies)."""
        if msg.cycle != segment:
            self.issues.append(SequencingIssue(msg.source_id, segment, msg.cycle, now, "misplaced"))
        self.data_buffer.append(msg)
        self.segments[segment][slot] = msg
        self.fate[id(msg)] = "placed" if msg.cycle == segment else "misplaced"
        return self.fate[id(msg)]


@dataclass
class NodeRegistry:
    active: Set[str] = field(default_factory=set)
    kind_of: Dict[str, NodeKind] = field(default_factory=dict)
    cluster_of: Dict[str, int] = field(default_factory=dict)
    next_decision_at: Dict[str, int] = field(default_factory=dict)
    terminate_at: Dict[str, int] = field(default_factory=dict)
    admitted_at: Dict[str, int] = field(default_factory=dict)
    misses: Dict[str, int] = field(default_factory=dict)

    def add(self, node_id: str, kind: NodeKind, cycle: int) -> None:
        self.active.add(node_id)
        self.kind_of[node_id] = kind
        self.admitted_at[node_id] = cycle
        self.misses[node_id] = 0
        self.terminate_at.pop(node_id, None)

    def remove(self, node_id: str) -> None:
        self.active.discard(node_id)
        for table in (self.cluster_of, self.next_decision_at, self.terminate_at, self.misses):
            table.pop(node_id, None)

    def expected(self, cycle: int) -> Set[str]:
        """Nodes whose cycle-``cycle`` update the segment waits for."""
        return {n for n in self.active
                if self.admitted_at[n] < cycle and n not in self.terminate_at}


# ---------------------------------------------------------------------------
# Algorithm steps

def admit_new_node(msg: UpdateMessage, max_aoi: float, registry: NodeRegistry,
                   buffer: Optional[UpdateBuffer] = None, now: Optional[float] = None,
                   gate: bool = True) -> Optional[ConnectionDecision]:
    """Initiate a connection with an unknown source if its AoI is acceptable.

    Returns None when the update is discarded.
    """
    if msg.source_id in registry.active:
        raise ValueError(f"{msg.source_id} is already connected")
    if gate and msg.aoi > max_aoi:
        if buffer is not None:
            buffer.discard(msg, "aoi")
        return None
    # connected as of the cycle its initiating update belongs to
    cycle = msg.cycle if buffer is None else min(msg.cycle, buffer.current_cycle)
    registry.add(msg.source_id, msg.source_kind, cycle)
    if buffer is not None:
        buffer.place_tagged(msg, msg.arrival_at if now is None else now, track_issue=False)
    return ConnectionDecision(msg.source_id, Action.INITIATE, cycle, "measured")


def on_update(msg: UpdateMessage, buffer: UpdateBuffer, registry: NodeRegistry, max_aoi: float,
              now: Optional[float] = None, gate: bool = True, reference: Optional[int] = None) -> str:
    """Handle one arrival; returns its fate.

    ``reference`` is the request window the arrival fell in, when that is
    earlier than the open cycle (the gap between a segment closing and the
    next request).
    """
    now = msg.arrival_at if now is None else now
    ref = buffer.current_cycle if reference is None else reference
    known = msg.source_id in registry.active
    if not known and msg.cycle >= buffer.current_cycle:
        decision = admit_new_node(msg, max_aoi, registry, buffer, now, gate)
        return "initiated" if decision else "discarded"
    if not known or msg.cycle < registry.admitted_at[msg.source_id]:
        # a late sample from an unknown source, or one predating the current
        # connection, enters no segment; any disorder is still recorded
        if msg.cycle != ref:
            reason = "stale" if buffer.is_frozen(msg.cycle) else "out-of-order"
            buffer.issues.append(SequencingIssue(msg.source_id, ref, msg.cycle, now, reason))
        return buffer.discard(msg, "disconnected")
    if gate and msg.aoi > max_aoi:
        return buffer.discard(msg, "aoi")
    return buffer.place_tagged(msg, now, reference=ref)


Window = Sequence[Tuple[float, float, float]]


class Forecaster:
    """Interface used by the predictive policy."""

    window_size: int = 1

    def forecast(self, node_id: str, kind: NodeKind, window: Window, cycle: int, horizon: int) -> float:
        raise NotImplementedError


def periodic_decision(node_id: str, forecaster: Forecaster, window: Optional[Window], cycle: int,
                      period: int, max_aoi: float, registry: NodeRegistry,
                      kind: Optional[NodeKind] = None) -> Tuple[ConnectionDecision, Optional[float]]:
    """Predict the AoI ``period`` cycles ahead and maintain or terminate."""
    kind = kind or registry.kind_of.get(node_id, NodeKind.SENSOR)
    if window is None or len(window) < forecaster.window_size:
        registry.next_decision_at[node_id] = cycle + period
        return ConnectionDecision(node_id, Action.MAINTAIN, cycle, "deferred"), None
    predicted = forecaster.forecast(node_id, kind, window, cycle, period)
    return decide_from_prediction(node_id, predicted, cycle, period, max_aoi, registry), predicted


def decide_from_prediction(node_id: str, predicted: float, cycle: int, period: int, max_aoi: float,
                           registry: NodeRegistry) -> ConnectionDecision:
    registry.next_decision_at[node_id] = cycle + period
    if predicted > max_aoi:
        registry.terminate_at[node_id] = cycle + period
        return ConnectionDecision(node_id, Action.TERMINATE, cycle + period, "predicted")
    return ConnectionDecision(node_id, Action.MAINTAIN, cycle + period, "predicted")


# ---------------------------------------------------------------------------
# engine

@dataclass
class CycleRecord:
    cycle: int
    request_time: float
    open_time: float
    close_time: float
    expected: int
    correct: int
    wait_ms: float
    decision_ms: float
    prediction_ms: float
    prediction_period: int
    max_aoi_observed: float
    placed: int
    ego_speed: float = 0.0

    @property
    def dssr(self) -> Optional[float]:
        return None if self.expected == 0 else 100.0 * self.correct / self.expected


LOG_FIELDS = ("cycle", "node", "action", "segment", "offset", "wait_ms")


@dataclass
class PolicyResult:
    policy: str
    records: List[CycleRecord]
    buffer: UpdateBuffer
    registry: NodeRegistry
    decisions: List[ConnectionDecision]
    log: List[tuple]
    invocations: int = 0
    stream_digest: str = ""


@dataclass(frozen=True)
class EngineConfig:
    max_aoi: float = 1000.0 / 3.0
    history_depth: int = 2
    silence_cycles: int = 1
    deadline: Optional[float] = None            # ms after request; default max_aoi
    snw_timeout: Optional[float] = None         # ms after request; default 3 * period
    # arrival-order policies cannot tell a missing update from a late one
    arrival_order_silence_cycles: int = 5
    decision_base_ms: float = 5.0
    decision_per_node_ms: float = 0.0
    keep_log: bool = True


class _Engine:
    name = "base"
    gate = False

    def __init__(self, config: EngineConfig):
        self.cfg = config
        self.buffer = UpdateBuffer(config.history_depth)
        self.registry = NodeRegistry()
        self.decisions: List[ConnectionDecision] = []
        self.log: List[tuple] = []
        self.invocations = 0

    # hooks --------------------------------------------------------------
    def begin_cycle(self, m: int, t_m: float, stream) -> None:
        pass

    def prediction_charge(self, m: int) -> Tuple[float, int]:
        return 0.0, 0

    def deadline(self, m: int, t_m: float, period: float) -> float:
        return t_m + (self.cfg.deadline if self.cfg.deadline is not None else self.cfg.max_aoi)

    # helpers ------------------------------------------------------------
    def _log(self, *row) -> None:
        if self.cfg.keep_log:
            self.log.append(row)

    def _decide(self, decision: ConnectionDecision, m: int) -> None:
        self.decisions.append(decision)
        self._log(m, decision.node_id, decision.action.value, decision.effective_cycle, 0, 0.0)

    def silence_limit(self) -> int:
        return self.cfg.silence_cycles

    def _end_cycle(self, m: int, expected: Iterable[str], satisfied: Set[str], close: float, t_m: float):
        for node in sorted(expected):
            if node in satisfied:
                self.registry.misses[node] = 0
                continue
            self._log(m, node, "missing", m, 0, close - t_m)
            if node not in self.registry.active:
                continue
            self.registry.misses[node] = self.registry.misses.get(node, 0) + 1
            # an update already parked for a later cycle is proof of presence
            newer = any(node in seg for c, seg in self.buffer.segments.items() if c > m)
            if self.registry.misses[node] >= self.silence_limit() and not newer:
                self.registry.remove(node)
                self.buffer.purge(node, m + 1)
                self._decide(ConnectionDecision(node, Action.TERMINATE, m + 1, "silence"), m)

    def _record(self, m, t_m, open_t, close, expected, correct, segment_msgs, stream) -> CycleRecord:
        own = [msg for msg in segment_msgs if msg.cycle == m]
        # age of the oldest cycle-m sample when the segment is sequenced
        wait = close - min(msg.originated_at for msg in own) if own else close - t_m
        max_seen = max((msg.aoi for msg in segment_msgs), default=0.0)
        decision = self.cfg.decision_base_ms + self.cfg.decision_per_node_ms * len(expected)
        pred_ms, period = self.prediction_charge(m)
        return CycleRecord(cycle=m, request_time=t_m, open_time=open_t, close_time=close,
                           expected=len(expected), correct=correct, wait_ms=max(0.0, wait),
                           decision_ms=decision, prediction_ms=pred_ms, prediction_period=period,
                           max_aoi_observed=max_seen, placed=len(segment_msgs),
                           ego_speed=stream.ego_speed[m - 1] if stream.ego_speed else 0.0)

    def run(self, stream) -> PolicyResult:
        raise NotImplementedError

    def _result(self, records, stream) -> PolicyResult:
        return PolicyResult(self.name, records, self.buffer, self.registry, self.decisions, self.log,
                            self.invocations, stream.digest())


class _TaggedEngine(_Engine):
    """Routes updates by cycle tag; segment waits for its expected nodes."""

    def handle(self, msg: UpdateMessage, m: int, now: float) -> None:
        was_active = msg.source_id in self.registry.active
        # an update that arrived before this cycle's request fell in an earlier
        # request window; its offset is measured against that window
        seen_at = m
        while seen_at > 1 and msg.arrival_at < self.schedule.request_time(seen_at):
            seen_at -= 1
        early = seen_at < m
        fate = on_update(msg, self.buffer, self.registry, self.cfg.max_aoi, msg.arrival_at if early else now,
                         gate=self.gate, reference=seen_at)
        if not was_active and msg.source_id in self.registry.active:
            self._decide(ConnectionDecision(msg.source_id, Action.INITIATE, self.registry.admitted_at[msg.source_id],
                                            "measured"), m)
            fate = self.buffer.fate.get(id(msg), fate)
        self._log(m, msg.source_id, fate, msg.cycle, msg.cycle - m, now - self.schedule.request_time(m))

    def run(self, stream) -> PolicyResult:
        self.schedule = stream.schedule
        msgs = stream.messages
        pos = 0
        prev_close = -math.inf
        records = []
        for m in range(1, stream.cycles + 1):
            t_m = stream.schedule.request_time(m)
            self.buffer.current_cycle = m
            self.begin_cycle(m, t_m, stream)
            expected = frozenset(self.registry.expected(m))
            open_t = max(t_m, prev_close)
            deadline = max(open_t, self.deadline(m, t_m, stream.schedule.period_ms))
            pending = {n for n in expected if not self.buffer.has(m, n)}
            # with nothing expected the segment stays open for newcomers until the deadline
            close = open_t if expected and not pending else None
            while close is None and pos < len(msgs) and msgs[pos].arrival_at <= deadline:
                msg = msgs[pos]
                pos += 1
                self.handle(msg, m, max(msg.arrival_at, open_t))
                if msg.source_id in pending and self.buffer.has(m, msg.source_id):
                    pending.discard(msg.source_id)
                    if not pending:
                        close = max(open_t, msg.arrival_at)
            if close is None:
                close = deadline
            while pos < len(msgs) and msgs[pos].arrival_at <= close:
                msg = msgs[pos]
                pos += 1
                self.handle(msg, m, max(msg.arrival_at, open_t))
            segment = self.buffer.segments.get(m, {})
            satisfied = {n for n in expected if n in segment}
            records.append(self._record(m, t_m, open_t, close, expected, len(satisfied),
                                        list(segment.values()), stream))
            self._end_cycle(m, expected, satisfied, close, t_m)
            prev_close = close
        self.buffer.current_cycle = stream.cycles + 1
        while pos < len(msgs):
            self.buffer.discard(msgs[pos], "end-of-run")
            pos += 1
        return self._result(records, stream)


class StopNWaitEngine(_TaggedEngine):
    name = "stop-n-wait"

    def deadline(self, m, t_m, period):
        timeout = self.cfg.snw_timeout if self.cfg.snw_timeout is not None else 3.0 * period
        return t_m + timeout


# cycles an update may be missing from a node's history before its
# connection age restarts (absorbs out-of-order arrivals)
RUN_GAP_TOLERANCE = 3


class PredictiveEngine(_TaggedEngine):
    name = "predictive"
    gate = True

    def __init__(self, config: EngineConfig, forecaster: Forecaster, periods: Dict[NodeKind, int], *,
                 l_pred_ms: float = 100.0, cluster: bool = True, bucket_width: float = 10.0,
                 adaptive: bool = False, n_max: int = 20, q: float = 3.0):
        super().__init__(config)
        self.forecaster = forecaster
        self.periods = dict(periods)
        self.l_pred_ms = l_pred_ms
        self.cluster = cluster
        self.bucket_width = bucket_width
        self.adaptive = adaptive
        self.n_max = n_max
        self.q = q
        # per node: (connection age ms, relative speed, AoI, cycle)
        self.history: Dict[str, Deque[Tuple[float, float, float, int]]] = {}
        self.run_start: Dict[str, float] = {}
        self.period_of: Dict[str, int] = {}
        self.last_aoi: Dict[str, float] = {}
        self.predictions: List[Tuple[int, str, float]] = []

    def handle(self, msg, m, now):
        hist = self.history.get(msg.source_id)
        if hist is None:
            hist = self.history[msg.source_id] = deque(maxlen=max(1, self.forecaster.window_size))
        if not hist or msg.cycle > hist[-1][3]:
            # a gap longer than the reorder tolerance starts a new connection
            if not hist or msg.cycle > hist[-1][3] + RUN_GAP_TOLERANCE:
                hist.clear()
                self.run_start[msg.source_id] = msg.requested_at
            age = msg.requested_at - self.run_start[msg.source_id]
            hist.append((age, msg.rel_speed, msg.aoi, msg.cycle))
        self.last_aoi[msg.source_id] = msg.aoi
        was_active = msg.source_id in self.registry.active
        super().handle(msg, m, now)
        if not was_active and msg.source_id in self.registry.active:
            self._schedule_first_decision(msg.source_id, m, msg)

    def _period_for(self, node_id: str, kind: NodeKind, scar_now: Optional[float]) -> int:
        if not self.adaptive or scar_now is None:
            return self.periods[kind]
        return choose_period(self.l_pred_ms, self.q, scar_now, self.n_max)

    def _schedule_first_decision(self, node_id, m, msg):
        kind = self.registry.kind_of[node_id]
        period = self._period_for(node_id, kind, None)
        self.period_of[node_id] = period
        # first decision on the next cycle index that is a multiple of the period
        self.registry.next_decision_at[node_id] = ((m // period) + 1) * period

    def begin_cycle(self, m, t_m, stream):
        for node, eff in list(self.registry.terminate_at.items()):
            if eff <= m:
                self.registry.remove(node)
                self.buffer.purge(node, eff)
        due = sorted(n for n in self.registry.active
                     if n not in self.registry.terminate_at
                     and self.registry.next_decision_at.get(n, m) <= m)
        if not due:
            return
        scars = stream.scars[m - 1] if stream.scars else {}
        groups: Dict[Tuple[NodeKind, int], List[str]] = defaultdict(list)
        for n in due:
            kind = self.registry.kind_of[n]
            period = self._period_for(n, kind, scars.get(n)) if self.adaptive else self.periods[kind]
            self.period_of[n] = period
            groups[(kind, period)].append(n)
        for (kind, period), nodes in sorted(groups.items(), key=lambda kv: (kv[0][0].value, kv[0][1])):
            ready = [n for n in nodes if len(self.history.get(n, ())) >= self.forecaster.window_size]
            for n in nodes:
                if n not in ready:
                    d, _ = periodic_decision(n, self.forecaster, None, m, period, self.cfg.max_aoi,
                                             self.registry, kind)
                    self._decide(d, m)
            if not ready:
                continue
            if self.cluster:
                clusters = cluster_nodes({n: self.last_aoi[n] for n in ready}, self.bucket_width)
            else:
                clusters = [{n} for n in ready]
            for cid, members in enumerate(clusters):
                rep = min(members)
                window = [entry[:3] for entry in self.history[rep]]
                predicted = self.forecaster.forecast(rep, kind, window, m, period)
                self.invocations += 1
                for n in sorted(members):
                    self.registry.cluster_of[n] = cid
                    value = predicted
                    if not self.cluster or n == rep:
                        self.predictions.append((m, n, value))
                    d = decide_from_prediction(n, value, m, period, self.cfg.max_aoi, self.registry)
                    self._decide(d, m)

    def prediction_charge(self, m):
        present = {}
        for n in self.registry.active:
            kind = self.registry.kind_of[n]
            period = self.period_of.get(n, self.periods[kind])
            present[(kind, period)] = period
        if not present:
            return 0.0, 0
        # one amortized predictor charge per cycle, at the most frequent period
        period = min(present.values())
        return self.l_pred_ms / period, period


class _ArrivalOrderEngine(_Engine):
    """Fills the current segment in service order, ignoring cycle tags."""

    def silence_limit(self) -> int:
        return self.cfg.arrival_order_silence_cycles

    def pick(self, queue: List[UpdateMessage], segment: List[UpdateMessage],
             expected_vehicles: int, at_deadline: bool) -> Optional[UpdateMessage]:
        return queue.pop(0)

    def _pull(self, msg: UpdateMessage, m: int, queue: List[UpdateMessage], heard: Set[str]) -> int:
        """Enqueue an arrival; returns 1 when it opened a new service slot."""
        heard.add(msg.source_id)
        queue.append(msg)
        if msg.source_id not in self.registry.active:
            self.registry.add(msg.source_id, msg.source_kind, m)
            self._decide(ConnectionDecision(msg.source_id, Action.INITIATE, self.registry.admitted_at[msg.source_id],
                                            "measured"), m)
            return 1
        return 0

    def _expire(self, queue: List[UpdateMessage], m: int, now: float) -> None:
        keep = []
        for msg in queue:
            if self.buffer.is_frozen(msg.cycle):
                self.buffer.issues.append(SequencingIssue(msg.source_id, m, msg.cycle, now, "stale"))
                self.buffer.discard(msg, "stale")
            else:
                keep.append(msg)
        queue[:] = keep

    def run(self, stream) -> PolicyResult:
        msgs = stream.messages
        pos = 0
        prev_close = -math.inf
        queue: List[UpdateMessage] = []
        records = []
        for m in range(1, stream.cycles + 1):
            t_m = stream.schedule.request_time(m)
            self.buffer.current_cycle = m
            expected = frozenset(self.registry.expected(m))
            k = len(expected)
            open_t = max(t_m, prev_close)
            deadline = max(open_t, self.deadline(m, t_m, stream.schedule.period_ms))
            heard: Set[str] = set()
            segment: List[UpdateMessage] = []

            # a service initiated during the fill window gets its own slot
            capacity = [k]

            expected_vehicles = sum(1 for n in expected if self.registry.kind_of[n] is NodeKind.VEHICLE)

            def fill(now, at_deadline=False):
                while queue and len(segment) < capacity[0]:
                    msg = self.pick(queue, segment, expected_vehicles, at_deadline)
                    if msg is None:
                        break
                    segment.append(msg)
                    self.buffer.place_into(msg, m, f"{msg.source_id}#{msg.cycle}", now)
                    self._log(m, msg.source_id, self.buffer.fate[id(msg)], m, msg.cycle - m, now - t_m)

            self._expire(queue, m, open_t)
            while pos < len(msgs) and msgs[pos].arrival_at <= open_t:
                capacity[0] += self._pull(msgs[pos], m, queue, heard)
                pos += 1
            fill(open_t)
            # with nothing expected the segment stays open for newcomers until the deadline
            close = open_t if k and len(segment) >= capacity[0] else None
            while close is None and pos < len(msgs) and msgs[pos].arrival_at <= deadline:
                msg = msgs[pos]
                pos += 1
                capacity[0] += self._pull(msg, m, queue, heard)
                fill(msg.arrival_at)
                if k and len(segment) >= capacity[0]:
                    close = max(open_t, msg.arrival_at)
            if close is None:
                close = deadline
                fill(deadline, at_deadline=True)
            while pos < len(msgs) and msgs[pos].arrival_at <= close:
                self._pull(msgs[pos], m, queue, heard)
                pos += 1
            satisfied = {msg.source_id for msg in segment if msg.cycle == m and msg.source_id in expected}
            records.append(self._record(m, t_m, open_t, close, expected, len(satisfied), segment, stream))
            self._end_cycle(m, expected, heard, close, t_m)
            prev_close = close
        for msg in queue:
            self.buffer.discard(msg, "end-of-run")
        while pos < len(msgs):
            self.buffer.discard(msgs[pos], "end-of-run")
            pos += 1
        return self._result(records, stream)


class FifoEngine(_ArrivalOrderEngine):
    name = "fifo"


class PriorityEngine(_ArrivalOrderEngine):
    name = "priority"

    def pick(self, queue, segment, expected_vehicles, at_deadline):
        vehicles = [i for i, msg in enumerate(queue) if msg.source_kind is NodeKind.VEHICLE]
        if not vehicles:
            served = sum(1 for msg in segment if msg.source_kind is NodeKind.VEHICLE)
            # sensor updates wait behind the vehicle slots of this segment
            if served < expected_vehicles and not at_deadline:
                return None
            vehicles = range(len(queue))
        best = min(vehicles, key=lambda i: (queue[i].aoi, queue[i].source_id, i))
        return queue.pop(best)


def policy_fifo(stream, config: EngineConfig = EngineConfig()) -> PolicyResult:
    return FifoEngine(config).run(stream)


def policy_priority(stream, config: EngineConfig = EngineConfig()) -> PolicyResult:
    return PriorityEngine(config).run(stream)


def policy_stop_n_wait(stream, timeout: Optional[float] = None,
                       config: EngineConfig = EngineConfig()) -> PolicyResult:
    if timeout is not None:
        config = EngineConfig(**{**config.__dict__, "snw_timeout": timeout})
    return StopNWaitEngine(config).run(stream)


def policy_predictive(stream, forecaster: Forecaster, periods: Dict[NodeKind, int],
                      config: EngineConfig = EngineConfig(), **kwargs) -> PolicyResult:
    return PredictiveEngine(config, forecaster, periods, **kwargs).run(stream)
