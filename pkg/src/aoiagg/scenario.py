"""Scenario files: a flat ``key = value`` format with bracketed sections.

Sections are ``[scenario]``, ``[ego]``, ``[delay]``, ``[predictor]``,
``[policy]``, ``[costs]``, ``[roster]`` (a generated node population) and any
number of ``[node <id>]`` sections. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import DelayModel, UpdateSchedule
from .kinematics import EgoState, NodeKind, NodeState, World, validate_nodes


class ScenarioError(ValueError):
    pass


# calibrated so the default world reproduces the qualitative regime of the
# service-aggregation experiments (see README, "Delay model")
DEFAULT_DELAY = DelayModel(origination_offset_max=230.0, edge_aoi_ms=600.0, edge_link_ms=300.0,
                           edge_width=0.05, edge_width_per_mps=0.01, edge_exponent=2.0)


@dataclass(frozen=True)
class RosterSpec:
    """Generated population on a ring road."""
    sensors: int = 0
    vehicles: int = 0
    vehicle_speed_min: float = 15.0
    vehicle_speed_max: float = 30.0
    vehicle_phase_max: float = 0.0
    oncoming_fraction: float = 0.0
    sensor_radius: float = 100.0
    vehicle_radius: float = 300.0


@dataclass(frozen=True)
class PredictorSettings:
    kind: str = "forest"
    sensor_period: int = 5
    vehicle_period: int = 10
    period_mode: str = "pinned"      # pinned | adaptive
    n_max: int = 20
    window: int = 10
    l_pred_ms: float = 100.0
    cluster: bool = True
    bucket_width: float = 10.0
    model_dir: Optional[str] = None
    trees: int = 10
    max_depth: int = 8


@dataclass(frozen=True)
class PolicySettings:
    history_depth: int = 2
    silence_cycles: int = 1
    stop_n_wait_timeout: Optional[float] = None   # default 3 * (1/Q)
    deadline: Optional[float] = None              # default max_aoi


@dataclass(frozen=True)
class CostModel:
    decision_base_ms: float = 5.0
    decision_per_node_ms: float = 0.0


@dataclass(frozen=True)
class Scenario:
    nodes: Tuple[NodeState, ...] = ()
    roster: RosterSpec = RosterSpec()
    duration_ms: float = 1_200_000.0
    q: float = 3.0
    max_aoi: Optional[float] = None
    ego_position: float = 0.0
    ego_speed: float = 20.0
    ego_profile: Tuple[Tuple[float, float], ...] = ()
    speed_min: float = 15.0
    speed_max: float = 30.0
    perturbation: float = 1.0
    ring_length: Optional[float] = 2400.0
    coverage_extent: str = "diameter"
    delay: DelayModel = DEFAULT_DELAY
    predictor: PredictorSettings = PredictorSettings()
    policy_settings: PolicySettings = PolicySettings()
    costs: CostModel = CostModel()
    policy: str = "predictive"
    seed: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.max_aoi is None:
            object.__setattr__(self, "max_aoi", 1000.0 / self.q if self.q > 0 else math.inf)
        validate_scenario(self)

    @property
    def schedule(self) -> UpdateSchedule:
        return UpdateSchedule(q=self.q, total_time=self.duration_ms)

    def with_(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)


POLICIES = ("predictive", "fifo", "stop-n-wait", "priority")
PREDICTOR_KINDS = ("linear", "recurrent", "forest", "oracle")


def validate_scenario(sc: Scenario) -> None:
    if sc.q <= 0:
        raise ScenarioError("scenario.q: must be > 0")
    if abs(sc.max_aoi * sc.q - 1000.0) > 1e-6:
        raise ScenarioError("scenario.max_aoi: q * max_aoi must equal 1000 ms")
    if sc.duration_ms <= 0:
        raise ScenarioError("scenario.duration_ms: must be > 0")
    if not sc.nodes and sc.roster.sensors + sc.roster.vehicles == 0:
        raise ScenarioError("roster: scenario needs at least one node")
    if sc.speed_min > sc.speed_max:
        raise ScenarioError("scenario.speed_min: exceeds speed_max")
    if sc.policy not in POLICIES:
        raise ScenarioError(f"scenario.policy: unknown policy {sc.policy!r}")
    if sc.predictor.kind not in PREDICTOR_KINDS:
        raise ScenarioError(f"predictor.kind: unknown predictor {sc.predictor.kind!r}")
    if sc.predictor.sensor_period < 1 or sc.predictor.vehicle_period < 1:
        raise ScenarioError("predictor: periods must be >= 1")
    if sc.predictor.period_mode not in ("pinned", "adaptive"):
        raise ScenarioError(f"predictor.period_mode: unknown mode {sc.predictor.period_mode!r}")
    if sc.coverage_extent not in ("diameter", "radius"):
        raise ScenarioError(f"scenario.coverage_extent: unknown mode {sc.coverage_extent!r}")
    try:
        validate_nodes(sc.nodes)
    except ValueError as exc:
        raise ScenarioError(f"node: {exc}") from None


def build_world(sc: Scenario, rng: np.random.Generator) -> World:
    """Materialise the explicit nodes plus the generated roster."""
    nodes = list(sc.nodes)
    r = sc.roster
    length = sc.ring_length or 2400.0
    if r.sensors:
        spacing = length / r.sensors
        for i in range(r.sensors):
            nodes.append(NodeState(id=f"S{i + 1}", kind=NodeKind.SENSOR, position=(i + 0.5) * spacing,
                                   coverage_radius=r.sensor_radius))
    for i in range(r.vehicles):
        position = float(rng.uniform(0.0, length))
        speed = float(rng.uniform(r.vehicle_speed_min, r.vehicle_speed_max))
        phase = -float(rng.uniform(0.0, r.vehicle_phase_max)) if r.vehicle_phase_max else 0.0
        if i < round(r.oncoming_fraction * r.vehicles):
            speed = -speed
        else:
            # only approaching traffic broadcasts off the ego's request grid
            phase = 0.0
        nodes.append(NodeState(id=f"V{i + 1}", kind=NodeKind.VEHICLE, position=position, speed=speed,
                               coverage_radius=r.vehicle_radius, lane=1 + i % 3, phase_ms=phase))
    try:
        validate_nodes(nodes)
    except ValueError as exc:
        raise ScenarioError(f"roster: {exc}") from None
    ego = EgoState(position=sc.ego_position, speed=sc.ego_speed, speed_profile=sc.ego_profile)
    if sc.ego_profile:
        ego = dataclasses.replace(ego, speed=ego.target_speed(0.0))
    return World(ego=ego, nodes=tuple(nodes), ring_length=sc.ring_length, speed_min=sc.speed_min,
                 speed_max=sc.speed_max, perturbation=sc.perturbation)


def sawtooth_profile(duration_ms: float, low: float = 15.0, high: float = 30.0,
                     ramp_ms: float = 60_000.0) -> Tuple[Tuple[float, float], ...]:
    points = []
    t = 0.0
    while t < duration_ms:
        points.append((t, low))
        points.append((min(t + ramp_ms, duration_ms), high))
        t += ramp_ms + 1.0
    return tuple(points)


def default_scenario(**changes) -> Scenario:
    """The desk-scale freeway loop used by the sweeps and acceptance runs."""
    base = Scenario(roster=RosterSpec(sensors=30, vehicles=20, vehicle_phase_max=60.0,
                                      oncoming_fraction=0.3))
    return dataclasses.replace(base, **changes) if changes else base


EXIT_ENTRY_SWITCH_MS = 2000.0


def exit_and_entry_scenario(cycles: int = 23) -> Scenario:
    """Two nodes on a straight road while the ego doubles its speed.

    The ego drives at 15 m/s, then at 30 m/s from ``EXIT_ENTRY_SWITCH_MS``.
    Sensor S1 starts just ahead of the ego and is left behind; vehicle V2
    approaches head-on and enters coverage during the fast phase. Delays are
    deterministic apart from the coverage-edge degradation.
    """
    delay = DelayModel(access_delay_mean=40.0, access_delay_jitter=0.0, origination_offset_max=0.0,
                       edge_link_ms=500.0, edge_width=0.02, edge_width_per_mps=0.004)
    nodes = (NodeState("S1", NodeKind.SENSOR, 56.0),
             NodeState("V2", NodeKind.VEHICLE, 400.0, speed=-20.0, phase_ms=-100.0))
    switch = EXIT_ENTRY_SWITCH_MS
    profile = ((0.0, 15.0), (switch, 15.0), (switch + 1.0, 30.0), (1e7, 30.0))
    return Scenario(nodes=nodes, duration_ms=cycles * 1000.0 / 3.0, ego_profile=profile,
                    ring_length=None, perturbation=0.0, delay=delay)


# ---------------------------------------------------------------------------
# text format

def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> Optional[float]:
    return None if text.strip().lower() in ("", "none") else float(text)


_SCENARIO_KEYS = {
    "duration_ms": float, "q": float, "max_aoi": _optional_float, "speed_min": float, "speed_max": float,
    "perturbation": float, "ring_length": _optional_float, "coverage_extent": str, "policy": str,
    "seed": int, "output_dir": str,
}
_EGO_KEYS = {"position": float, "speed": float, "profile": str}
_NODE_KEYS = {"kind": str, "position": float, "speed": float, "coverage_radius": float,
              "lane": int, "phase_ms": float}


def _dataclass_keys(cls) -> Dict[str, type]:
    out = {}
    for f in fields(cls):
        ann = str(f.type)
        if "Optional[float]" in ann:
            out[f.name] = _optional_float
        elif "Optional[str]" in ann:
            out[f.name] = lambda s: None if s.strip().lower() in ("", "none") else s.strip()
        elif ann == "bool":
            out[f.name] = _bool
        elif ann == "int":
            out[f.name] = int
        elif ann == "float":
            out[f.name] = float
        else:
            out[f.name] = str
    return out


_SECTION_TYPES = {
    "delay": DelayModel,
    "predictor": PredictorSettings,
    "policy": PolicySettings,
    "costs": CostModel,
    "roster": RosterSpec,
}


def _parse_profile(text: str) -> Tuple[Tuple[float, float], ...]:
    if text.strip().lower() == "sawtooth":
        return (("sawtooth", 0.0),)
    points = []
    for chunk in text.split(","):
        if not chunk.strip():
            continue
        t, v = chunk.split(":")
        points.append((float(t), float(v)))
    return tuple(points)


def _tokenize(text: str, source: str) -> List[Tuple[str, List[Tuple[int, str, str]]]]:
    sections: List[Tuple[str, List[Tuple[int, str, str]]]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ScenarioError(f"{source}:{lineno}: malformed section header {line!r}")
            sections.append((line[1:-1].strip(), []))
            continue
        if "=" not in line:
            raise ScenarioError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        if not sections:
            raise ScenarioError(f"{source}:{lineno}: key outside of any section")
        key, value = (part.strip() for part in line.split("=", 1))
        sections[-1][1].append((lineno, key, value))
    return sections


def parse_scenario_text(text: str, source: str = "<scenario>") -> Scenario:
    top: Dict[str, object] = {}
    groups: Dict[str, Dict[str, object]] = {name: {} for name in _SECTION_TYPES}
    nodes: List[NodeState] = []
    seen_sections = set()

    for name, entries in _tokenize(text, source):
        if name in seen_sections:
            raise ScenarioError(f"{source}: duplicate section [{name}]")
        seen_sections.add(name)
        if name == "scenario":
            allowed, sink = _SCENARIO_KEYS, top
        elif name == "ego":
            allowed, sink = _EGO_KEYS, {}
        elif name in _SECTION_TYPES:
            allowed, sink = _dataclass_keys(_SECTION_TYPES[name]), groups[name]
        elif name.startswith("node "):
            allowed, sink = _NODE_KEYS, {}
        else:
            raise ScenarioError(f"{source}: unknown section [{name}]")
        for lineno, key, value in entries:
            if key not in allowed:
                raise ScenarioError(f"{source}:{lineno}: unknown key {key!r} in [{name}]")
            if key in sink:
                raise ScenarioError(f"{source}:{lineno}: duplicate key {key!r} in [{name}]")
            try:
                sink[key] = allowed[key](value)
            except (TypeError, ValueError) as exc:
                raise ScenarioError(f"{source}:{lineno}: bad value for {name}.{key}: {exc}") from None
        if name == "ego":
            if "position" in sink:
                top["ego_position"] = sink["position"]
            if "speed" in sink:
                top["ego_speed"] = sink["speed"]
            if "profile" in sink:
                try:
                    top["ego_profile"] = _parse_profile(sink["profile"])
                except ValueError as exc:
                    raise ScenarioError(f"{source}: bad value for ego.profile: {exc}") from None
        elif name.startswith("node "):
            node_id = name[5:].strip()
            if "kind" not in sink:
                raise ScenarioError(f"{source}: [{name}] missing required field 'kind'")
            if "position" not in sink:
                raise ScenarioError(f"{source}: [{name}] missing required field 'position'")
            try:
                kind = NodeKind(sink.pop("kind").lower())
                nodes.append(NodeState(id=node_id, kind=kind, **sink))
            except ValueError as exc:
                raise ScenarioError(f"{source}: [{name}] {exc}") from None

    kwargs = dict(top)
    kwargs["nodes"] = tuple(nodes)
    for name, cls in _SECTION_TYPES.items():
        if groups[name]:
            base = DEFAULT_DELAY if cls is DelayModel else cls()
            try:
                value = dataclasses.replace(base, **groups[name])
            except ValueError as exc:
                raise ScenarioError(f"{source}: [{name}] {exc}") from None
            kwargs["policy_settings" if name == "policy" else name] = value
    if kwargs.get("ego_profile") == (("sawtooth", 0.0),):
        kwargs["ego_profile"] = sawtooth_profile(kwargs.get("duration_ms", Scenario.duration_ms))
    try:
        return Scenario(**kwargs)
    except ScenarioError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    except ValueError as exc:
        raise ScenarioError(f"{source}: {exc}") from None


def parse_scenario(path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"{path}: no such scenario file")
    return parse_scenario_text(path.read_text(), str(path))


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_scenario(sc: Scenario) -> str:
    lines = ["[scenario]"]
    for key in _SCENARIO_KEYS:
        lines.append(f"{key} = {_fmt(getattr(sc, key))}")
    lines += ["", "[ego]", f"position = {_fmt(sc.ego_position)}", f"speed = {_fmt(sc.ego_speed)}"]
    if sc.ego_profile:
        lines.append("profile = " + ", ".join(f"{t!r}:{v!r}" for t, v in sc.ego_profile))
    sections = {"delay": sc.delay, "predictor": sc.predictor, "policy": sc.policy_settings,
                "costs": sc.costs, "roster": sc.roster}
    for name, obj in sections.items():
        lines += ["", f"[{name}]"]
        for f in fields(obj):
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
    for node in sc.nodes:
        lines += ["", f"[node {node.id}]", f"kind = {node.kind.value}"]
        for key in ("position", "speed", "coverage_radius", "lane", "phase_ms"):
            lines.append(f"{key} = {_fmt(getattr(node, key))}")
    return "\n".join(lines) + "\n"
