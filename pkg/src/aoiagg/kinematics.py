"""Freeway world state and geometric queries.

The freeway is a 1-D axis. When ``ring_length`` is set the axis wraps
around (a closed loop), which keeps a finite roster of stationary sensors
passing by the ego vehicle for an arbitrarily long run.
"""
from __future__ import annotations

import bisect
import enum
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Tuple

import numpy as np

DEFAULT_SENSOR_RADIUS = 100.0
DEFAULT_VEHICLE_RADIUS = 300.0


class NodeKind(enum.Enum):
    SENSOR = "sensor"
    VEHICLE = "vehicle"


@dataclass(frozen=True)
class NodeState:
    id: str
    kind: NodeKind
    position: float
    speed: float = 0.0
    coverage_radius: Optional[float] = None
    lane: int = 0
    # broadcast schedule offset relative to the ego's request grid, ms (<= 0)
    phase_ms: float = 0.0

    def __post_init__(self):
        if self.coverage_radius is None:
            radius = DEFAULT_SENSOR_RADIUS if self.kind is NodeKind.SENSOR else DEFAULT_VEHICLE_RADIUS
            object.__setattr__(self, "coverage_radius", radius)
        if self.coverage_radius <= 0:
            raise ValueError(f"node {self.id}: coverage_radius must be > 0")
        if self.kind is NodeKind.SENSOR and self.speed != 0:
            raise ValueError(f"sensor {self.id} must have speed 0")
        if self.phase_ms > 0:
            raise ValueError(f"node {self.id}: phase_ms must be <= 0")


@dataclass(frozen=True)
class EgoState:
    position: float
    speed: float
    lane: int = 0
    # (time ms, target speed m/s) breakpoints, linearly interpolated
    speed_profile: Tuple[Tuple[float, float], ...] = ()

    def target_speed(self, t_ms: float) -> float:
        if not self.speed_profile:
            return self.speed
        times = [p[0] for p in self.speed_profile]
        i = bisect.bisect_right(times, t_ms)
        if i == 0:
            return self.speed_profile[0][1]
        if i == len(times):
            return self.speed_profile[-1][1]
        (t0, v0), (t1, v1) = self.speed_profile[i - 1], self.speed_profile[i]
        if t1 == t0:
            return v1
        return v0 + (v1 - v0) * (t_ms - t0) / (t1 - t0)


@dataclass(frozen=True)
class World:
    ego: EgoState
    nodes: Tuple[NodeState, ...]
    time_ms: float = 0.0
    ring_length: Optional[float] = None
    speed_min: float = 15.0
    speed_max: float = 30.0
    # half-width of the uniform vehicle speed perturbation, m/s per second
    perturbation: float = 1.0
    node_index: dict = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.node_index is None:
            object.__setattr__(self, "node_index", {n.id: i for i, n in enumerate(self.nodes)})

    def node(self, node_id: str) -> NodeState:
        return self.nodes[self.node_index[node_id]]


def _wrap(x: float, ring_length: Optional[float]) -> float:
    return x % ring_length if ring_length else x


def step_world(world: World, dt: float, rng: np.random.Generator) -> World:
    """Advance every mobile entity by ``dt`` milliseconds.

    Positions move with the speed held at the start of the step; vehicle
    speeds then receive a uniform perturbation and are clamped to the
    scenario range. One perturbation is drawn per vehicle, in roster order,
    so the result depends only on the generator state.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    seconds = dt / 1000.0
    ego = world.ego
    t_next = world.time_ms + dt
    ego_speed = ego.target_speed(t_next) if ego.speed_profile else ego.speed
    ego_speed = float(np.clip(ego_speed, world.speed_min, world.speed_max))
    new_ego = replace(ego, position=_wrap(ego.position + ego.speed * seconds, world.ring_length),
                      speed=ego_speed)

    nodes = []
    for node in world.nodes:
        if node.kind is NodeKind.SENSOR:
            nodes.append(node)
            continue
        position = _wrap(node.position + node.speed * seconds, world.ring_length)
        speed = node.speed
        if world.perturbation > 0:
            speed += rng.uniform(-world.perturbation, world.perturbation) * seconds
        # oncoming traffic keeps its sign; the range bounds the magnitude
        speed = float(np.copysign(np.clip(abs(speed), world.speed_min, world.speed_max), node.speed))
        nodes.append(replace(node, position=position, speed=speed))
    return replace(world, ego=new_ego, nodes=tuple(nodes), time_ms=t_next)


def relative_speed(ego: EgoState, node: NodeState) -> float:
    return abs(ego.speed - node.speed)


def relative_distance(ego: EgoState, node: NodeState, ring_length: Optional[float] = None) -> float:
    gap = abs(ego.position - node.position)
    if ring_length:
        gap %= ring_length
        gap = min(gap, ring_length - gap)
    return gap


def in_coverage(ego: EgoState, node: NodeState, ring_length: Optional[float] = None) -> bool:
    return relative_distance(ego, node, ring_length) <= node.coverage_radius


def coverage_extent(node: NodeState, mode: str = "diameter") -> float:
    """Length of road the ego traverses inside the node's coverage."""
    if mode == "diameter":
        return 2.0 * node.coverage_radius
    if mode == "radius":
        return node.coverage_radius
    raise ValueError(f"unknown coverage extent mode {mode!r}")


def scar(ego: EgoState, node: NodeState, extent: str = "diameter") -> float:
    """Speed-to-coverage-area ratio in 1/s."""
    return relative_speed(ego, node) / coverage_extent(node, extent)


def validate_nodes(nodes: Sequence[NodeState]) -> None:
    seen = set()
    for node in nodes:
        if node.id in seen:
            raise ValueError(f"duplicate node id {node.id!r}")
        seen.add(node.id)
