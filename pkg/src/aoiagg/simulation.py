"""World + channel simulation producing a policy-independent arrival stream.

Every policy consumes the same :class:`EventStream`, so comparisons between
policies are paired by construction.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .channel import UpdateMessage, UpdateSchedule, aoi, deliver, originate
from .kinematics import NodeKind, World, in_coverage, relative_speed, scar, step_world
from .scenario import Scenario, build_world


@dataclass
class EventStream:
    schedule: UpdateSchedule
    messages: List[UpdateMessage]            # sorted by arrival
    ego_speed: List[float]                   # per cycle, index cycle - 1
    kinds: Dict[str, NodeKind]
    # (node, cycle) -> AoI for every update that was generated
    truth: Dict[Tuple[str, int], float] = field(default_factory=dict)
    # per cycle: node -> SCAR at request time, for nodes in coverage
    scars: List[Dict[str, float]] = field(default_factory=list)

    @property
    def cycles(self) -> int:
        return self.schedule.total_cycles

    def digest(self) -> str:
        """Hash of the arrival sequence; equal digests mean identical inputs."""
        h = hashlib.sha256()
        for msg in self.messages:
            h.update(msg.source_id.encode())
            h.update(struct.pack("<iddd", msg.cycle, msg.originated_at, msg.arrival_at, msg.aoi))
        return h.hexdigest()[:16]


def _rngs(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    roster, world, channel = np.random.SeedSequence(seed).spawn(3)
    return (np.random.default_rng(roster), np.random.default_rng(world),
            np.random.default_rng(channel))


def generate_stream(scenario: Scenario, seed: Optional[int] = None, *,
                    world: Optional[World] = None) -> EventStream:
    seed = scenario.seed if seed is None else seed
    roster_rng, world_rng, channel_rng = _rngs(seed)
    if world is None:
        world = build_world(scenario, roster_rng)
    schedule = scenario.schedule
    delay = scenario.delay
    messages: List[UpdateMessage] = []
    truth: Dict[Tuple[str, int], float] = {}
    ego_speed: List[float] = []
    scars: List[Dict[str, float]] = []
    kinds = {n.id: n.kind for n in world.nodes}

    for cycle in range(1, schedule.total_cycles + 1):
        t_req = schedule.request_time(cycle)
        if cycle > 1:
            world = step_world(world, schedule.period_ms, world_rng)
        ego = world.ego
        ego_speed.append(ego.speed)
        cycle_scar = {}
        for node in world.nodes:
            if not in_coverage(ego, node, world.ring_length):
                continue
            msg = originate(node, cycle, t_req, channel_rng, ego=ego, delay_model=delay,
                            ring_length=world.ring_length)
            deliver(msg, delay, channel_rng)
            aoi(msg, delay.propagation_speed)
            messages.append(msg)
            truth[(node.id, cycle)] = msg.aoi
            cycle_scar[node.id] = scar(ego, node, scenario.coverage_extent)
        scars.append(cycle_scar)

    messages.sort(key=lambda m: (m.arrival_at, m.cycle, m.source_id))
    return EventStream(schedule=schedule, messages=messages, ego_speed=ego_speed, kinds=kinds,
                       truth=truth, scars=scars)
