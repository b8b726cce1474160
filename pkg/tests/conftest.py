from typing import Iterable, Optional

import pytest

from aoiagg.channel import UpdateMessage, UpdateSchedule
from aoiagg.kinematics import NodeKind
from aoiagg.simulation import EventStream

PERIOD = 1000.0 / 3.0


def make_msg(node: str, cycle: int, arrival_after_request: float, aoi: float = 100.0,
             kind: NodeKind = NodeKind.SENSOR) -> UpdateMessage:
    t_req = (cycle - 1) * PERIOD
    msg = UpdateMessage(node, cycle, t_req - aoi, t_req, 0.0, source_kind=kind)
    msg.arrival_at = t_req + arrival_after_request
    msg.aoi = aoi
    return msg


def make_stream(messages: Iterable[UpdateMessage], cycles: int, truth: Optional[dict] = None) -> EventStream:
    msgs = sorted(messages, key=lambda m: (m.arrival_at, m.cycle, m.source_id))
    return EventStream(schedule=UpdateSchedule(3.0, cycles * PERIOD), messages=msgs, ego_speed=[20.0] * cycles,
                       kinds={m.source_id: m.source_kind for m in msgs},
                       truth=truth if truth is not None else {(m.source_id, m.cycle): m.aoi for m in msgs})


@pytest.fixture
def msg():
    return make_msg


@pytest.fixture
def stream():
    return make_stream
