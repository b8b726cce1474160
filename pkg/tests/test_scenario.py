import dataclasses

import numpy as np
import pytest

from aoiagg.kinematics import NodeKind, NodeState
from aoiagg.scenario import (DEFAULT_DELAY, PredictorSettings, RosterSpec, Scenario, ScenarioError, build_world,
                             default_scenario, exit_and_entry_scenario, parse_scenario, parse_scenario_text,
                             sawtooth_profile, serialize_scenario)
from aoiagg.simulation import generate_stream

MINIMAL = """
[node S1]
kind = sensor
position = 50
"""


def test_minimal_file_takes_defaults():
    sc = parse_scenario_text(MINIMAL)
    assert sc.duration_ms == 1_200_000.0
    assert sc.q == 3.0
    assert sc.max_aoi == pytest.approx(1000.0 / 3.0)
    assert (sc.predictor.sensor_period, sc.predictor.vehicle_period) == (5, 10)
    assert sc.delay == DEFAULT_DELAY
    assert sc.nodes == (NodeState("S1", NodeKind.SENSOR, 50.0),)


@pytest.mark.parametrize("text,fragment", [
    ("[scenario]\nq = 0\n" + MINIMAL, "q"),
    (MINIMAL + MINIMAL.replace("[node S1]", "[node  S1 ]"), "duplicate"),
    (MINIMAL + "\n[node S2]\nkind = sensor\nposition = 1\n[node S2b]\nkind = sensor\nposition = 2\nposition = 3\n",
     "duplicate key"),
    ("[scenario]\nduration_ms = 1000\n", "at least one node"),
    ("[scenario]\nflavour = mint\n" + MINIMAL, "unknown key"),
    ("[weather]\nrain = 1\n" + MINIMAL, "unknown section"),
    ("[scenario\nq = 3\n" + MINIMAL, "malformed"),
    ("q = 3\n" + MINIMAL, "outside"),
    ("[scenario]\nq 3\n" + MINIMAL, "key = value"),
    ("[scenario]\nq = fast\n" + MINIMAL, "scenario.q"),
    ("[node S1]\nposition = 5\n", "kind"),
    ("[node S1]\nkind = sensor\n", "position"),
    ("[node S1]\nkind = drone\nposition = 5\n", "drone"),
    ("[scenario]\nmax_aoi = 300\n" + MINIMAL, "max_aoi"),
    ("[predictor]\nkind = crystal-ball\n" + MINIMAL, "predictor"),
    ("[delay]\naccess_delay_mean = -1\n" + MINIMAL, "delay"),
])
def test_validation_errors(text, fragment):
    with pytest.raises(ScenarioError) as info:
        parse_scenario_text(text, "case.txt")
    assert fragment in str(info.value)


def test_line_numbers_in_diagnostics():
    with pytest.raises(ScenarioError, match=r"case.txt:3:"):
        parse_scenario_text("[scenario]\nq = 3\nbogus = 1\n" + MINIMAL, "case.txt")


def test_duplicate_node_ids_rejected():
    text = MINIMAL + "\n[node V1]\nkind = vehicle\nposition = 10\n"
    sc = parse_scenario_text(text)
    with pytest.raises(ScenarioError):
        dataclasses.replace(sc, nodes=sc.nodes + (NodeState("S1", NodeKind.VEHICLE, 5.0),))


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="no such"):
        parse_scenario(tmp_path / "nope.txt")


@pytest.mark.parametrize("sc", [
    default_scenario(),
    exit_and_entry_scenario(),
    default_scenario(ego_profile=sawtooth_profile(200_000.0), duration_ms=200_000.0,
                     predictor=PredictorSettings(kind="linear", model_dir="models", cluster=False)),
])
def test_round_trip(sc, tmp_path):
    path = tmp_path / "s.txt"
    path.write_text(serialize_scenario(sc))
    again = parse_scenario(path)
    assert again == sc
    assert serialize_scenario(again) == serialize_scenario(sc)


def test_sawtooth_keyword():
    sc = parse_scenario_text("[scenario]\nduration_ms = 150000\n[ego]\nprofile = sawtooth\n" + MINIMAL)
    assert sc.ego_profile == sawtooth_profile(150_000.0)
    speeds = {v for _, v in sc.ego_profile}
    assert speeds == {15.0, 30.0}


def test_roster_materialises():
    sc = default_scenario()
    world = build_world(sc, np.random.default_rng(0))
    kinds = [n.kind for n in world.nodes]
    assert kinds.count(NodeKind.SENSOR) == 30 and kinds.count(NodeKind.VEHICLE) == 20
    oncoming = [n for n in world.nodes if n.kind is NodeKind.VEHICLE and n.speed < 0]
    assert len(oncoming) == 6


def test_stream_is_seed_deterministic():
    sc = default_scenario(duration_ms=10_000.0, roster=RosterSpec(sensors=4, vehicles=4, oncoming_fraction=0.5))
    a, b, c = generate_stream(sc, 7), generate_stream(sc, 7), generate_stream(sc, 8)
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    arrivals = [m.arrival_at for m in a.messages]
    assert arrivals == sorted(arrivals)
    assert set(a.truth) == {(m.source_id, m.cycle) for m in a.messages}


def test_stream_covers_every_cycle():
    sc = default_scenario(duration_ms=5_000.0)
    s = generate_stream(sc, 1)
    assert s.cycles == 15
    assert len(s.ego_speed) == len(s.scars) == 15


def test_scenario_object_validation():
    with pytest.raises(ScenarioError):
        Scenario(roster=RosterSpec(sensors=1), speed_min=40.0)
    with pytest.raises(ScenarioError):
        Scenario(roster=RosterSpec(sensors=1), policy="random")
