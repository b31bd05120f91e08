import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadsim.errors import SchemaError, ValidationError
from cadsim.fixture import make_fixture_scenario
from cadsim.scenario import (
    Agent,
    Partition,
    load_scenario,
    partition_agents,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
)
from helpers import agent, scenario, state


def _state_dict(**kw):
    d = {"x": 0.0, "y": 0.0, "z": 0.0, "heading": 0.0, "vx": 0.0, "vy": 0.0, "valid": True}
    d.update(kw)
    return d


def _agent_dict(agent_id, **kw):
    d = {
        "id": agent_id,
        "kind": "vehicle",
        "length": 4.5,
        "width": 2.0,
        "height": 1.6,
        "is_adv": False,
        "tracks_to_predict": False,
        "past": [_state_dict(), _state_dict()],
    }
    d.update(kw)
    return d


def _scenario_dict(agents, **kw):
    d = {"scenario_id": "s", "history_len": 2, "horizon": 5, "dt": 0.1, "agents": agents}
    d.update(kw)
    return d


def _write(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data) if not isinstance(data, str) else data)
    return path


def test_minimal_file(tmp_path):
    path = _write(tmp_path, _scenario_dict([_agent_dict(0, is_adv=True)]))
    sc = load_scenario(path)
    assert len(sc.agents) == 1
    assert sc.history_len == 2 and sc.horizon == 5 and sc.dt == 0.1


def test_duplicate_id(tmp_path):
    path = _write(tmp_path, _scenario_dict([_agent_dict(7), _agent_dict(7)]))
    with pytest.raises(ValidationError, match="duplicate id 7") as info:
        load_scenario(path)
    assert info.value.agent_id == 7


def test_shipped_eight_agent_fixture(fixtures_dir, tmp_path):
    sc = load_scenario(fixtures_dir / "scenario_8agents.json")
    assert len(sc.agents) == 8
    assert sum(a.is_adv for a in sc.agents) == 1
    out = tmp_path / "copy.json"
    save_scenario(sc, out)
    assert load_scenario(out) == sc


def test_shipped_fixture_matches_generator(fixtures_dir):
    assert load_scenario(fixtures_dir / "scenario_8agents.json") == make_fixture_scenario(8, 7)


def test_json_syntax_error_reports_line(tmp_path):
    path = _write(tmp_path, '{\n  "scenario_id": "s",\n  "agents": [,]\n}')
    with pytest.raises(SchemaError) as info:
        load_scenario(path)
    assert info.value.line == 3


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.update(extra=1), "<root>"),
        (lambda d: d["agents"][0].update(color="red"), "agents/0"),
        (lambda d: d["agents"][0]["past"][1].update(speed=3.0), "agents/0/past/1"),
        (lambda d: d["agents"][0].update(kind="truck"), "agents/0/kind"),
        (lambda d: d.pop("dt"), "<root>"),
    ],
)
def test_schema_rejects(tmp_path, mutate, field):
    data = _scenario_dict([_agent_dict(0)])
    mutate(data)
    with pytest.raises(SchemaError) as info:
        load_scenario(_write(tmp_path, data))
    assert info.value.field == field


@pytest.mark.parametrize(
    "data, rule",
    [
        (_scenario_dict([_agent_dict(0)], history_len=1), "history_len"),
        (_scenario_dict([_agent_dict(0)], horizon=0), "horizon"),
        (_scenario_dict([_agent_dict(0)], dt=0.0), "dt"),
        (_scenario_dict([_agent_dict(0, past=[_state_dict()])]), "history_len"),
        (_scenario_dict([_agent_dict(0, is_adv=True), _agent_dict(1, is_adv=True)]), "single_adv"),
        (_scenario_dict([_agent_dict(0)], complete=True), "single_adv"),
        (_scenario_dict([_agent_dict(3, past=[_state_dict(), _state_dict(heading=-math.pi)])]), "heading_range"),
        (_scenario_dict([_agent_dict(3, past=[_state_dict(), _state_dict(heading=4.0)])]), "heading_range"),
        (_scenario_dict([_agent_dict(-1)]), "id_nonnegative"),
    ],
)
def test_invariant_violations(data, rule):
    with pytest.raises(ValidationError) as info:
        scenario_from_dict(data)
    assert info.value.rule == rule


def test_invalid_states_may_hold_anything():
    data = _scenario_dict([_agent_dict(0, past=[_state_dict(heading=9.0, valid=False), _state_dict()])])
    assert scenario_from_dict(data).agents[0].past[0].heading == 9.0


def test_heading_pi_accepted():
    data = _scenario_dict([_agent_dict(0, past=[_state_dict(), _state_dict(heading=math.pi)])])
    assert scenario_from_dict(data).agents[0].current.heading == math.pi


def test_partition_single_adv():
    sc = scenario([agent(0, state(), is_adv=True)])
    assert partition_agents(sc) == Partition(adv=0, world_p=frozenset(), world_o=frozenset())


def test_partition_flag_combinations():
    sc = scenario(
        [
            agent(10, state(), is_adv=True),
            agent(11, state(x=10), tracks_to_predict=True),
            agent(12, state(x=20)),
            agent(13, state(x=30, valid=False), tracks_to_predict=True),
        ]
    )
    part = partition_agents(sc)
    assert part.adv == 10
    assert part.world_p == {11}
    assert part.world_o == {12}
    assert part.group_of(13) is None


def test_adv_precedence_over_tracks_to_predict():
    sc = scenario([agent(0, state(), is_adv=True, tracks_to_predict=True), agent(1, state(x=5))])
    part = partition_agents(sc)
    assert part.adv == 0 and 0 not in part.world_p and part.world_o == {1}


def test_invalid_adv_is_dropped():
    sc = scenario([agent(0, state(valid=False), is_adv=True), agent(1, state(x=5), tracks_to_predict=True)])
    part = partition_agents(sc)
    assert part.adv is None and part.world_p == {1}


def test_partition_rejects_overlap():
    with pytest.raises(ValueError):
        Partition(adv=1, world_p=frozenset({1}), world_o=frozenset())


finite = st.floats(-1e4, 1e4, allow_nan=False)


@st.composite
def scenarios(draw):
    history_len = draw(st.integers(2, 4))
    n = draw(st.integers(0, 12))
    ids = draw(st.lists(st.integers(0, 10_000), min_size=n, max_size=n, unique=True))
    adv_index = draw(st.one_of(st.none(), st.integers(0, max(n - 1, 0))))
    agents = []
    for k, agent_id in enumerate(ids):
        past = []
        for _ in range(history_len):
            past.append(
                state(
                    x=draw(finite),
                    y=draw(finite),
                    z=draw(finite),
                    heading=draw(st.floats(-math.pi, math.pi, exclude_min=True)),
                    vx=draw(finite),
                    vy=draw(finite),
                    valid=draw(st.booleans()),
                )
            )
        agents.append(
            Agent(
                id=agent_id,
                kind=draw(st.sampled_from(["vehicle", "pedestrian", "cyclist"])),
                length=draw(st.floats(0.1, 20)),
                width=draw(st.floats(0.1, 5)),
                height=draw(st.floats(0.1, 5)),
                is_adv=adv_index == k,
                tracks_to_predict=draw(st.booleans()),
                past=tuple(past),
            )
        )
    return scenario(
        agents,
        horizon=draw(st.integers(1, 100)),
        dt=draw(st.floats(1e-3, 1.0)),
        history_len=history_len,
    )


@settings(max_examples=200, deadline=None)
@given(scenarios())
def test_partition_disjoint_and_covering(sc):
    part = partition_agents(sc)
    groups = [part.adv_ids, part.world_p, part.world_o]
    for a in range(3):
        for b in range(a + 1, 3):
            assert not groups[a] & groups[b]
    assert part.all_ids == {a.id for a in sc.agents if a.current.valid}


@settings(max_examples=100, deadline=None)
@given(scenarios())
def test_roundtrip_identity(sc):
    text = json.dumps(scenario_to_dict(sc))
    assert scenario_from_dict(json.loads(text)) == sc
