"""Scenario data model, JSON I/O and the three-way agent partition.

A scenario file is UTF-8 JSON::

    {"scenario_id": "...", "history_len": 11, "horizon": 80, "dt": 0.1,
     "agents": [{"id": 0, "kind": "vehicle", "length": 4.5, "width": 2.0,
                 "height": 1.6, "is_adv": true, "tracks_to_predict": false,
                 "past": [{"x": 0.0, "y": 0.0, "z": 0.0, "heading": 0.0,
                           "vx": 0.0, "vy": 0.0, "valid": true}, ...]}]}

Unknown fields are rejected. The only optional key is the top-level
``"complete"`` flag, which demands exactly one ADV agent when true.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Union

import jsonschema
import numpy as np

from cadsim.errors import SchemaError, ValidationError

PathLike = Union[str, Path]

_NUMBER = {"type": "number"}

AGENT_STATE_SCHEMA: dict[str, Any] = {
    "type": "object",
    "properties": {
        "x": _NUMBER,
        "y": _NUMBER,
        "z": _NUMBER,
        "heading": _NUMBER,
        "vx": _NUMBER,
        "vy": _NUMBER,
        "valid": {"type": "boolean"},
    },
    "required": ["x", "y", "z", "heading", "vx", "vy", "valid"],
    "additionalProperties": False,
}

SCENARIO_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "scenario_id": {"type": "string"},
        "history_len": {"type": "integer"},
        "horizon": {"type": "integer"},
        "dt": _NUMBER,
        "complete": {"type": "boolean"},
        "agents": {
            "type": "array",
            "items": {
                "type": "object",
                "properties": {
                    "id": {"type": "integer"},
                    "kind": {"enum": ["vehicle", "pedestrian", "cyclist"]},
                    "length": _NUMBER,
                    "width": _NUMBER,
                    "height": _NUMBER,
                    "is_adv": {"type": "boolean"},
                    "tracks_to_predict": {"type": "boolean"},
                    "past": {"type": "array", "items": AGENT_STATE_SCHEMA},
                },
                "required": [
                    "id", "kind", "length", "width", "height",
                    "is_adv", "tracks_to_predict", "past",
                ],
                "additionalProperties": False,
            },
        },
    },
    "required": ["scenario_id", "history_len", "horizon", "dt", "agents"],
    "additionalProperties": False,
}


class AgentKind(str, enum.Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"


@dataclass(frozen=True)
class AgentState:
    """Single timestep of an agent: center position, heading and planar velocity."""

    x: float
    y: float
    z: float
    heading: float
    vx: float
    vy: float
    valid: bool

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=np.float64)

    @property
    def velocity(self) -> np.ndarray:
        return np.array([self.vx, self.vy], dtype=np.float64)

    def check(self, agent_id: Optional[int] = None, step: Optional[int] = None) -> None:
        """Raise ValidationError if a valid state has non-finite or out-of-range fields."""
        if not self.valid:
            return
        at = f"agent {agent_id} step {step}"
        for name in ("x", "y", "z", "heading", "vx", "vy"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"{at}: {name} is not finite", agent_id, "finite")
        if not (-math.pi < self.heading <= math.pi):
            raise ValidationError(
                f"{at}: heading {self.heading!r} outside (-pi, pi]", agent_id, "heading_range"
            )


@dataclass(frozen=True)
class Agent:
    id: int
    kind: AgentKind
    length: float
    width: float
    height: float
    is_adv: bool
    tracks_to_predict: bool
    past: tuple[AgentState, ...]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValidationError(f"agent id {self.id} is negative", self.id, "id_nonnegative")
        object.__setattr__(self, "kind", AgentKind(self.kind))
        object.__setattr__(self, "past", tuple(self.past))
        for step, state in enumerate(self.past):
            state.check(self.id, step)

    @property
    def current(self) -> AgentState:
        """State at the last history step."""
        return self.past[-1]

    @property
    def is_valid(self) -> bool:
        return self.current.valid


@dataclass(frozen=True)
class Scenario:
    """Static scene context: agents with their observed history, plus timing."""

    scenario_id: str
    agents: tuple[Agent, ...]
    history_len: int
    horizon: int
    dt: float
    complete: bool = False
    _index: dict[int, Agent] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        if self.history_len < 2:
            raise ValidationError(f"history_len must be >= 2, got {self.history_len}", rule="history_len")
        if self.horizon < 1:
            raise ValidationError(f"horizon must be >= 1, got {self.horizon}", rule="horizon")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValidationError(f"dt must be > 0, got {self.dt}", rule="dt")

        index: dict[int, Agent] = {}
        for agent in self.agents:
            if agent.id in index:
                raise ValidationError(f"duplicate id {agent.id}", agent.id, "unique_id")
            if len(agent.past) != self.history_len:
                raise ValidationError(
                    f"agent {agent.id}: past has {len(agent.past)} entries, expected {self.history_len}",
                    agent.id,
                    "history_len",
                )
            index[agent.id] = agent
        object.__setattr__(self, "_index", index)

        advs = [a.id for a in self.agents if a.is_adv]
        if len(advs) > 1:
            raise ValidationError(
                f"more than one ADV agent: {advs}", advs[1], "single_adv"
            )
        if self.complete and len(advs) != 1:
            raise ValidationError("complete scenario must have exactly one ADV agent", rule="single_adv")

    def agent(self, agent_id: int) -> Agent:
        try:
            return self._index[agent_id]
        except KeyError:
            raise KeyError(f"no agent with id {agent_id}") from None

    @property
    def agent_ids(self) -> list[int]:
        return sorted(self._index)

    def current_positions(self, ids: Iterable[int]) -> np.ndarray:
        """(N, 3) current positions for the given ids, in the given order."""
        return np.array([self.agent(i).current.position for i in ids], dtype=np.float64).reshape(-1, 3)


@dataclass(frozen=True)
class Partition:
    """The three mutually exclusive agent groups: ADV, World-p and World-o."""

    adv: Optional[int]
    world_p: frozenset[int]
    world_o: frozenset[int]

    def __post_init__(self) -> None:
        object.__setattr__(self, "world_p", frozenset(self.world_p))
        object.__setattr__(self, "world_o", frozenset(self.world_o))
        adv = {self.adv} if self.adv is not None else set()
        if adv & self.world_p or adv & self.world_o or self.world_p & self.world_o:
            raise ValueError("partition groups must be pairwise disjoint")

    @property
    def adv_ids(self) -> frozenset[int]:
        return frozenset() if self.adv is None else frozenset({self.adv})

    @property
    def all_ids(self) -> frozenset[int]:
        return self.adv_ids | self.world_p | self.world_o

    def group_of(self, agent_id: int) -> Optional[str]:
        if agent_id == self.adv:
            return "adv"
        if agent_id in self.world_p:
            return "world_p"
        if agent_id in self.world_o:
            return "world_o"
        return None


def partition_agents(scenario: Scenario) -> Partition:
    """Split the currently-valid agents into ADV, World-p and World-o.

    ``is_adv`` takes precedence over ``tracks_to_predict``. Agents whose
    last history state is invalid land in no group.
    """
    adv = None
    world_p = set()
    world_o = set()
    for agent in scenario.agents:
        if not agent.is_valid:
            continue
        if agent.is_adv:
            adv = agent.id
        elif agent.tracks_to_predict:
            world_p.add(agent.id)
        else:
            world_o.add(agent.id)
    return Partition(adv=adv, world_p=frozenset(world_p), world_o=frozenset(world_o))


def _json_path(error: jsonschema.ValidationError) -> str:
    return "/".join(str(p) for p in error.absolute_path)


def parse_json_text(text: str, schema: dict[str, Any]) -> Any:
    """json.loads + schema validation, mapping failures to SchemaError."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(exc.msg, line=exc.lineno) from None
    error = jsonschema.exceptions.best_match(jsonschema.Draft7Validator(schema).iter_errors(data))
    if error is not None:
        raise SchemaError(error.message, field=_json_path(error) or "<root>")
    return data


def read_json_file(path: PathLike, schema: dict[str, Any]) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"{path}: not UTF-8 ({exc.reason})") from None
    return parse_json_text(text, schema)


def state_from_dict(d: dict[str, Any]) -> AgentState:
    return AgentState(
        x=float(d["x"]),
        y=float(d["y"]),
        z=float(d["z"]),
        heading=float(d["heading"]),
        vx=float(d["vx"]),
        vy=float(d["vy"]),
        valid=bool(d["valid"]),
    )


def state_to_dict(s: AgentState) -> dict[str, Any]:
    return {"x": s.x, "y": s.y, "z": s.z, "heading": s.heading, "vx": s.vx, "vy": s.vy, "valid": s.valid}


def scenario_from_dict(data: dict[str, Any]) -> Scenario:
    """Build a Scenario from schema-valid JSON data; invariants are enforced here."""
    agents = []
    for a in data["agents"]:
        agents.append(
            Agent(
                id=int(a["id"]),
                kind=AgentKind(a["kind"]),
                length=float(a["length"]),
                width=float(a["width"]),
                height=float(a["height"]),
                is_adv=bool(a["is_adv"]),
                tracks_to_predict=bool(a["tracks_to_predict"]),
                past=tuple(state_from_dict(s) for s in a["past"]),
            )
        )
    return Scenario(
        scenario_id=data["scenario_id"],
        agents=tuple(agents),
        history_len=int(data["history_len"]),
        horizon=int(data["horizon"]),
        dt=float(data["dt"]),
        complete=bool(data.get("complete", False)),
    )


def scenario_to_dict(scenario: Scenario) -> dict[str, Any]:
    data: dict[str, Any] = {
        "scenario_id": scenario.scenario_id,
        "history_len": scenario.history_len,
        "horizon": scenario.horizon,
        "dt": scenario.dt,
    }
    if scenario.complete:
        data["complete"] = True
    data["agents"] = [
        {
            "id": a.id,
            "kind": a.kind.value,
            "length": a.length,
            "width": a.width,
            "height": a.height,
            "is_adv": a.is_adv,
            "tracks_to_predict": a.tracks_to_predict,
            "past": [state_to_dict(s) for s in a.past],
        }
        for a in scenario.agents
    ]
    return data


def load_scenario(path: PathLike) -> Scenario:
    """Load and validate a scenario file.

    Raises:
        SchemaError: the file is not JSON or does not match SCENARIO_SCHEMA.
        ValidationError: a data-model invariant is violated (names the agent and rule).
        OSError: the file cannot be read.
    """
    return scenario_from_dict(read_json_file(path, SCENARIO_SCHEMA))


def save_scenario(scenario: Scenario, path: PathLike) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n", encoding="utf-8")
