"""Deterministic synthetic scenarios and matching ground-truth futures."""

from __future__ import annotations

import math

import numpy as np

from cadsim.metrics import AgentTruth
from cadsim.scenario import Agent, AgentKind, AgentState, Scenario

DEFAULT_HISTORY_LEN = 11
DEFAULT_HORIZON = 80
DEFAULT_DT = 0.1

_DIMENSIONS = {
    AgentKind.VEHICLE: (4.5, 2.0, 1.6),
    AgentKind.PEDESTRIAN: (0.6, 0.6, 1.8),
    AgentKind.CYCLIST: (1.8, 0.7, 1.7),
}
_SPEED_RANGE = {
    AgentKind.VEHICLE: (3.0, 15.0),
    AgentKind.PEDESTRIAN: (0.0, 1.5),
    AgentKind.CYCLIST: (2.0, 6.0),
}


def _wrap(a: float) -> float:
    w = math.remainder(a, 2 * math.pi)
    return math.pi if w <= -math.pi else w


def make_fixture_scenario(
    num_agents: int,
    seed: int,
    history_len: int = DEFAULT_HISTORY_LEN,
    horizon: int = DEFAULT_HORIZON,
    dt: float = DEFAULT_DT,
) -> Scenario:
    """Build a reproducible scene around a moving ADV.

    Agent 0 is the ADV heading roughly along +x. Agents ``1..max(1, N // 3)``
    carry ``tracks_to_predict``. With six or more agents, agent 1 misses its
    first history step; with eight or more, the last agent is invalid at the
    current step and is left out of every group.
    """
    if num_agents < 1:
        raise ValueError("num_agents must be >= 1")
    rng = np.random.default_rng(seed)
    n_predict = max(1, num_agents // 3)

    placed: list[np.ndarray] = []
    agents = []
    for i in range(num_agents):
        if i == 0:
            kind = AgentKind.VEHICLE
            pos = np.zeros(2)
            speed = rng.uniform(8.0, 12.0)
            theta = rng.uniform(-0.2, 0.2)
        else:
            kind = AgentKind(rng.choice(["vehicle", "vehicle", "pedestrian", "cyclist"]))
            while True:
                pos = rng.uniform(-50.0, 50.0, size=2)
                if all(np.linalg.norm(pos - p) > 6.0 for p in placed):
                    break
            speed = rng.uniform(*_SPEED_RANGE[kind])
            theta = rng.uniform(-math.pi, math.pi)
        placed.append(pos)
        z = float(rng.uniform(-0.5, 0.5))
        vx, vy = speed * math.cos(theta), speed * math.sin(theta)
        heading = _wrap(theta)

        past = []
        for h in range(history_len):
            back = (history_len - 1 - h) * dt
            valid = not (
                (i == 1 and num_agents >= 6 and h == 0)
                or (i == num_agents - 1 and num_agents >= 8 and h == history_len - 1)
            )
            past.append(
                AgentState(
                    x=float(pos[0] - vx * back),
                    y=float(pos[1] - vy * back),
                    z=z,
                    heading=heading,
                    vx=vx,
                    vy=vy,
                    valid=valid,
                )
            )
        length, width, height = _DIMENSIONS[kind]
        agents.append(
            Agent(
                id=i,
                kind=kind,
                length=length,
                width=width,
                height=height,
                is_adv=i == 0,
                tracks_to_predict=1 <= i <= n_predict,
                past=tuple(past),
            )
        )
    return Scenario(
        scenario_id=f"fixture-{num_agents}-{seed}",
        agents=tuple(agents),
        history_len=history_len,
        horizon=horizon,
        dt=dt,
        complete=True,
    )


def make_fixture_truth(scenario: Scenario, seed: int) -> dict[int, AgentTruth]:
    """Plausible true futures: each valid agent follows a gentle constant-yaw-rate arc."""
    rng = np.random.default_rng(seed)
    t = np.arange(1, scenario.horizon + 1) * scenario.dt
    out = {}
    for agent in scenario.agents:
        yaw_rate = float(rng.normal(0.0, 0.05))
        if not agent.is_valid:
            continue
        cur = agent.current
        speed = math.hypot(cur.vx, cur.vy)
        theta = math.atan2(cur.vy, cur.vx) if speed > 0 else cur.heading
        if abs(yaw_rate) < 1e-9:
            x = cur.x + speed * math.cos(theta) * t
            y = cur.y + speed * math.sin(theta) * t
        else:
            r = speed / yaw_rate
            x = cur.x + r * (np.sin(theta + yaw_rate * t) - math.sin(theta))
            y = cur.y - r * (np.cos(theta + yaw_rate * t) - math.cos(theta))
        positions = np.column_stack([x, y, np.full_like(t, cur.z)])
        out[agent.id] = AgentTruth(positions, np.ones(len(t), dtype=bool))
    return out
