"""Builders shared across test modules."""

from pathlib import Path

import numpy as np

from cadsim.predictors import TrajectoryDistribution
from cadsim.scenario import Agent, AgentState, Scenario

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

# criterion number -> (passed, label, detail); printed by conftest's terminal summary.
ACCEPTANCE_RESULTS = {}


def detour_fixture():
    """Two agents, two live modes each, exactly one of four joint combos collision-free.

    Agent 1: P (parked at origin) or Q (drives x = 0..5 along +x).
    Agent 2: P or R (parked at x = 5).
    (P, P), (Q, P) and (Q, R) collide; only (P, R) is clear. The four
    remaining modes per agent carry zero probability and sit far away.
    """
    T = 6
    P = np.zeros((T, 3))
    Q = np.column_stack([np.arange(T, dtype=float), np.zeros(T), np.zeros(T)])
    R = np.tile([5.0, 0.0, 0.0], (T, 1))
    far = [np.tile([100.0 + 10 * k, 50.0, 0.0], (T, 1)) for k in range(4)]
    probs = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0]
    return {
        1: TrajectoryDistribution(np.stack([P, Q, *far]), probs),
        2: TrajectoryDistribution(np.stack([P, R, *far]), probs),
    }


def state(x=0.0, y=0.0, z=0.0, heading=0.0, vx=0.0, vy=0.0, valid=True):
    return AgentState(x=x, y=y, z=z, heading=heading, vx=vx, vy=vy, valid=valid)


def agent(agent_id, current, history_len=2, is_adv=False, tracks_to_predict=False, kind="vehicle"):
    """Agent whose history repeats ``current`` (earlier steps always valid)."""
    earlier = AgentState(**{**current.__dict__, "valid": True})
    past = (earlier,) * (history_len - 1) + (current,)
    return Agent(
        id=agent_id,
        kind=kind,
        length=4.5,
        width=2.0,
        height=1.6,
        is_adv=is_adv,
        tracks_to_predict=tracks_to_predict,
        past=past,
    )


def scenario(agents, horizon=5, dt=0.1, history_len=2, scenario_id="test"):
    return Scenario(scenario_id=scenario_id, agents=tuple(agents), history_len=history_len, horizon=horizon, dt=dt)
