"""Batch diagnostics: minADE, residual collision rate and CAD trial statistics."""

from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Union

import numpy as np

from cadsim.cad import detect_collision
from cadsim.rollout import RolloutBatch
from cadsim.scenario import AGENT_STATE_SCHEMA, read_json_file, state_from_dict

PathLike = Union[str, Path]


@dataclass(frozen=True, eq=False)
class AgentTruth:
    """(T, 3) true future positions with a (T,) validity mask."""

    positions: np.ndarray
    valid: np.ndarray


GroundTruthFuture = Mapping[int, AgentTruth]

GROUND_TRUTH_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "propertyNames": {"pattern": "^[0-9]+$"},
    "additionalProperties": {"type": "array", "minItems": 1, "items": AGENT_STATE_SCHEMA},
}


def load_ground_truth(path: PathLike, horizon: Optional[int] = None) -> dict[int, AgentTruth]:
    """Read a ground-truth file: agent id -> list of T agent states."""
    data = read_json_file(path, GROUND_TRUTH_SCHEMA)
    out = {}
    for key, states in data.items():
        parsed = [state_from_dict(s) for s in states]
        if horizon is not None and len(parsed) != horizon:
            raise ValueError(f"agent {key}: ground truth has {len(parsed)} steps, expected {horizon}")
        out[int(key)] = AgentTruth(
            np.array([[s.x, s.y, s.z] for s in parsed]),
            np.array([s.valid for s in parsed], dtype=bool),
        )
    return out


def ground_truth_to_dict(truth: GroundTruthFuture) -> dict[str, Any]:
    return {
        str(i): [
            {"x": float(p[0]), "y": float(p[1]), "z": float(p[2]), "heading": 0.0, "vx": 0.0, "vy": 0.0, "valid": bool(v)}
            for p, v in zip(t.positions, t.valid)
        ]
        for i, t in sorted(truth.items())
    }


def compute_min_ade(
    batch: RolloutBatch,
    truth: GroundTruthFuture,
    agents: Optional[Iterable[int]] = None,
) -> float:
    """Mean over agents of the best (over rollouts) average xy displacement error.

    Args:
        batch: rollouts to score.
        truth: true futures for every scored agent.
        agents: restrict scoring to these ids (default: every agent in the batch).

    Returns:
        minADE in meters.

    Raises:
        ValueError: no agent could be scored, or an agent lacks ground truth.
    """
    if not batch.rollouts:
        raise ValueError("empty batch")
    ids = sorted(batch.rollouts[0].poses) if agents is None else sorted(set(agents))
    per_agent = []
    for i in ids:
        if i not in truth:
            raise ValueError(f"no ground truth for agent {i}")
        gt = truth[i]
        mask = np.asarray(gt.valid, dtype=bool)
        if not mask.any():
            warnings.warn(f"agent {i} has no valid ground-truth steps; skipped", stacklevel=2)
            continue
        pred = np.stack([r.poses[i].positions for r in batch.rollouts])  # (R, T, 3)
        if pred.shape[1] != len(mask):
            raise ValueError(f"agent {i}: horizon {pred.shape[1]} != ground truth {len(mask)}")
        d = pred[:, mask, :2] - gt.positions[mask, :2]
        err = np.hypot(d[..., 0], d[..., 1])
        # fsum per rollout: a rollout's score must not depend on how many others share the batch.
        per_agent.append(min(math.fsum(row) for row in err) / err.shape[1])
    if not per_agent:
        raise ValueError("no agents with valid ground truth")
    return float(np.mean(per_agent))


@dataclass(frozen=True)
class BatchMetrics:
    residual_collision_rate: float
    mean_trials_adv: float
    mean_trials_world_p: float
    distinct_rollout_count: int
    num_rollouts: int
    min_ade: Optional[float] = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def _mean_trials(values: list[int]) -> float:
    used = [v for v in values if v > 0]
    return float(np.mean(used)) if used else 0.0


def compute_batch_metrics(
    batch: RolloutBatch,
    threshold: float = 0.1,
    distance_mode: str = "3d",
    truth: Optional[GroundTruthFuture] = None,
    ade_agents: Optional[Iterable[int]] = None,
) -> BatchMetrics:
    """Aggregate diagnostics over a batch.

    The collision re-check spans all kept trajectories, so collisions
    between agents of different groups count too. Trial means skip
    rollouts where the group was empty.
    """
    if not batch.rollouts:
        raise ValueError("empty batch")
    collided = 0
    seen = set()
    for r in batch.rollouts:
        trajs = {i: p.positions for i, p in r.poses.items()}
        if detect_collision(trajs, threshold, distance_mode).collided:
            collided += 1
        seen.add(tuple((i, p.positions.tobytes()) for i, p in r.poses.items()))
    n = len(batch.rollouts)
    return BatchMetrics(
        residual_collision_rate=collided / n,
        mean_trials_adv=_mean_trials([r.diagnostics.adv_trials for r in batch.rollouts]),
        mean_trials_world_p=_mean_trials([r.diagnostics.world_p_trials for r in batch.rollouts]),
        distinct_rollout_count=len(seen),
        num_rollouts=n,
        min_ade=None if truth is None else compute_min_ade(batch, truth, ade_agents),
    )


CSV_FIELDS = (
    "scenario_id",
    "num_rollouts",
    "min_ade",
    "residual_collision_rate",
    "mean_trials_adv",
    "mean_trials_world_p",
    "distinct_rollout_count",
)


def metrics_to_csv(rows: Iterable[tuple[str, BatchMetrics]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for scenario_id, m in rows:
        row = {"scenario_id": scenario_id, **m.to_dict()}
        if row["min_ade"] is None:
            row["min_ade"] = ""
        writer.writerow(row)
    return buf.getvalue()


def metrics_to_json(scenario_id: str, m: BatchMetrics) -> str:
    payload = {"scenario_id": scenario_id, **m.to_dict()}
    for k, v in payload.items():
        if isinstance(v, float) and not math.isfinite(v):
            raise ValueError(f"metric {k} is not finite")
    return json.dumps(payload, indent=2) + "\n"
