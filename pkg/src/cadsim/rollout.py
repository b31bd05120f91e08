"""Rollout orchestration.

One rollout runs three isolated sampling paths:

* ADV: the adv-bound predictor forecasts ADV and World-p jointly, CAD
  resamples that joint output, and only the ADV trajectory is kept.
* World-p: the world-p-bound predictor forecasts the same joint set, a
  separate CAD pass resamples it, and only World-p trajectories are kept.
* World-o: each agent's trajectory is drawn from the world-o-bound
  predictor (constant velocity plus noise by default), no CAD.

Every path draws from its own named random stream keyed by
``(master_seed, rollout_index, group)``, so no path can observe another's
predictor, predictions or samples.
"""

from __future__ import annotations

import copy
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import numpy as np

from cadsim.cad import CadConfig, cad_resample, sample_modes
from cadsim.errors import CadsimError, PredictorError, RolloutError, SchemaError
from cadsim.kinematics import PoseTrajectory, make_pose_trajectory
from cadsim.predictors import Predictor, PredictorOutput, SyntheticConfig, make_predictor
from cadsim.scenario import Partition, Scenario, partition_agents, read_json_file
from cadsim.streams import group_stream

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

GROUPS = ("adv", "world_p", "world_o")
GROUP_TAG = {"adv": "adv_model", "world_p": "world_p_model", "world_o": "world_o_model"}

DEFAULT_BINDINGS = {"adv": "synthetic", "world_p": "synthetic", "world_o": "constant_velocity"}


@dataclass(frozen=True)
class RolloutConfig:
    """Everything that determines a batch besides the scenario.

    ``base_dir`` resolves relative ``file:`` bindings and ``jobs`` caps the
    worker count; neither affects the sampled output.
    """

    num_rollouts: int = 32
    noise_scale: float = 0.01
    cad: CadConfig = field(default_factory=CadConfig)
    predictors: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_BINDINGS))
    master_seed: int = 0
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    base_dir: Optional[str] = field(default=None, compare=False)
    jobs: int = field(default=1, compare=False)

    def __post_init__(self) -> None:
        if self.num_rollouts < 1:
            raise ValueError(f"num_rollouts must be >= 1, got {self.num_rollouts}")
        if not self.noise_scale >= 0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")
        bindings = dict(DEFAULT_BINDINGS)
        unknown = set(self.predictors) - set(GROUPS)
        if unknown:
            raise ValueError(f"unknown predictor groups: {sorted(unknown)}")
        bindings.update(self.predictors)
        object.__setattr__(self, "predictors", bindings)

    def build_predictors(self) -> dict[str, Predictor]:
        return {
            g: make_predictor(self.predictors[g], self.noise_scale, self.synthetic, self.base_dir)
            for g in GROUPS
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_rollouts": self.num_rollouts,
            "noise_scale": self.noise_scale,
            "master_seed": self.master_seed,
            "cad": self.cad.to_dict(),
            "predictors": {g: self.predictors[g] for g in GROUPS},
            "synthetic": self.synthetic.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base_dir: Optional[PathLike] = None) -> "RolloutConfig":
        d = dict(d)
        kwargs: dict[str, Any] = {}
        if "cad" in d:
            kwargs["cad"] = CadConfig.from_dict(d.pop("cad"))
        if "synthetic" in d:
            kwargs["synthetic"] = SyntheticConfig.from_dict(d.pop("synthetic"))
        for key in ("num_rollouts", "noise_scale", "master_seed", "predictors"):
            if key in d:
                kwargs[key] = d.pop(key)
        if d:
            raise ValueError(f"unknown config keys: {sorted(d)}")
        return cls(base_dir=None if base_dir is None else str(base_dir), **kwargs)


CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "num_rollouts": {"type": "integer", "minimum": 1},
        "noise_scale": {"type": "number", "minimum": 0},
        "master_seed": {"type": "integer", "minimum": 0},
        "cad": {
            "type": "object",
            "properties": {
                "max_trials": {"type": "integer", "minimum": 1},
                "collision_threshold": {"type": "number", "minimum": 0},
                "distance_mode": {"enum": ["3d", "xy"]},
                "spatial_hash": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "predictors": {
            "type": "object",
            "properties": {g: {"type": "string"} for g in GROUPS},
            "additionalProperties": False,
        },
        "synthetic": {
            "type": "object",
            "properties": {
                "low_yaw_rate": {"type": "number"},
                "high_yaw_rate": {"type": "number"},
                "brake_decel": {"type": "number"},
                "prior_logits": {"type": "array", "items": {"type": "number"}},
                "logit_jitter": {"type": "number"},
                "num_modes": {"type": "integer"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def load_rollout_config(path: PathLike) -> RolloutConfig:
    """Read a config file; relative ``file:`` bindings resolve against its directory."""
    data = read_json_file(path, CONFIG_SCHEMA)
    try:
        return RolloutConfig.from_dict(data, base_dir=Path(path).resolve().parent)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None


@dataclass(frozen=True)
class RolloutDiagnostics:
    adv_trials: int = 0
    world_p_trials: int = 0
    adv_collision_free: Optional[bool] = None
    world_p_collision_free: Optional[bool] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "adv_trials": self.adv_trials,
            "world_p_trials": self.world_p_trials,
            "adv_collision_free": self.adv_collision_free,
            "world_p_collision_free": self.world_p_collision_free,
        }


@dataclass(frozen=True)
class Rollout:
    """One sampled joint future for every partitioned agent."""

    poses: Mapping[int, PoseTrajectory]
    diagnostics: RolloutDiagnostics

    def __post_init__(self) -> None:
        object.__setattr__(self, "poses", dict(sorted(self.poses.items())))


@dataclass(frozen=True)
class RolloutBatch:
    scenario_id: str
    rollouts: tuple[Rollout, ...]
    config: Mapping[str, Any]

    def __post_init__(self) -> None:
        object.__setattr__(self, "rollouts", tuple(self.rollouts))


def _predict(
    predictor: Predictor,
    scenario: Scenario,
    ids: frozenset[int],
    master_seed: int,
    rollout_index: int,
    group: str,
) -> PredictorOutput:
    tag = GROUP_TAG[group]
    rng = group_stream(master_seed, rollout_index, tag, "predict")
    try:
        out = predictor(scenario, ids, rng, tag)
    except CadsimError as exc:
        raise PredictorError(str(exc), tag) from exc
    except (ValueError, OSError) as exc:
        raise PredictorError(f"{type(exc).__name__}: {exc}", tag) from exc
    missing = set(ids) - set(out.per_agent)
    if missing:
        raise PredictorError(f"no prediction for agents {sorted(missing)}", tag)
    return out.restrict(ids)


def simulate_one(
    scenario: Scenario,
    partition: Partition,
    config: RolloutConfig,
    rollout_index: int,
    predictors: Optional[Mapping[str, Predictor]] = None,
) -> Rollout:
    """Sample one rollout; depends only on (scenario, config, rollout_index).

    Args:
        predictors: optional group -> predictor override; defaults to the
            config's bindings.
    """
    if not 0 <= rollout_index < config.num_rollouts:
        raise ValueError(f"rollout_index {rollout_index} outside [0, {config.num_rollouts})")
    preds = dict(predictors) if predictors is not None else config.build_predictors()
    seed = config.master_seed
    joint = partition.adv_ids | partition.world_p
    kept: dict[int, np.ndarray] = {}
    diag: dict[str, Any] = {}

    for group, keep in (("adv", partition.adv_ids), ("world_p", partition.world_p)):
        if not keep:
            continue
        out = _predict(preds[group], scenario, joint, seed, rollout_index, group)
        rng = group_stream(seed, rollout_index, GROUP_TAG[group], "sample")
        result = cad_resample(out.per_agent, config.cad, rng)
        for i in keep:
            kept[i] = result.trajectories[i]
        diag[f"{group}_trials"] = result.trials_used
        diag[f"{group}_collision_free"] = result.collision_free

    if partition.world_o:
        out = _predict(preds["world_o"], scenario, partition.world_o, seed, rollout_index, "world_o")
        rng = group_stream(seed, rollout_index, GROUP_TAG["world_o"], "sample")
        _, trajs = sample_modes(out.per_agent, rng)
        kept.update(trajs)

    poses = {}
    for i, positions in kept.items():
        cur = scenario.agent(i).current
        poses[i] = make_pose_trajectory(positions, cur.heading, (cur.x, cur.y))
    return Rollout(poses, RolloutDiagnostics(**diag))


def simulate_batch(
    scenario: Scenario,
    config: RolloutConfig,
    predictors: Optional[Mapping[str, Predictor]] = None,
    partition: Optional[Partition] = None,
) -> RolloutBatch:
    """Run ``config.num_rollouts`` independent rollouts, ordered by index."""
    part = partition if partition is not None else partition_agents(scenario)
    preds = dict(predictors) if predictors is not None else config.build_predictors()
    logger.info(
        "simulating %s: %d rollouts, adv=%s world_p=%d world_o=%d",
        scenario.scenario_id,
        config.num_rollouts,
        part.adv,
        len(part.world_p),
        len(part.world_o),
    )

    def run(index: int) -> Rollout:
        try:
            return simulate_one(scenario, part, config, index, preds)
        except CadsimError as exc:
            raise RolloutError(str(exc), index) from exc

    indices = range(config.num_rollouts)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            rollouts = list(pool.map(run, indices))
    else:
        rollouts = [run(i) for i in indices]
    return RolloutBatch(scenario.scenario_id, tuple(rollouts), config.to_dict())


ROLLOUT_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "scenario_id": {"type": "string"},
        "config": {"type": "object"},
        "rollouts": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "properties": {
                    "agents": {
                        "type": "object",
                        "propertyNames": {"pattern": "^[0-9]+$"},
                        "additionalProperties": {
                            "type": "object",
                            "properties": {
                                "positions": {
                                    "type": "array",
                                    "minItems": 1,
                                    "items": {
                                        "type": "array",
                                        "items": {"type": "number"},
                                        "minItems": 3,
                                        "maxItems": 3,
                                    },
                                },
                                "headings": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                            },
                            "required": ["positions", "headings"],
                            "additionalProperties": False,
                        },
                    },
                    "diagnostics": {
                        "type": "object",
                        "properties": {
                            "adv_trials": {"type": "integer", "minimum": 0},
                            "world_p_trials": {"type": "integer", "minimum": 0},
                            "adv_collision_free": {"type": ["boolean", "null"]},
                            "world_p_collision_free": {"type": ["boolean", "null"]},
                        },
                        "required": ["adv_trials", "world_p_trials"],
                        "additionalProperties": False,
                    },
                },
                "required": ["agents", "diagnostics"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["scenario_id", "config", "rollouts"],
    "additionalProperties": False,
}


def batch_to_dict(batch: RolloutBatch) -> dict[str, Any]:
    return {
        "scenario_id": batch.scenario_id,
        "config": copy.deepcopy(dict(batch.config)),
        "rollouts": [
            {
                "agents": {
                    str(i): {"positions": p.positions.tolist(), "headings": p.headings.tolist()}
                    for i, p in r.poses.items()
                },
                "diagnostics": r.diagnostics.to_dict(),
            }
            for r in batch.rollouts
        ],
    }


def batch_from_dict(data: Mapping[str, Any]) -> RolloutBatch:
    rollouts = []
    for r in data["rollouts"]:
        poses = {int(k): PoseTrajectory(v["positions"], v["headings"]) for k, v in r["agents"].items()}
        rollouts.append(Rollout(poses, RolloutDiagnostics(**r["diagnostics"])))
    return RolloutBatch(data["scenario_id"], tuple(rollouts), data["config"])


def dumps_batch(batch: RolloutBatch) -> str:
    return json.dumps(batch_to_dict(batch), separators=(",", ":")) + "\n"


def save_batch(batch: RolloutBatch, path: PathLike) -> None:
    Path(path).write_text(dumps_batch(batch), encoding="utf-8")


def load_batch(path: PathLike) -> RolloutBatch:
    """Read a rollout file, validating it against ROLLOUT_SCHEMA."""
    data = read_json_file(path, ROLLOUT_SCHEMA)
    try:
        return batch_from_dict(data)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
