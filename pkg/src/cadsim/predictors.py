"""Multi-modal future trajectory predictors.

Every predictor maps a set of agent ids to one :class:`TrajectoryDistribution`
per agent: ``K`` candidate trajectories of shape ``(T, 3)`` and a categorical
probability vector over them.

Three implementations are provided:

* constant velocity plus i.i.d. Gaussian position noise (single mode),
* a synthetic six-mode kinematic template model that mimics the output shape
  of a learned multi-modal predictor,
* a file-backed predictor that replays distributions exported offline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Protocol, Union

import numpy as np

from cadsim.errors import PredictorError, SchemaError, ValidationError
from cadsim.scenario import Scenario, read_json_file

PathLike = Union[str, Path]

GROUP_TAGS = ("adv_model", "world_p_model", "world_o_model")

PROB_TOLERANCE = 1e-9
FILE_PROB_TOLERANCE = 1e-6
DEFAULT_NUM_MODES = 6

# Below this speed (m/s) an agent has no usable velocity direction.
_MIN_SPEED = 1e-6


@dataclass(frozen=True, eq=False)
class TrajectoryDistribution:
    """``K`` candidate trajectories with a categorical distribution over them.

    Attributes:
        modes: (K, T, 3) candidate center positions.
        probs: (K,) non-negative probabilities summing to 1 within 1e-9.
    """

    modes: np.ndarray
    probs: np.ndarray

    def __post_init__(self) -> None:
        modes = np.array(self.modes, dtype=np.float64)
        probs = np.array(self.probs, dtype=np.float64)
        if modes.ndim != 3 or modes.shape[2] != 3:
            raise ValidationError(f"modes must have shape (K, T, 3), got {modes.shape}", rule="modes_shape")
        if modes.shape[0] < 1 or modes.shape[1] < 1:
            raise ValidationError(f"modes must be non-empty, got {modes.shape}", rule="modes_shape")
        if probs.shape != (modes.shape[0],):
            raise ValidationError(
                f"probs shape {probs.shape} does not match {modes.shape[0]} modes", rule="probs_shape"
            )
        if not np.all(np.isfinite(modes)):
            raise ValidationError("mode coordinates must be finite", rule="finite")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValidationError("probs must be finite and non-negative", rule="probs_nonnegative")
        if abs(math.fsum(probs) - 1.0) > PROB_TOLERANCE:
            raise ValidationError(f"probs sum to {math.fsum(probs)!r}, not 1", rule="probs_sum")
        modes.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "probs", probs)

    @property
    def num_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def horizon(self) -> int:
        return self.modes.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TrajectoryDistribution):
            return NotImplemented
        return np.array_equal(self.modes, other.modes) and np.array_equal(self.probs, other.probs)

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class PredictorOutput:
    """Per-agent distributions produced for one group's model."""

    group_tag: str
    per_agent: Mapping[int, TrajectoryDistribution]

    def __post_init__(self) -> None:
        if self.group_tag not in GROUP_TAGS:
            raise ValueError(f"unknown group tag {self.group_tag!r}")
        object.__setattr__(self, "per_agent", dict(sorted(self.per_agent.items())))

    def restrict(self, ids: Iterable[int]) -> "PredictorOutput":
        ids = set(ids)
        return PredictorOutput(self.group_tag, {i: d for i, d in self.per_agent.items() if i in ids})


def _checked_ids(scenario: Scenario, ids: Iterable[int]) -> list[int]:
    ordered = sorted(set(ids))
    for i in ordered:
        try:
            agent = scenario.agent(i)
        except KeyError:
            raise ValidationError(f"agent {i} is not in scenario {scenario.scenario_id}", i, "unknown_agent") from None
        if not agent.is_valid:
            raise ValidationError(f"agent {i} has an invalid current state", i, "current_valid")
    return ordered


def _step_times(scenario: Scenario) -> np.ndarray:
    return np.arange(1, scenario.horizon + 1, dtype=np.float64) * scenario.dt


def _split(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = 134217729.0 * a  # 2**27 + 1
    hi = c - (c - a)
    return hi, a - hi


def _two_prod(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    return p, ((ah * bh - p) + ah * bl + al * bh) + al * bl


def linear_extrapolation(p0: np.ndarray, v: np.ndarray, horizon: int, dt: float) -> np.ndarray:
    """(T, D) positions ``p0 + v * (t * dt)`` for t = 1..T, correctly rounded.

    ``v * t * dt`` splits exactly into four doubles via two error-free
    products; ``math.fsum`` then adds them to ``p0`` with a single rounding,
    so the result stays exact to the last bit under heavy cancellation.
    """
    steps = np.arange(1, horizon + 1, dtype=np.float64)[:, None]
    p0 = np.asarray(p0, dtype=np.float64)[None, :]
    v = np.asarray(v, dtype=np.float64)[None, :]
    t_hi, t_lo = _two_prod(steps, np.float64(dt))
    a_hi, a_lo = _two_prod(v, t_hi)
    b_hi, b_lo = _two_prod(v, t_lo)
    terms = np.stack(np.broadcast_arrays(p0, a_hi, a_lo, b_hi, b_lo), axis=-1)
    flat = terms.reshape(-1, 5).tolist()
    return np.fromiter(map(math.fsum, flat), dtype=np.float64, count=len(flat)).reshape(terms.shape[:-1])


def predict_constant_velocity(
    scenario: Scenario,
    ids: Iterable[int],
    noise_scale: float,
    rng: np.random.Generator,
    group_tag: str = "world_o_model",
) -> PredictorOutput:
    """Constant-velocity extrapolation with additive Gaussian position noise.

    Each agent gets a single mode: ``p0 + v * (t * dt) + k * N(0, 1)``,
    noise drawn independently per coordinate per step (z included; z has
    zero velocity). Noise is drawn for all agents at once, ascending id.
    """
    if not (noise_scale >= 0 and math.isfinite(noise_scale)):
        raise ValueError(f"noise_scale must be finite and >= 0, got {noise_scale}")
    ordered = _checked_ids(scenario, ids)
    noise = rng.standard_normal((len(ordered), scenario.horizon, 3))
    out = {}
    for n, i in enumerate(ordered):
        cur = scenario.agent(i).current
        base = linear_extrapolation([cur.x, cur.y, cur.z], [cur.vx, cur.vy, 0.0], scenario.horizon, scenario.dt)
        positions = base + noise_scale * noise[n]
        out[i] = TrajectoryDistribution(positions[None], np.ones(1))
    return PredictorOutput(group_tag, out)


@dataclass(frozen=True)
class SyntheticConfig:
    """Parameters of the six kinematic mode templates.

    Template order: constant velocity, +low yaw rate arc, -low yaw rate arc,
    +high yaw rate arc, -high yaw rate arc, constant deceleration to a stop.
    Mode probabilities are ``softmax(prior_logits + logit_jitter * N(0, 1))``.
    """

    low_yaw_rate: float = 0.1
    high_yaw_rate: float = 0.3
    brake_decel: float = 3.0
    prior_logits: tuple[float, ...] = (1.5, 0.75, 0.75, 0.0, 0.0, 0.5)
    logit_jitter: float = 0.0
    num_modes: int = DEFAULT_NUM_MODES

    def __post_init__(self) -> None:
        object.__setattr__(self, "prior_logits", tuple(float(v) for v in self.prior_logits))
        if not 1 <= self.num_modes <= len(self.prior_logits):
            raise ValueError(f"num_modes must be in [1, {len(self.prior_logits)}], got {self.num_modes}")
        if len(self.prior_logits) != DEFAULT_NUM_MODES:
            raise ValueError(f"prior_logits needs {DEFAULT_NUM_MODES} entries")
        if self.brake_decel <= 0:
            raise ValueError("brake_decel must be > 0")
        if self.logit_jitter < 0:
            raise ValueError("logit_jitter must be >= 0")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "SyntheticConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic predictor keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "low_yaw_rate": self.low_yaw_rate,
            "high_yaw_rate": self.high_yaw_rate,
            "brake_decel": self.brake_decel,
            "prior_logits": list(self.prior_logits),
            "logit_jitter": self.logit_jitter,
            "num_modes": self.num_modes,
        }


def _arc(p0: np.ndarray, speed: float, theta: float, yaw_rate: float, times: np.ndarray) -> np.ndarray:
    """Constant speed, constant yaw rate arc; exact integration."""
    ang = theta + yaw_rate * times
    r = speed / yaw_rate
    xy = np.stack(
        [p0[0] + r * (np.sin(ang) - math.sin(theta)), p0[1] - r * (np.cos(ang) - math.cos(theta))],
        axis=-1,
    )
    return np.column_stack([xy, np.full(len(times), p0[2])])


def _templates(p0: np.ndarray, vel: np.ndarray, heading: float, times: np.ndarray, cfg: SyntheticConfig) -> np.ndarray:
    speed = math.hypot(vel[0], vel[1])
    theta = math.atan2(vel[1], vel[0]) if speed > _MIN_SPEED else heading
    z = np.full(len(times), p0[2])

    cv = np.column_stack([p0[0] + vel[0] * times, p0[1] + vel[1] * times, z])

    t_stop = speed / cfg.brake_decel
    tc = np.minimum(times, t_stop)
    dist = speed * tc - 0.5 * cfg.brake_decel * tc * tc
    brake = np.column_stack([p0[0] + dist * math.cos(theta), p0[1] + dist * math.sin(theta), z])

    modes = [
        cv,
        _arc(p0, speed, theta, cfg.low_yaw_rate, times),
        _arc(p0, speed, theta, -cfg.low_yaw_rate, times),
        _arc(p0, speed, theta, cfg.high_yaw_rate, times),
        _arc(p0, speed, theta, -cfg.high_yaw_rate, times),
        brake,
    ]
    return np.stack(modes[: cfg.num_modes])


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - logits.max())
    return e / e.sum()


def predict_synthetic_multimodal(
    scenario: Scenario,
    ids: Iterable[int],
    config: Optional[SyntheticConfig] = None,
    rng: Optional[np.random.Generator] = None,
    group_tag: str = "adv_model",
) -> PredictorOutput:
    """Six-mode kinematic stand-in for a learned multi-modal predictor.

    Templates scale with the agent's current speed, so a stationary agent
    gets six copies of its start position. ``rng`` is only consumed when
    ``config.logit_jitter > 0``.
    """
    cfg = config or SyntheticConfig()
    ordered = _checked_ids(scenario, ids)
    times = _step_times(scenario)
    base = np.asarray(cfg.prior_logits[: cfg.num_modes])
    if cfg.logit_jitter > 0:
        if rng is None:
            raise ValueError("logit_jitter > 0 requires an rng")
        jitter = cfg.logit_jitter * rng.standard_normal((len(ordered), cfg.num_modes))
    else:
        jitter = np.zeros((len(ordered), cfg.num_modes))

    out = {}
    for n, i in enumerate(ordered):
        cur = scenario.agent(i).current
        p0 = np.array([cur.x, cur.y, cur.z])
        modes = _templates(p0, np.array([cur.vx, cur.vy]), cur.heading, times, cfg)
        out[i] = TrajectoryDistribution(modes, _softmax(base + jitter[n]))
    return PredictorOutput(group_tag, out)


PREDICTION_SCHEMA: dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "properties": {
        "agents": {
            "type": "object",
            "propertyNames": {"pattern": "^[0-9]+$"},
            "additionalProperties": {
                "type": "object",
                "properties": {
                    "probs": {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    "modes": {
                        "type": "array",
                        "minItems": 1,
                        "items": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "array",
                                "items": {"type": "number"},
                                "minItems": 3,
                                "maxItems": 3,
                            },
                        },
                    },
                },
                "required": ["probs", "modes"],
                "additionalProperties": False,
            },
        },
    },
    "required": ["agents"],
    "additionalProperties": False,
}


def load_prediction_file(path: PathLike) -> dict[int, TrajectoryDistribution]:
    """Read every distribution stored in a prediction file.

    Probabilities off from summing to 1 by more than 1e-6 are rejected;
    smaller drift (float formatting by other tools) is renormalized.
    """
    data = read_json_file(path, PREDICTION_SCHEMA)
    out = {}
    for key, entry in data["agents"].items():
        agent_id = int(key)
        probs = np.asarray(entry["probs"], dtype=np.float64)
        total = math.fsum(probs)
        if abs(total - 1.0) > FILE_PROB_TOLERANCE:
            raise ValidationError(
                f"agent {agent_id}: probs sum to {total!r}, not 1 within {FILE_PROB_TOLERANCE}",
                agent_id,
                "probs_sum",
            )
        if abs(total - 1.0) > PROB_TOLERANCE:
            probs = probs / total
        modes = entry["modes"]
        if len(modes) != len(probs):
            raise SchemaError(
                f"{len(modes)} modes but {len(probs)} probs", field=f"agents/{key}/modes"
            )
        if len({len(m) for m in modes}) != 1:
            raise SchemaError("modes have different lengths", field=f"agents/{key}/modes")
        try:
            out[agent_id] = TrajectoryDistribution(np.asarray(modes, dtype=np.float64), probs)
        except ValidationError as exc:
            raise ValidationError(f"agent {agent_id}: {exc}", agent_id, exc.rule) from None
    return out


def predict_from_file(path: PathLike, ids: Iterable[int], group_tag: str = "adv_model") -> PredictorOutput:
    """Replay stored distributions for ``ids``; every id must be present."""
    stored = load_prediction_file(path)
    return _select(stored, ids, group_tag)


def _select(stored: Mapping[int, TrajectoryDistribution], ids: Iterable[int], group_tag: str) -> PredictorOutput:
    out = {}
    for i in sorted(set(ids)):
        if i not in stored:
            raise ValidationError(f"no prediction for agent {i}", i, "missing_prediction")
        out[i] = stored[i]
    return PredictorOutput(group_tag, out)


def predictions_to_dict(per_agent: Mapping[int, TrajectoryDistribution]) -> dict[str, Any]:
    return {
        "agents": {
            str(i): {"probs": d.probs.tolist(), "modes": d.modes.tolist()}
            for i, d in sorted(per_agent.items())
        }
    }


def save_predictions(output: Union[PredictorOutput, Mapping[int, TrajectoryDistribution]], path: PathLike) -> None:
    per_agent = output.per_agent if isinstance(output, PredictorOutput) else output
    Path(path).write_text(json.dumps(predictions_to_dict(per_agent)) + "\n", encoding="utf-8")


class Predictor(Protocol):
    """Callable predictor bound to one group in a rollout configuration."""

    binding: str

    def __call__(
        self, scenario: Scenario, ids: Iterable[int], rng: np.random.Generator, group_tag: str
    ) -> PredictorOutput: ...


@dataclass(frozen=True)
class ConstantVelocityPredictor:
    noise_scale: float = 0.01
    binding: str = field(default="constant_velocity", init=False)

    def __call__(self, scenario, ids, rng, group_tag):
        return predict_constant_velocity(scenario, ids, self.noise_scale, rng, group_tag)


@dataclass(frozen=True)
class SyntheticPredictor:
    config: SyntheticConfig = field(default_factory=SyntheticConfig)
    binding: str = field(default="synthetic", init=False)

    def __call__(self, scenario, ids, rng, group_tag):
        return predict_synthetic_multimodal(scenario, ids, self.config, rng, group_tag)


class FilePredictor:
    """Serves distributions from a prediction file, read once at construction."""

    def __init__(self, path: PathLike, binding: Optional[str] = None):
        self.path = Path(path)
        self.binding = binding or f"file:{path}"
        self._stored = load_prediction_file(self.path)

    def __call__(self, scenario, ids, rng, group_tag):
        out = _select(self._stored, ids, group_tag)
        for i, d in out.per_agent.items():
            if d.horizon != scenario.horizon:
                raise ValidationError(
                    f"agent {i}: stored horizon {d.horizon} != scenario horizon {scenario.horizon}",
                    i,
                    "horizon",
                )
        return out


def make_predictor(
    binding: str,
    noise_scale: float = 0.01,
    synthetic: Optional[SyntheticConfig] = None,
    base_dir: Optional[PathLike] = None,
) -> Predictor:
    """Resolve a binding string: ``constant_velocity``, ``synthetic`` or ``file:<path>``.

    Relative file paths resolve against ``base_dir`` when given.
    """
    if binding == "constant_velocity":
        return ConstantVelocityPredictor(noise_scale)
    if binding == "synthetic":
        return SyntheticPredictor(synthetic or SyntheticConfig())
    if binding.startswith("file:"):
        p = Path(binding[len("file:"):])
        if base_dir is not None and not p.is_absolute():
            p = Path(base_dir) / p
        return FilePredictor(p, binding)
    raise PredictorError(f"unknown predictor binding {binding!r}")
