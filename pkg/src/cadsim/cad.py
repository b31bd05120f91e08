"""Collision avoidance detour (CAD) resampling.

Joint mode sampling with rejection: every agent draws a mode from its own
categorical distribution, the joint sample is checked for center-distance
collisions, and on collision *all* agents are redrawn. The loop stops at the
first collision-free sample or after ``max_trials`` trials, in which case the
last sample is returned as is.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Any, Mapping, Optional

import numpy as np

from cadsim.errors import ValidationError
from cadsim.predictors import TrajectoryDistribution

DISTANCE_MODES = ("3d", "xy")

# Agent count above which CadConfig.spatial_hash switches to the grid kernel.
SPATIAL_HASH_MIN_AGENTS = 64

# Upper bound on the (chunk, N, N) distance block the brute-force kernel builds.
_BRUTE_BLOCK = 1 << 22


@dataclass(frozen=True)
class CadConfig:
    """Resampling budget and collision semantics.

    ``collision_threshold == 0`` disables collisions entirely, since no
    distance is strictly below zero.
    """

    max_trials: int = 10
    collision_threshold: float = 0.1
    distance_mode: str = "3d"
    spatial_hash: bool = False

    def __post_init__(self) -> None:
        if self.max_trials < 1:
            raise ValueError(f"max_trials must be >= 1, got {self.max_trials}")
        if not (math.isfinite(self.collision_threshold) and self.collision_threshold >= 0):
            raise ValueError(f"collision_threshold must be finite and >= 0, got {self.collision_threshold}")
        if self.distance_mode not in DISTANCE_MODES:
            raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}, got {self.distance_mode!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CadConfig":
        unknown = set(d) - {"max_trials", "collision_threshold", "distance_mode", "spatial_hash"}
        if unknown:
            raise ValueError(f"unknown cad keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_trials": self.max_trials,
            "collision_threshold": self.collision_threshold,
            "distance_mode": self.distance_mode,
            "spatial_hash": self.spatial_hash,
        }


@dataclass(frozen=True)
class CollisionReport:
    """Outcome of a collision scan.

    ``witness`` is the lexicographically smallest ``(t, q, r)`` with
    ``q < r`` (agent ids) whose centers are closer than the threshold at
    step ``t`` (0-based), or None.
    """

    collided: bool
    witness: Optional[tuple[int, int, int]] = None

    def __bool__(self) -> bool:
        return self.collided


@dataclass(frozen=True, eq=False)
class CadResult:
    selected_mode: dict[int, int]
    trajectories: dict[int, np.ndarray]
    trials_used: int
    collision_free: bool
    witness: Optional[tuple[int, int, int]] = None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CadResult):
            return NotImplemented
        return (
            self.selected_mode == other.selected_mode
            and self.trials_used == other.trials_used
            and self.collision_free == other.collision_free
            and self.witness == other.witness
            and self.trajectories.keys() == other.trajectories.keys()
            and all(np.array_equal(self.trajectories[k], other.trajectories[k]) for k in self.trajectories)
        )

    __hash__ = None  # type: ignore[assignment]


def _pair_distance(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Euclidean norm of ``a - b`` over the last axis (2 or 3 components)."""
    d = a - b
    sq = d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1]
    if d.shape[-1] == 3:
        sq = sq + d[..., 2] * d[..., 2]
    return np.sqrt(sq)


def _first_collision_brute(pos: np.ndarray, threshold: float) -> Optional[tuple[int, int, int]]:
    """All-pairs scan over (T, N, D) positions; returns (t, q, r) indices or None."""
    T, N, _ = pos.shape
    upper = np.triu(np.ones((N, N), dtype=bool), k=1)
    chunk = max(1, _BRUTE_BLOCK // max(1, N * N))
    for start in range(0, T, chunk):
        block = pos[start : start + chunk]
        dist = _pair_distance(block[:, :, None, :], block[:, None, :, :])
        hit = (dist < threshold) & upper
        flat = np.flatnonzero(hit)
        if flat.size:
            t, q, r = np.unravel_index(flat[0], hit.shape)
            return int(t) + start, int(q), int(r)
    return None


_NEIGHBOR_OFFSETS = {
    dim: np.array(list(itertools.product((-1, 0, 1), repeat=dim)), dtype=np.int64) for dim in (2, 3)
}


def _cell_keys(cells: np.ndarray) -> np.ndarray:
    # Mixing hash; key collisions only add candidates, exact distances filter them.
    primes = np.array([73856093, 19349663, 83492791], dtype=np.int64)[: cells.shape[-1]]
    return np.bitwise_xor.reduce(cells * primes, axis=-1)


def _step_pairs_grid(points: np.ndarray, threshold: float) -> Optional[tuple[int, int]]:
    """Smallest colliding (q, r), q < r, among (N, D) points via a uniform grid of cell size threshold."""
    n, dim = points.shape
    # Slightly oversized cells keep every sub-threshold pair within one cell step despite rounding.
    cells = np.floor(points / (threshold * (1 + 1e-9))).astype(np.int64)
    keys = _cell_keys(cells)
    order = np.argsort(keys, kind="stable")
    sorted_keys = keys[order]

    best: Optional[tuple[int, int]] = None
    for offset in _NEIGHBOR_OFFSETS[dim]:
        nkeys = _cell_keys(cells + offset)
        lo = np.searchsorted(sorted_keys, nkeys, side="left")
        hi = np.searchsorted(sorted_keys, nkeys, side="right")
        counts = hi - lo
        total = int(counts.sum())
        if total == 0:
            continue
        q = np.repeat(np.arange(n), counts)
        starts = np.repeat(lo - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
        r = order[np.arange(total) + starts]
        keep = q < r
        q, r = q[keep], r[keep]
        if q.size == 0:
            continue
        hit = _pair_distance(points[q], points[r]) < threshold
        if not hit.any():
            continue
        q, r = q[hit], r[hit]
        i = np.lexsort((r, q))[0]
        cand = (int(q[i]), int(r[i]))
        if best is None or cand < best:
            best = cand
    return best


def _first_collision_grid(pos: np.ndarray, threshold: float) -> Optional[tuple[int, int, int]]:
    for t in range(pos.shape[0]):
        pair = _step_pairs_grid(pos[t], threshold)
        if pair is not None:
            return (t, *pair)
    return None


def _stack(trajectories: Mapping[int, np.ndarray]) -> tuple[list[int], np.ndarray]:
    ids = sorted(trajectories)
    arrays = [np.asarray(trajectories[i], dtype=np.float64) for i in ids]
    lengths = {a.shape for a in arrays}
    if len(lengths) > 1:
        raise ValueError(f"trajectories must share shape (T, 3); got {sorted(lengths)}")
    if arrays and (arrays[0].ndim != 2 or arrays[0].shape[1] != 3):
        raise ValueError(f"trajectories must have shape (T, 3), got {arrays[0].shape}")
    return ids, np.stack(arrays, axis=1) if arrays else np.zeros((0, 0, 3))


def first_collision(
    positions: np.ndarray,
    threshold: float,
    distance_mode: str = "3d",
    spatial_hash: bool = False,
) -> Optional[tuple[int, int, int]]:
    """Index-level kernel over a (T, N, 3) array; returns (t, q, r) with q < r or None."""
    if threshold <= 0 or positions.shape[1] < 2:
        return None
    pos = positions[..., :2] if distance_mode == "xy" else positions
    if spatial_hash:
        return _first_collision_grid(pos, threshold)
    return _first_collision_brute(pos, threshold)


def detect_collision(
    trajectories: Mapping[int, np.ndarray],
    threshold: float,
    distance_mode: str = "3d",
    spatial_hash: bool = False,
) -> CollisionReport:
    """Check a joint sample for any pair of agents closer than ``threshold``.

    Args:
        trajectories: agent id -> (T, 3) center positions; all the same T.
        threshold: strict distance bound in meters.
        distance_mode: "3d" for full Euclidean distance, "xy" to ignore z.
        spatial_hash: use the uniform-grid kernel instead of the all-pairs scan.

    Returns:
        A CollisionReport whose witness uses agent ids.

    Raises:
        ValueError: trajectories differ in length or are not (T, 3).
    """
    if distance_mode not in DISTANCE_MODES:
        raise ValueError(f"distance_mode must be one of {DISTANCE_MODES}")
    ids, pos = _stack(trajectories)
    hit = first_collision(pos, threshold, distance_mode, spatial_hash) if ids else None
    if hit is None:
        return CollisionReport(False)
    t, q, r = hit
    return CollisionReport(True, (t, ids[q], ids[r]))


class _ModeTable:
    """Padded per-agent mode stack and inverse-CDF table for fast joint draws."""

    def __init__(self, dists: Mapping[int, TrajectoryDistribution]):
        self.ids = sorted(dists)
        for i in self.ids:
            if not isinstance(dists[i], TrajectoryDistribution):
                raise ValidationError(f"agent {i}: not a TrajectoryDistribution", i, "distribution")
        horizons = {dists[i].horizon for i in self.ids}
        if len(horizons) > 1:
            raise ValidationError(f"distributions disagree on horizon: {sorted(horizons)}", rule="horizon")
        n = len(self.ids)
        k_max = max((dists[i].num_modes for i in self.ids), default=1)
        T = horizons.pop() if horizons else 0
        self.dists = dists
        self.modes = np.zeros((n, k_max, T, 3))
        self.cdf = np.ones((n, k_max))
        self.last = np.empty(n, dtype=np.int64)
        for a, i in enumerate(self.ids):
            d = dists[i]
            self.modes[a, : d.num_modes] = d.modes
            self.cdf[a, : d.num_modes] = np.cumsum(d.probs)
            # The last real mode absorbs any cumsum shortfall below 1.
            self.cdf[a, d.num_modes - 1 :] = np.inf
            self.last[a] = np.flatnonzero(d.probs)[-1]
        self.rows = np.arange(n)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        """One mode index per agent, one uniform each, ascending agent id."""
        u = rng.random(len(self.ids))
        return np.minimum((u[:, None] >= self.cdf).sum(axis=1), self.last)

    def trajectories(self, choice: np.ndarray) -> dict[int, np.ndarray]:
        return {i: self.dists[i].modes[c] for i, c in zip(self.ids, choice)}


def sample_modes(
    dists: Mapping[int, TrajectoryDistribution], rng: np.random.Generator
) -> tuple[dict[int, int], dict[int, np.ndarray]]:
    """Independent single draw per agent, no collision check."""
    if not dists:
        return {}, {}
    table = _ModeTable(dists)
    choice = table.draw(rng)
    return {i: int(c) for i, c in zip(table.ids, choice)}, table.trajectories(choice)


def cad_resample(
    dists: Mapping[int, TrajectoryDistribution],
    config: CadConfig,
    rng: np.random.Generator,
) -> CadResult:
    """Collision avoidance detour resampling over one object set.

    Each trial draws one uniform per agent, in ascending agent-id order, and
    maps it through that agent's cumulative probabilities. All agents are
    redrawn after a collision.

    Raises:
        ValueError: ``dists`` is empty.
        ValidationError: a distribution is malformed or horizons disagree.
    """
    if not dists:
        raise ValueError("cad_resample needs at least one agent")
    table = _ModeTable(dists)
    use_hash = config.spatial_hash and len(table.ids) > SPATIAL_HASH_MIN_AGENTS

    for trial in range(1, config.max_trials + 1):
        choice = table.draw(rng)
        sample = table.modes[table.rows, choice]  # (N, T, 3)
        hit = first_collision(
            sample.transpose(1, 0, 2), config.collision_threshold, config.distance_mode, use_hash
        )
        if hit is None or trial == config.max_trials:
            ids = table.ids
            return CadResult(
                selected_mode={i: int(c) for i, c in zip(ids, choice)},
                trajectories=table.trajectories(choice),
                trials_used=trial,
                collision_free=hit is None,
                witness=None if hit is None else (hit[0], ids[hit[1]], ids[hit[2]]),
            )
    raise AssertionError("unreachable")  # pragma: no cover
