"""Velocity-based heading estimation and pose assembly."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Steps with a smaller xy displacement (m) keep the previous heading.
MIN_DISPLACEMENT = 1e-6


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=np.float64) + math.pi, 2 * math.pi) - math.pi
    w = np.where(w <= -math.pi, w + 2 * math.pi, w)
    return w if np.ndim(a) else float(w)


def estimate_headings(positions: np.ndarray, h0: float, origin: Sequence[float]) -> np.ndarray:
    """Headings from consecutive center positions.

    ``h[t] = atan2(y[t] - y[t-1], x[t] - x[t-1])``, with the first step
    differenced against ``origin`` (the last observed position). Where the xy
    displacement is below MIN_DISPLACEMENT the previous heading is carried
    forward, starting from ``h0``.

    Args:
        positions: (T, 2) or (T, 3) predicted positions; only x and y are used.
        h0: heading at the last observed step, radians.
        origin: last observed position; only x and y are used.

    Returns:
        (T,) headings in (-pi, pi].
    """
    pos = np.asarray(positions, dtype=np.float64)
    if pos.ndim != 2 or pos.shape[0] < 1 or pos.shape[1] < 2:
        raise ValueError(f"positions must have shape (T, 2|3) with T >= 1, got {pos.shape}")
    start = np.asarray(origin, dtype=np.float64)[:2]
    if not (np.all(np.isfinite(pos[:, :2])) and np.all(np.isfinite(start)) and math.isfinite(h0)):
        raise ValueError("estimate_headings needs finite positions, origin and h0")

    xy = np.vstack([start[None], pos[:, :2]])
    dx = np.diff(xy[:, 0])
    dy = np.diff(xy[:, 1])
    moving = np.hypot(dx, dy) >= MIN_DISPLACEMENT
    raw = np.arctan2(dy, dx)
    # atan2 yields -pi for (negative, -0.0); the range is half-open.
    raw = np.where(raw == -math.pi, math.pi, raw)

    h_init = h0 if -math.pi < h0 <= math.pi else wrap_angle(h0)
    # Forward-fill: index of the latest moving step at or before t, 0 meaning h0.
    src = np.where(moving, np.arange(1, len(raw) + 1), 0)
    np.maximum.accumulate(src, out=src)
    table = np.concatenate([[h_init], raw])
    return table[src]


@dataclass(frozen=True, eq=False)
class PoseTrajectory:
    """Predicted centers and headings over the horizon."""

    positions: np.ndarray
    headings: np.ndarray

    def __post_init__(self) -> None:
        pos = np.array(self.positions, dtype=np.float64)
        hdg = np.array(self.headings, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise ValueError(f"positions must be (T, 3), got {pos.shape}")
        if hdg.shape != (pos.shape[0],):
            raise ValueError(f"headings must be ({pos.shape[0]},), got {hdg.shape}")
        if not np.all(np.isfinite(hdg)) or np.any(hdg <= -math.pi) or np.any(hdg > math.pi):
            raise ValueError("headings must be finite and within (-pi, pi]")
        pos.setflags(write=False)
        hdg.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "headings", hdg)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseTrajectory):
            return NotImplemented
        return np.array_equal(self.positions, other.positions) and np.array_equal(self.headings, other.headings)

    __hash__ = None  # type: ignore[assignment]

    @property
    def horizon(self) -> int:
        return self.positions.shape[0]


def make_pose_trajectory(positions: np.ndarray, h0: float, origin: Sequence[float]) -> PoseTrajectory:
    return PoseTrajectory(np.asarray(positions, dtype=np.float64), estimate_headings(positions, h0, origin))
