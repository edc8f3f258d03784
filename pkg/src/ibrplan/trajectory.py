"""Fixed-rate trajectories and weighted trajectory bundles.

A trajectory is a uniformly sampled sequence of planar states. A weighted
bundle is one agent's discrete strategy set: candidate trajectories, the
multiplicative weights accumulated by re-weighting, and the base
probabilities the bundle started from.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np

from .geometry import Footprint, Pose, normalize_angle

__all__ = [
    "Trajectory",
    "WeightedBundle",
    "EntropyTrace",
    "resample",
    "current_distribution",
    "most_likely",
    "most_likely_index",
    "shannon_entropy",
    "relative_entropy_trace",
]

_PROB_TOL = 1e-9


def _as_locked_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled planar states (x, y, heading, speed) at rate 1/dt."""

    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self) -> None:
        for name in ("x", "y", "heading", "speed"):
            object.__setattr__(self, name, _as_locked_array(getattr(self, name)))
        n = len(self.x)
        if n < 2:
            raise ValueError("Trajectory needs at least 2 states")
        if not (len(self.y) == len(self.heading) == len(self.speed) == n):
            raise ValueError("Trajectory state arrays must have equal length")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("Trajectory dt must be positive and finite")
        for name in ("x", "y", "heading", "speed"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ValueError(f"Trajectory {name} contains non-finite values")

    def __len__(self) -> int:
        return len(self.x)

    @property
    def duration(self) -> float:
        return self.dt * (len(self) - 1)

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) * self.dt

    def pose(self, index: int) -> Pose:
        return Pose(float(self.x[index]), float(self.y[index]), float(self.heading[index]))

    def state(self, index: int) -> tuple[Pose, float]:
        return self.pose(index), float(self.speed[index])

    def position_at(self, t: float) -> tuple[float, float]:
        """Linearly interpolated position at absolute time t.

        t must lie within [t0, t0 + duration] up to a small tolerance.
        """
        rel = t - self.t0
        if rel < -1e-9 or rel > self.duration + 1e-9:
            raise ValueError(f"time {t} outside trajectory horizon [{self.t0}, {self.t0 + self.duration}]")
        u = min(max(rel / self.dt, 0.0), float(len(self) - 1))
        i = min(int(u), len(self) - 2)
        frac = u - i
        return (
            float(self.x[i] + frac * (self.x[i + 1] - self.x[i])),
            float(self.y[i] + frac * (self.y[i + 1] - self.y[i])),
        )


def _normalize_angles(values: np.ndarray) -> np.ndarray:
    wrapped = (values + math.pi) % (2.0 * math.pi) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped)


def resample(traj: Trajectory, target_dt: float) -> Trajectory:
    """Resample a trajectory to a new rate by linear interpolation.

    x, y and speed interpolate linearly; heading interpolates along the
    shortest arc. Both endpoints are preserved exactly when the span is a
    multiple of target_dt.
    """
    if target_dt <= 0.0:
        raise ValueError("target_dt must be positive")
    if target_dt == traj.dt:
        return traj
    span = traj.duration
    n_steps = int(math.floor(span / target_dt + 1e-9))
    rel_src = np.arange(len(traj)) * traj.dt
    rel_new = np.arange(n_steps + 1) * target_dt
    x = np.interp(rel_new, rel_src, traj.x)
    y = np.interp(rel_new, rel_src, traj.y)
    speed = np.interp(rel_new, rel_src, traj.speed)
    heading = _normalize_angles(np.interp(rel_new, rel_src, np.unwrap(traj.heading)))
    if abs(rel_new[-1] - span) <= 1e-9:
        x[-1] = traj.x[-1]
        y[-1] = traj.y[-1]
        speed[-1] = traj.speed[-1]
        heading[-1] = traj.heading[-1]
    return Trajectory(x=x, y=y, heading=heading, speed=speed, dt=target_dt, t0=traj.t0)


@dataclass(frozen=True)
class WeightedBundle:
    """One agent's strategy distribution over a fixed trajectory set."""

    trajectories: tuple[Trajectory, ...]
    weights: np.ndarray
    base_probs: np.ndarray
    footprint: Footprint
    agent_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        object.__setattr__(self, "weights", _as_locked_array(self.weights))
        object.__setattr__(self, "base_probs", _as_locked_array(self.base_probs))
        m = len(self.trajectories)
        if m < 1:
            raise ValueError("WeightedBundle needs at least one trajectory")
        if len(self.weights) != m or len(self.base_probs) != m:
            raise ValueError("weights and base_probs must match the trajectory count")
        if not np.all(self.weights > 0.0):
            raise ValueError("weights must be strictly positive")
        if np.any(self.base_probs < 0.0) or abs(float(self.base_probs.sum()) - 1.0) > _PROB_TOL:
            raise ValueError("base_probs must be non-negative and sum to 1")

    @property
    def size(self) -> int:
        return len(self.trajectories)

    def with_weights(self, weights) -> "WeightedBundle":
        return replace(self, weights=weights)

    @classmethod
    def from_trajectories(
        cls,
        trajectories: Sequence[Trajectory],
        footprint: Footprint,
        agent_id: str,
        base_probs=None,
    ) -> "WeightedBundle":
        m = len(trajectories)
        if base_probs is None:
            base_probs = np.full(m, 1.0 / m)
        return cls(
            trajectories=tuple(trajectories),
            weights=np.ones(m),
            base_probs=base_probs,
            footprint=footprint,
            agent_id=agent_id,
        )


def current_distribution(bundle: WeightedBundle) -> np.ndarray:
    """Probability over the bundle's trajectories: weight * base, renormalized."""
    raw = bundle.weights * bundle.base_probs
    total = float(raw.sum())
    if total <= 0.0:
        raise ValueError("all trajectory probabilities vanished (weights * base_probs is zero)")
    return raw / total


def most_likely_index(bundle: WeightedBundle) -> int:
    """Index of the most probable trajectory; ties break to the lowest index."""
    return int(np.argmax(current_distribution(bundle)))


def most_likely(bundle: WeightedBundle) -> Trajectory:
    """The most probable trajectory; ties break to the lowest index."""
    return bundle.trajectories[most_likely_index(bundle)]


def shannon_entropy(probs) -> float:
    """Shannon entropy in nats; zero-probability entries contribute nothing."""
    p = np.asarray(probs, dtype=np.float64)
    positive = p[p > 0.0]
    return float(-(positive * np.log(positive)).sum())


class EntropyTrace(NamedTuple):
    """Entropy per distribution, scaled by the first entry unless degenerate."""

    values: np.ndarray
    degenerate_base: bool


def relative_entropy_trace(history: Sequence[np.ndarray]) -> EntropyTrace:
    """Entropy of each distribution divided by the entropy of the first.

    If the first distribution already has zero entropy the absolute
    entropies are returned and the degenerate flag is set.
    """
    if len(history) == 0:
        raise ValueError("history must be non-empty")
    size = len(history[0])
    for dist in history:
        if len(dist) != size:
            raise ValueError("all distributions in a history must have equal size")
    entropies = np.array([shannon_entropy(dist) for dist in history])
    base = float(entropies[0])
    if base <= 0.0:
        return EntropyTrace(entropies, True)
    return EntropyTrace(entropies / base, False)
