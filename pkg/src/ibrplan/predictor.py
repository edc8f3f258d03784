"""Pluggable per-agent motion predictors.

Two implementations ship with the library: a single-mode constant-velocity
extrapolation and a scripted multi-modal predictor whose maneuver set and
mode probabilities come from the scenario. The scripted predictor generates
modes on a coarse 2 Hz grid and upsamples them to the planning rate, the
same way a learned predictor running at a lower rate would be integrated.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .geometry import Footprint, Pose, normalize_angle
from .maps import LaneMap
from .trajectory import Trajectory, WeightedBundle, resample

__all__ = [
    "AgentObservation",
    "Predictor",
    "ConstantVelocityPredictor",
    "ScriptedPredictor",
    "Maneuver",
    "DEFAULT_SCRIPT",
    "cv_predict",
    "scripted_predict",
    "maneuver_rollout",
]

PREDICTION_HORIZON = 4.0
PREDICTION_DT = 0.1
COARSE_DT = 0.5
LANE_SHIFT_DURATION = 4.0

MANEUVER_KINDS = ("keep_speed", "brake", "accelerate", "lane_shift")


@dataclass(frozen=True)
class AgentObservation:
    """What the planner knows about one surrounding agent."""

    agent_id: str
    footprint: Footprint
    history: Trajectory
    pose: Pose
    speed: float

    def __post_init__(self) -> None:
        hx, hy = float(self.history.x[-1]), float(self.history.y[-1])
        if math.hypot(hx - self.pose.x, hy - self.pose.y) > 1e-6:
            raise ValueError("history must end at the current pose")


@dataclass(frozen=True)
class Maneuver:
    """One scripted motion hypothesis with its mode probability."""

    kind: str
    prob: float
    rate: float = 0.0
    lateral: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in MANEUVER_KINDS:
            raise ValueError(f"unknown maneuver kind {self.kind!r}")
        if self.prob < 0.0:
            raise ValueError("maneuver probability must be >= 0")
        if self.kind in ("brake", "accelerate") and self.rate <= 0.0:
            raise ValueError(f"{self.kind} needs a positive rate")


DEFAULT_SCRIPT: tuple[Maneuver, ...] = (
    Maneuver("keep_speed", 0.35),
    Maneuver("brake", 0.25, rate=1.5),
    Maneuver("accelerate", 0.2, rate=1.0),
    Maneuver("brake", 0.1, rate=3.0),
    Maneuver("lane_shift", 0.1, lateral=1.75),
)


def _headings_from_positions(x: np.ndarray, y: np.ndarray, fallback: float) -> np.ndarray:
    headings = np.empty(len(x))
    previous = fallback
    for k in range(len(x) - 1):
        dx = x[k + 1] - x[k]
        dy = y[k + 1] - y[k]
        if dx * dx + dy * dy > 1e-24:
            previous = math.atan2(dy, dx)
        headings[k] = previous
    headings[-1] = previous
    return headings


def _longitudinal_profile(kind: str, rate: float, v0: float, t: np.ndarray):
    """Closed-form distance and speed along the travel direction."""
    if kind in ("keep_speed", "lane_shift"):
        return v0 * t, np.full_like(t, v0)
    if kind == "accelerate":
        return v0 * t + 0.5 * rate * t**2, v0 + rate * t
    # brake: speed hits zero at t_stop and stays there
    t_stop = v0 / rate if rate > 0.0 else math.inf
    moving = t < t_stop
    dist = np.where(moving, v0 * t - 0.5 * rate * t**2, v0 * t_stop - 0.5 * rate * t_stop**2)
    speed = np.maximum(0.0, v0 - rate * t)
    return dist, speed


def maneuver_rollout(
    pose: Pose, speed: float, maneuver: Maneuver, horizon: float, dt: float
) -> Trajectory:
    """Kinematic rollout of one maneuver from a starting state.

    Longitudinal motion follows the travel direction at the maneuver's
    rate; a lane shift adds a smooth lateral blend that completes after
    LANE_SHIFT_DURATION seconds. Speed reports the longitudinal profile.
    """
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    dist, speeds = _longitudinal_profile(maneuver.kind, maneuver.rate, speed, t)
    if maneuver.kind == "lane_shift":
        u = np.clip(t / LANE_SHIFT_DURATION, 0.0, 1.0)
        lateral = maneuver.lateral * (3.0 * u**2 - 2.0 * u**3)
    else:
        lateral = np.zeros_like(t)
    ux, uy = math.cos(pose.heading), math.sin(pose.heading)
    x = pose.x + dist * ux - lateral * uy
    y = pose.y + dist * uy + lateral * ux
    heading = _headings_from_positions(x, y, pose.heading)
    return Trajectory(x=x, y=y, heading=heading, speed=speeds, dt=dt)


def cv_predict(
    obs: AgentObservation, horizon: float = PREDICTION_HORIZON, dt: float = PREDICTION_DT
) -> WeightedBundle:
    """Single-mode straight-line extrapolation at the current heading and speed."""
    n = int(round(horizon / dt))
    t = np.arange(n + 1) * dt
    x = obs.pose.x + obs.speed * math.cos(obs.pose.heading) * t
    y = obs.pose.y + obs.speed * math.sin(obs.pose.heading) * t
    traj = Trajectory(
        x=x,
        y=y,
        heading=np.full(n + 1, obs.pose.heading),
        speed=np.full(n + 1, obs.speed),
        dt=dt,
    )
    return WeightedBundle.from_trajectories([traj], obs.footprint, obs.agent_id)


def scripted_predict(
    obs: AgentObservation,
    script: Sequence[Maneuver],
    horizon: float = PREDICTION_HORIZON,
    coarse_dt: float = COARSE_DT,
    dt: float = PREDICTION_DT,
) -> WeightedBundle:
    """Multi-modal prediction from a maneuver script.

    Modes are rolled out on the coarse grid and upsampled to the planning
    rate; mode probabilities become the bundle's base distribution.
    """
    if not script:
        raise ValueError("script must contain at least one maneuver")
    probs = np.array([m.prob for m in script])
    if abs(float(probs.sum()) - 1.0) > 1e-9:
        raise ValueError("maneuver probabilities must sum to 1")
    modes = [
        resample(maneuver_rollout(obs.pose, obs.speed, m, horizon, coarse_dt), dt)
        for m in script
    ]
    return WeightedBundle.from_trajectories(modes, obs.footprint, obs.agent_id, base_probs=probs)


class Predictor(ABC):
    """Produces a strategy bundle for one observed agent."""

    @abstractmethod
    def predict(self, obs: AgentObservation, lanes: Optional[LaneMap] = None) -> WeightedBundle:
        raise NotImplementedError


class ConstantVelocityPredictor(Predictor):
    def __init__(self, horizon: float = PREDICTION_HORIZON, dt: float = PREDICTION_DT):
        self.horizon = horizon
        self.dt = dt

    def predict(self, obs: AgentObservation, lanes: Optional[LaneMap] = None) -> WeightedBundle:
        return cv_predict(obs, self.horizon, self.dt)


class ScriptedPredictor(Predictor):
    """Looks up a per-agent script, falling back to the default five modes."""

    def __init__(
        self,
        scripts: Optional[dict[str, tuple[Maneuver, ...]]] = None,
        horizon: float = PREDICTION_HORIZON,
        dt: float = PREDICTION_DT,
    ):
        self.scripts = dict(scripts or {})
        self.horizon = horizon
        self.dt = dt

    def predict(self, obs: AgentObservation, lanes: Optional[LaneMap] = None) -> WeightedBundle:
        script = self.scripts.get(obs.agent_id, DEFAULT_SCRIPT)
        return scripted_predict(obs, script, self.horizon, dt=self.dt)
