"""Longitudinal car-following law used for proposals and reactive agents.

The acceleration law is a(v, s) = a_max * (1 - (v / v_target)^delta -
(s_margin / s)^2) with a constant safety margin s_margin. Rollouts
integrate it with explicit Euler at the simulation step and clamp speed
at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

__all__ = ["IdmParams", "LongitudinalProfile", "idm_accel", "idm_rollout"]


@dataclass(frozen=True)
class IdmParams:
    """Parameters of the car-following acceleration law."""

    v_target: float
    a_max: float = 1.5
    s_star: float = 6.0
    delta: float = 4.0

    def __post_init__(self) -> None:
        if self.v_target < 0.0:
            raise ValueError("v_target must be >= 0")
        if self.a_max <= 0.0 or self.s_star <= 0.0 or self.delta <= 0.0:
            raise ValueError("a_max, s_star and delta must be positive")


def idm_accel(params: IdmParams, v: float, s: float) -> float:
    """Longitudinal acceleration for speed v and bumper gap s.

    s may be math.inf to mean no leader. A zero target speed saturates the
    free-flow term so the vehicle only ever brakes.
    """
    if v < 0.0:
        raise ValueError("speed must be >= 0")
    if s <= 0.0:
        raise ValueError("gap must be positive")
    if params.v_target == 0.0:
        free = 1.0
    else:
        free = (v / params.v_target) ** params.delta
    interaction = 0.0 if math.isinf(s) else (params.s_star / s) ** 2
    return params.a_max * (1.0 - free - interaction)


class LongitudinalProfile(NamedTuple):
    """Positions and speeds along a path, sampled every dt from t=0."""

    positions: np.ndarray
    speeds: np.ndarray


def idm_rollout(
    params: IdmParams,
    v0: float,
    leader_gaps: Optional[Callable[[float], float]],
    horizon: float,
    dt: float,
) -> LongitudinalProfile:
    """Integrate the acceleration law over a horizon with explicit Euler.

    leader_gaps(t) is the leader's bumper position ahead of the start point
    at time t (None for no leader); the gap fed to the law is that value
    minus the distance already travelled. Speed is clamped at zero after
    every step, so position never decreases.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    steps = horizon / dt
    n = int(round(steps))
    if n < 1 or abs(steps - n) > 1e-6:
        raise ValueError("horizon must be a positive multiple of dt")
    positions = np.empty(n + 1)
    speeds = np.empty(n + 1)
    x = 0.0
    v = float(v0)
    positions[0] = x
    speeds[0] = v
    for k in range(n):
        if leader_gaps is None:
            gap = math.inf
        else:
            gap = leader_gaps(k * dt) - x
        accel = idm_accel(params, v, gap)
        x += v * dt
        v = max(0.0, v + accel * dt)
        positions[k + 1] = x
        speeds[k + 1] = v
    return LongitudinalProfile(positions=positions, speeds=speeds)
