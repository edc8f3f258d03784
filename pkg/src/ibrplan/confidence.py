"""Per-agent reliability estimation via recursive Bayes.

Each non-ego agent carries a posterior for a binary hypothesis: the
re-weighted trajectory distribution explains the agent's observed motion
better than the raw predictor. Both candidate distributions are reduced to
their most likely trajectory, and the observed pose is scored under an
isotropic Gaussian around each representative. The posterior feeds the
weight update as the confidence factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

from .geometry import Pose
from .trajectory import Trajectory

__all__ = ["ConfidenceState", "POSTERIOR_CLAMP", "likelihood", "bayes_update", "confidence"]

# Keeps the recursion responsive: a posterior pinned at exactly 0 or 1 could
# never move again.
POSTERIOR_CLAMP = 1e-3


@dataclass(frozen=True)
class ConfidenceState:
    """Posterior plus the representatives committed at the previous cycle."""

    posterior: float = 0.5
    sigma: float = 0.5
    prior0: float = 0.5
    biber_rep: Optional[Trajectory] = None
    pred_rep: Optional[Trajectory] = None
    underflow: bool = False

    def __post_init__(self) -> None:
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if not (0.0 < self.prior0 < 1.0):
            raise ValueError("prior must lie strictly inside (0, 1)")
        clamped = min(max(self.posterior, POSTERIOR_CLAMP), 1.0 - POSTERIOR_CLAMP)
        object.__setattr__(self, "posterior", clamped)

    def with_representatives(
        self, biber_rep: Trajectory, pred_rep: Trajectory
    ) -> "ConfidenceState":
        return replace(self, biber_rep=biber_rep, pred_rep=pred_rep)


def likelihood(obs: Pose, rep: Trajectory, t: float, sigma: float) -> float:
    """Isotropic 2D Gaussian density of the observed position around the
    representative trajectory's position at time t."""
    if sigma <= 0.0:
        raise ValueError("sigma must be positive")
    rx, ry = rep.position_at(t)
    d_sq = (obs.x - rx) ** 2 + (obs.y - ry) ** 2
    return math.exp(-d_sq / (2.0 * sigma * sigma)) / (2.0 * math.pi * sigma * sigma)


def bayes_update(state: ConfidenceState, obs: Pose, t: float) -> ConfidenceState:
    """One recursive posterior update from an observed pose.

    Requires representatives committed by a previous planning cycle. If both
    likelihoods underflow to zero the posterior is left unchanged and the
    underflow flag is set.
    """
    if state.biber_rep is None or state.pred_rep is None:
        raise ValueError("no representatives committed yet")
    l_b = likelihood(obs, state.biber_rep, t, state.sigma)
    l_p = likelihood(obs, state.pred_rep, t, state.sigma)
    p = state.posterior
    denominator = l_b * p + l_p * (1.0 - p)
    if denominator == 0.0:
        return replace(state, underflow=True)
    return replace(state, posterior=l_b * p / denominator, underflow=False)


def confidence(state: ConfidenceState) -> float:
    """The confidence factor consumed by the weight update."""
    return state.posterior
