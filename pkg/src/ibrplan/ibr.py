"""Iterative best response over fixed trajectory sets.

Each agent holds a weighted bundle of candidate trajectories. One sweep
updates every agent in order: the agent's per-trajectory reward is an
interaction penalty against the other agents' current weights plus, for the
ego only, progress and comfort terms; weights then multiply by
exp(confidence * reward). Agents updated later in a sweep see the fresh
weights of agents updated earlier (Gauss-Seidel), and all interaction
penalties are precomputed into a table before iterating.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .geometry import Footprint, box_corners, corners_clearance, corners_collide
from .trajectory import Trajectory, WeightedBundle, current_distribution, most_likely_index

__all__ = [
    "RewardWeights",
    "InteractionTable",
    "GameState",
    "NashCertificate",
    "COMFORT_ACCEL_LIMIT",
    "COMFORT_JERK_LIMIT",
    "EXP_ARG_LIMIT",
    "pair_score",
    "progress_reward",
    "comfort_reward",
    "build_interaction_table",
    "total_reward",
    "agent_rewards",
    "ibr_sweep",
    "run_ibr",
    "nash_oracle",
    "make_update_order",
]

COMFORT_ACCEL_LIMIT = 2.4  # m/s^2
COMFORT_JERK_LIMIT = 4.13  # m/s^3

# Guard on the weight-update exponent; sane configurations stay far below it.
EXP_ARG_LIMIT = 50.0

ORACLE_MAX_PROFILES = 10_000


@dataclass(frozen=True)
class RewardWeights:
    """Penalties and weights of the per-trajectory reward."""

    u_c: float = -1.5  # collision penalty
    u_d: float = -1.5  # proximity penalty
    proximity_threshold: float = 1.0  # edge clearance below this is "too close"
    alpha: float = 0.19  # longitudinal progress weight
    beta: float = 0.1  # lateral progress weight
    w_p: float = 0.9  # progress term weight
    w_c: float = 0.15  # comfort term weight

    def __post_init__(self) -> None:
        if not (self.u_c <= self.u_d <= 0.0):
            raise ValueError("penalties must satisfy u_c <= u_d <= 0")
        if self.proximity_threshold <= 0.0:
            raise ValueError("proximity_threshold must be positive")
        if min(self.alpha, self.beta, self.w_p, self.w_c) < 0.0:
            raise ValueError("alpha, beta, w_p and w_c must be >= 0")


def _check_aligned(ti: Trajectory, tj: Trajectory) -> None:
    if abs(ti.dt - tj.dt) > 1e-12 or len(ti) != len(tj):
        raise ValueError("trajectories must share dt and length")


def pair_score(
    ti: Trajectory, fi: Footprint, tj: Trajectory, fj: Footprint, cfg: RewardWeights
) -> float:
    """Interaction penalty between two time-aligned trajectories.

    u_c if the footprints overlap at any matched timestep, else u_d if the
    edge clearance drops below the proximity threshold anywhere, else 0.
    """
    _check_aligned(ti, tj)
    # A pair can only interact at steps where the center distance is within
    # both circumradii plus the proximity threshold.
    dx = ti.x - tj.x
    dy = ti.y - tj.y
    reach = fi.circumradius + fj.circumradius + cfg.proximity_threshold
    candidates = np.flatnonzero(dx * dx + dy * dy <= reach * reach)
    if len(candidates) == 0:
        return 0.0
    hl_i, hw_i = 0.5 * fi.length, 0.5 * fi.width
    hl_j, hw_j = 0.5 * fj.length, 0.5 * fj.width
    too_close = False
    for k in candidates:
        ci = box_corners(float(ti.x[k]), float(ti.y[k]), float(ti.heading[k]), hl_i, hw_i)
        cj = box_corners(float(tj.x[k]), float(tj.y[k]), float(tj.heading[k]), hl_j, hw_j)
        if corners_collide(ci, cj):
            return cfg.u_c
        if not too_close and corners_clearance(ci, cj) < cfg.proximity_threshold:
            too_close = True
    return cfg.u_d if too_close else 0.0


def progress_reward(
    traj: Trajectory,
    bundle_trajectories: Sequence[Trajectory],
    cfg: RewardWeights,
    lateral_sign: int = 0,
) -> float:
    """Progress of one ego trajectory, normalized against the whole bundle.

    Longitudinal displacement is measured along the trajectory's initial
    heading; lateral displacement counts only toward the route's target side
    (lateral_sign +1 left, -1 right, 0 when no lane change is required).
    Each ratio is clamped to [0, 1] and a zero-max denominator contributes 0.
    """

    def displacements(t: Trajectory) -> tuple[float, float]:
        ux = math.cos(float(t.heading[0]))
        uy = math.sin(float(t.heading[0]))
        dx = float(t.x[-1] - t.x[0])
        dy = float(t.y[-1] - t.y[0])
        lon = dx * ux + dy * uy
        lat = lateral_sign * (-dx * uy + dy * ux)
        return lon, lat

    lons, lats = zip(*(displacements(t) for t in bundle_trajectories))
    lon, lat = displacements(traj)
    reward = 0.0
    max_lon = max(lons)
    if max_lon > 1e-9:
        reward += cfg.alpha * min(max(lon / max_lon, 0.0), 1.0)
    max_lat = max(lats)
    if max_lat > 1e-9:
        reward += cfg.beta * min(max(lat / max_lat, 0.0), 1.0)
    return reward


def comfort_reward(
    traj: Trajectory,
    accel_limit: float = COMFORT_ACCEL_LIMIT,
    jerk_limit: float = COMFORT_JERK_LIMIT,
) -> int:
    """1 iff finite-difference longitudinal accel and jerk stay within limits."""
    if len(traj) < 3:
        raise ValueError("comfort needs at least 3 states")
    accel = np.diff(traj.speed) / traj.dt
    jerk = np.diff(accel) / traj.dt
    ok = np.max(np.abs(accel)) <= accel_limit and np.max(np.abs(jerk)) <= jerk_limit
    return int(ok)


@dataclass(frozen=True)
class InteractionTable:
    """Precomputed pairwise penalties plus the ego's progress and comfort.

    psi maps an agent pair (i, j) with i < j to an (M_i, M_j) penalty
    matrix. Rewards during the sweep only read this table, never geometry.
    """

    psi: dict[tuple[int, int], np.ndarray]
    ego_progress: np.ndarray
    ego_comfort: np.ndarray

    def block(self, i: int, j: int) -> np.ndarray:
        """Penalty matrix of shape (M_i, M_j) for any ordered pair."""
        if i < j:
            return self.psi[(i, j)]
        return self.psi[(j, i)].T


def build_interaction_table(
    bundles: Sequence[WeightedBundle],
    cfg: RewardWeights,
    lateral_sign: int = 0,
    accel_limit: float = COMFORT_ACCEL_LIMIT,
    jerk_limit: float = COMFORT_JERK_LIMIT,
) -> InteractionTable:
    """Score every cross-agent trajectory pair once, before iterating."""
    psi: dict[tuple[int, int], np.ndarray] = {}
    for i, j in itertools.combinations(range(len(bundles)), 2):
        bi, bj = bundles[i], bundles[j]
        matrix = np.empty((bi.size, bj.size))
        for l, ti in enumerate(bi.trajectories):
            for m, tj in enumerate(bj.trajectories):
                matrix[l, m] = pair_score(ti, bi.footprint, tj, bj.footprint, cfg)
        psi[(i, j)] = matrix
    ego = bundles[0]
    progress = np.array(
        [progress_reward(t, ego.trajectories, cfg, lateral_sign) for t in ego.trajectories]
    )
    comfort = np.array(
        [comfort_reward(t, accel_limit, jerk_limit) for t in ego.trajectories], dtype=float
    )
    return InteractionTable(psi=psi, ego_progress=progress, ego_comfort=comfort)


def make_update_order(n_agents: int, mode: str = "ego-first") -> tuple[int, ...]:
    """Sweep order over agent indices; the ego sits at index 0."""
    if mode == "ego-first":
        return tuple(range(n_agents))
    if mode == "ego-last":
        return tuple(range(1, n_agents)) + (0,)
    raise ValueError(f"unknown update order {mode!r}")


@dataclass(frozen=True)
class GameState:
    """Everything one sweep needs: bundles, penalty table, confidences."""

    bundles: tuple[WeightedBundle, ...]
    table: InteractionTable
    reward_cfg: RewardWeights
    confidences: np.ndarray
    iteration: int = 0
    update_order: tuple[int, ...] = ()
    exp_clamped: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "bundles", tuple(self.bundles))
        conf = np.asarray(self.confidences, dtype=np.float64).copy()
        conf.setflags(write=False)
        object.__setattr__(self, "confidences", conf)
        if len(conf) != len(self.bundles):
            raise ValueError("one confidence per agent required")
        if not self.update_order:
            object.__setattr__(self, "update_order", tuple(range(len(self.bundles))))
        if sorted(self.update_order) != list(range(len(self.bundles))):
            raise ValueError("update_order must be a permutation of the agent indices")


def agent_rewards(
    agent: int, state: GameState, sweep_weights: Sequence[np.ndarray]
) -> np.ndarray:
    """Reward of every trajectory of one agent against the given weights.

    The interaction term averages each opponent's penalty column under that
    opponent's weights (weights are kept at mean one between sweeps, so this
    is a weighted mean). Progress and comfort apply to the ego only.
    """
    cfg = state.reward_cfg
    rewards = np.zeros(state.bundles[agent].size)
    for j, w in enumerate(sweep_weights):
        if j == agent:
            continue
        rewards += state.table.block(agent, j) @ w / len(w)
    if agent == 0:
        rewards = rewards + cfg.w_p * state.table.ego_progress + cfg.w_c * state.table.ego_comfort
    return rewards


def total_reward(
    agent: int, traj: int, state: GameState, sweep_weights: Sequence[np.ndarray]
) -> float:
    """Reward of one trajectory of one agent under the given sweep weights."""
    return float(agent_rewards(agent, state, sweep_weights)[traj])


def ibr_sweep(state: GameState) -> GameState:
    """One Gauss-Seidel pass: update every agent's weights in order.

    Later agents in the order see the fresh weights of earlier ones. After
    the pass each bundle's weights are renormalized to mean one, which
    leaves the induced distributions unchanged.
    """
    weights = [b.weights.copy() for b in state.bundles]
    clamped = state.exp_clamped
    for i in state.update_order:
        rewards = agent_rewards(i, state, weights)
        args = state.confidences[i] * rewards
        if np.max(np.abs(args)) > EXP_ARG_LIMIT:
            clamped = True
            args = np.clip(args, -EXP_ARG_LIMIT, EXP_ARG_LIMIT)
        weights[i] = weights[i] * np.exp(args)
    bundles = tuple(
        b.with_weights(w / w.mean()) for b, w in zip(state.bundles, weights)
    )
    return replace(state, bundles=bundles, iteration=state.iteration + 1, exp_clamped=clamped)


def run_ibr(
    state: GameState, iterations: int
) -> tuple[GameState, list[list[np.ndarray]]]:
    """Apply a fixed number of sweeps, recording every agent's distribution
    after each one (including the initial distributions)."""
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    history = [[current_distribution(b) for b in state.bundles]]
    for _ in range(iterations):
        state = ibr_sweep(state)
        history.append([current_distribution(b) for b in state.bundles])
    return state, history


@dataclass(frozen=True)
class NashCertificate:
    """Unilateral-deviation audit of the profile the bundles concentrate on."""

    profile: tuple[int, ...]
    is_equilibrium: bool
    violation: Optional[tuple[int, int, float]]  # (agent, better trajectory, gain)
    equilibria: tuple[tuple[int, ...], ...]


def _pure_payoff(
    agent: int, profile: Sequence[int], table: InteractionTable, cfg: RewardWeights
) -> float:
    value = 0.0
    for j in range(len(profile)):
        if j == agent:
            continue
        value += float(table.block(agent, j)[profile[agent], profile[j]])
    if agent == 0:
        value += cfg.w_p * float(table.ego_progress[profile[0]])
        value += cfg.w_c * float(table.ego_comfort[profile[0]])
    return value


def nash_oracle(
    bundles: Sequence[WeightedBundle],
    table: InteractionTable,
    cfg: RewardWeights,
    eps: float = 1e-9,
) -> NashCertificate:
    """Exhaustive pure-strategy audit for small games.

    Enumerates every pure profile, collects those where no agent can gain
    more than eps by unilateral deviation, and checks the profile each
    bundle currently concentrates on (its most likely trajectory per agent).
    """
    sizes = [b.size for b in bundles]
    total = math.prod(sizes)
    if total > ORACLE_MAX_PROFILES:
        raise ValueError(f"game too large for the oracle: {total} > {ORACLE_MAX_PROFILES} profiles")

    def best_gain(profile: tuple[int, ...]) -> Optional[tuple[int, int, float]]:
        for i, size in enumerate(sizes):
            base = _pure_payoff(i, profile, table, cfg)
            for alt in range(size):
                if alt == profile[i]:
                    continue
                candidate = profile[:i] + (alt,) + profile[i + 1 :]
                gain = _pure_payoff(i, candidate, table, cfg) - base
                if gain > eps:
                    return (i, alt, gain)
        return None

    equilibria = tuple(
        profile
        for profile in itertools.product(*(range(s) for s in sizes))
        if best_gain(profile) is None
    )
    concentrated = tuple(most_likely_index(b) for b in bundles)
    violation = best_gain(concentrated)
    return NashCertificate(
        profile=concentrated,
        is_equilibrium=violation is None,
        violation=violation,
        equilibria=equilibria,
    )
