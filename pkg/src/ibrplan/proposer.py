"""Ego proposal generation: spline lateral paths crossed with car-following
longitudinal profiles.

Lateral motion is a cubic Hermite blend of the lateral offset in the target
lane's arc-length frame, with zero lateral velocity at both ends. Each path
is crossed with one longitudinal rollout per target-speed fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dynamics import IdmParams, idm_rollout
from .geometry import Footprint, Pose, normalize_angle
from .maps import Lane, LaneMap
from .trajectory import Trajectory, WeightedBundle

__all__ = [
    "ProposalConfig",
    "LateralPath",
    "ProposalError",
    "lateral_paths",
    "generate_proposals",
]

# Ego poses farther than this from every same-direction centerline count as
# off-road and produce no paths.
OFF_LANE_LATERAL_LIMIT = 3.0

_PATH_SAMPLE_STEP = 0.5
_PATH_MARGIN = 10.0


class ProposalError(RuntimeError):
    """Raised when no proposal can be generated for the current ego state."""


@dataclass(frozen=True)
class ProposalConfig:
    """Knobs of the proposal generator."""

    speed_fractions: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    lateral_offsets: tuple[float, ...] = (20.0, 30.0, 40.0)
    max_proposals: int = 128
    horizon: float = 4.0
    dt: float = 0.1
    a_max: float = 1.5
    s_star: float = 6.0
    delta: float = 4.0

    def __post_init__(self) -> None:
        if not self.speed_fractions or not self.lateral_offsets:
            raise ValueError("speed_fractions and lateral_offsets must be non-empty")
        if any(not (0.0 < f <= 1.0) for f in self.speed_fractions):
            raise ValueError("speed fractions must lie in (0, 1]")
        if any(off <= 0.0 for off in self.lateral_offsets):
            raise ValueError("lateral offsets must be positive")
        if self.max_proposals < 1:
            raise ValueError("max_proposals must be >= 1")
        if self.horizon <= 0.0 or self.dt <= 0.0:
            raise ValueError("horizon and dt must be positive")


@dataclass(frozen=True)
class LateralPath:
    """Arc-length parameterized polyline the ego can drive along."""

    points: np.ndarray
    target_lane_id: str
    kind: str  # "keep" or "change"
    _cum_s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64).copy()
        seg = np.diff(pts, axis=0)
        lengths = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(lengths <= 0.0):
            raise ValueError("path samples must be strictly advancing")
        pts.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(lengths)))
        cum.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_cum_s", cum)

    @property
    def length(self) -> float:
        return float(self._cum_s[-1])

    def _segment_index(self, s: float) -> int:
        if s <= 0.0:
            return 0
        if s >= self.length:
            return len(self.points) - 2
        return min(int(np.searchsorted(self._cum_s, s, side="right")) - 1, len(self.points) - 2)

    def point_at(self, s: float) -> tuple[float, float]:
        i = self._segment_index(s)
        ax, ay = self.points[i]
        bx, by = self.points[i + 1]
        t = (s - float(self._cum_s[i])) / float(self._cum_s[i + 1] - self._cum_s[i])
        return (float(ax + t * (bx - ax)), float(ay + t * (by - ay)))

    def heading_at(self, s: float) -> float:
        i = self._segment_index(s)
        ax, ay = self.points[i]
        bx, by = self.points[i + 1]
        return math.atan2(by - ay, bx - ax)

    def project_arc(self, x: float, y: float) -> float:
        """Arc length of the closest path point to (x, y)."""
        pts = self.points
        a = pts[:-1]
        d = pts[1:] - a
        seg_len_sq = np.einsum("ij,ij->i", d, d)
        rel = np.array([x, y]) - a
        t = np.clip(np.einsum("ij,ij->i", rel, d) / seg_len_sq, 0.0, 1.0)
        closest = a + t[:, None] * d
        diff = np.array([x, y]) - closest
        i = int(np.argmin(np.einsum("ij,ij->i", diff, diff)))
        return float(self._cum_s[i] + t[i] * math.sqrt(seg_len_sq[i]))

    def lateral_distance(self, x: float, y: float) -> float:
        """Unsigned lateral distance from (x, y) to the path."""
        s = self.project_arc(x, y)
        px, py = self.point_at(s)
        return math.hypot(x - px, y - py)


# Start slopes steeper than this are clamped before the tangent blows up.
_MAX_START_SLOPE_ANGLE = 0.6


def _hermite_offsets(u: np.ndarray, d0: float, m0: float, span: float) -> np.ndarray:
    """Cubic blend from offset d0 with initial slope m0 down to zero.

    The far end has zero offset and zero slope; the near end matches the
    ego's current lateral offset and lateral velocity, so replanning from a
    pose mid-maneuver continues the maneuver instead of restarting it.
    """
    u = np.clip(u, 0.0, 1.0)
    h00 = 2.0 * u**3 - 3.0 * u**2 + 1.0
    h10 = u**3 - 2.0 * u**2 + u
    return d0 * h00 + span * m0 * h10


def _path_onto_lane(
    ego: Pose, lane: Lane, merge_distance: float, total_length: float, kind: str
) -> LateralPath:
    """Sample a path that blends the ego's offset to a lane down to zero."""
    proj = lane.project(ego.x, ego.y)
    heading_err = normalize_angle(ego.heading - proj.heading)
    heading_err = min(max(heading_err, -_MAX_START_SLOPE_ANGLE), _MAX_START_SLOPE_ANGLE)
    slope = math.tan(heading_err)
    s_samples = np.arange(0.0, total_length + _PATH_SAMPLE_STEP, _PATH_SAMPLE_STEP)
    offsets = _hermite_offsets(s_samples / merge_distance, proj.lateral, slope, merge_distance)
    points = np.empty((len(s_samples), 2))
    for k, (ds, d) in enumerate(zip(s_samples, offsets)):
        s = proj.s + ds
        cx, cy = lane.point_at(s)
        heading = lane.heading_at(s)
        points[k, 0] = cx - d * math.sin(heading)
        points[k, 1] = cy + d * math.cos(heading)
    # The projection reconstruction is exact on straight segments; pin the
    # start point so every proposal starts exactly at the ego position.
    points[0] = (ego.x, ego.y)
    return LateralPath(points=points, target_lane_id=lane.lane_id, kind=kind)


def lateral_paths(ego: Pose, lanes: LaneMap, cfg: ProposalConfig) -> list[LateralPath]:
    """Candidate lateral paths: keep the current lane, plus one change path
    per same-direction neighbour lane and completion offset.

    Returns an empty list when the ego is off every same-direction lane.
    """
    try:
        current = lanes.nearest_lane(ego.x, ego.y, same_direction_only=True)
    except ValueError:
        return []
    proj = current.project(ego.x, ego.y)
    if abs(proj.lateral) > OFF_LANE_LATERAL_LIMIT:
        return []

    max_limit = max(lane.speed_limit for lane in lanes)
    total = cfg.horizon * max_limit + _PATH_MARGIN
    settle = min(cfg.lateral_offsets)
    paths = [_path_onto_lane(ego, current, settle, total, "keep")]
    for neighbour in lanes.adjacent_same_direction(current):
        for offset in cfg.lateral_offsets:
            paths.append(_path_onto_lane(ego, neighbour, offset, total, "change"))
    return paths


def _profile_to_trajectory(
    ego: Pose, path: LateralPath, positions: np.ndarray, speeds: np.ndarray, dt: float
) -> Trajectory:
    n = len(positions)
    x = np.empty(n)
    y = np.empty(n)
    heading = np.empty(n)
    for k in range(n):
        x[k], y[k] = path.point_at(float(positions[k]))
        heading[k] = path.heading_at(float(positions[k]))
    x[0], y[0] = ego.x, ego.y
    return Trajectory(x=x, y=y, heading=heading, speed=speeds.copy(), dt=dt)


LeaderLookup = Callable[[LateralPath], Optional[Callable[[float], float]]]


def generate_proposals(
    ego_state: tuple[Pose, float],
    footprint: Footprint,
    lanes: LaneMap,
    leader_for_path: Optional[LeaderLookup],
    cfg: ProposalConfig,
) -> WeightedBundle:
    """Build the ego's strategy bundle: one trajectory per path and speed
    fraction, uniformly weighted.

    leader_for_path maps a path to the gap function consumed by the
    longitudinal rollout (None for a free path). Duplicate trajectories are
    dropped keeping the lowest (path, fraction) index, and the bundle is
    truncated to max_proposals.
    """
    ego, speed = ego_state
    paths = lateral_paths(ego, lanes, cfg)
    if not paths:
        raise ProposalError("ego is off every same-direction lane; no proposals")

    proposals: list[Trajectory] = []
    seen: set[bytes] = set()
    for path in paths:
        lane = lanes.get(path.target_lane_id)
        gap_fn = leader_for_path(path) if leader_for_path is not None else None
        for fraction in cfg.speed_fractions:
            params = IdmParams(
                v_target=fraction * lane.speed_limit,
                a_max=cfg.a_max,
                s_star=cfg.s_star,
                delta=cfg.delta,
            )
            profile = idm_rollout(params, speed, gap_fn, cfg.horizon, cfg.dt)
            traj = _profile_to_trajectory(ego, path, profile.positions, profile.speeds, cfg.dt)
            key = np.round(np.concatenate([traj.x, traj.y, traj.speed]), 9).tobytes()
            if key in seen:
                continue
            seen.add(key)
            proposals.append(traj)
            if len(proposals) >= cfg.max_proposals:
                return WeightedBundle.from_trajectories(proposals, footprint, "ego")
    return WeightedBundle.from_trajectories(proposals, footprint, "ego")
