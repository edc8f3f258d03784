"""Lane centerlines and arc-length projection utilities."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional

import numpy as np

__all__ = ["Lane", "LaneMap", "LaneProjection"]


class LaneProjection(NamedTuple):
    """Projection of a point onto a centerline."""

    s: float
    lateral: float  # signed, positive to the left of the travel direction
    heading: float  # tangent heading at the projection


@dataclass(frozen=True)
class Lane:
    """A directed lane described by its centerline polyline."""

    lane_id: str
    centerline: np.ndarray
    speed_limit: float
    left: Optional[str] = None
    right: Optional[str] = None
    direction_sign: int = 1
    half_width: float = 1.75
    _cum_s: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        pts = np.asarray(self.centerline, dtype=np.float64).copy()
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError(f"lane {self.lane_id}: centerline needs >= 2 points of (x, y)")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len <= 0.0):
            raise ValueError(f"lane {self.lane_id}: consecutive centerline points must be distinct")
        if self.speed_limit <= 0.0:
            raise ValueError(f"lane {self.lane_id}: speed_limit must be positive")
        if self.direction_sign not in (1, -1):
            raise ValueError(f"lane {self.lane_id}: direction_sign must be +1 or -1")
        if self.half_width <= 0.0:
            raise ValueError(f"lane {self.lane_id}: half_width must be positive")
        pts.setflags(write=False)
        cum = np.concatenate(([0.0], np.cumsum(seg_len)))
        cum.setflags(write=False)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "_cum_s", cum)

    @property
    def length(self) -> float:
        return float(self._cum_s[-1])

    def project(self, x: float, y: float) -> LaneProjection:
        """Closest-point projection onto the centerline polyline."""
        pts = self.centerline
        a = pts[:-1]
        d = pts[1:] - a
        seg_len_sq = np.einsum("ij,ij->i", d, d)
        rel = np.array([x, y]) - a
        t = np.clip(np.einsum("ij,ij->i", rel, d) / seg_len_sq, 0.0, 1.0)
        closest = a + t[:, None] * d
        diff = np.array([x, y]) - closest
        dist_sq = np.einsum("ij,ij->i", diff, diff)
        i = int(np.argmin(dist_sq))
        seg_len = math.sqrt(seg_len_sq[i])
        ux, uy = d[i, 0] / seg_len, d[i, 1] / seg_len
        lateral = -uy * diff[i, 0] + ux * diff[i, 1]
        s = float(self._cum_s[i] + t[i] * seg_len)
        return LaneProjection(s=s, lateral=float(lateral), heading=math.atan2(uy, ux))

    def _segment_index(self, s: float) -> int:
        if s <= 0.0:
            return 0
        if s >= self.length:
            return len(self.centerline) - 2
        return min(int(np.searchsorted(self._cum_s, s, side="right")) - 1, len(self.centerline) - 2)

    def point_at(self, s: float) -> tuple[float, float]:
        """Point at arc length s; extrapolates along the end tangents."""
        i = self._segment_index(s)
        ax, ay = self.centerline[i]
        bx, by = self.centerline[i + 1]
        seg_len = float(self._cum_s[i + 1] - self._cum_s[i])
        t = (s - float(self._cum_s[i])) / seg_len
        return (float(ax + t * (bx - ax)), float(ay + t * (by - ay)))

    def heading_at(self, s: float) -> float:
        i = self._segment_index(s)
        ax, ay = self.centerline[i]
        bx, by = self.centerline[i + 1]
        return math.atan2(by - ay, bx - ax)


class LaneMap:
    """Lookup of lanes by id with nearest-lane queries."""

    def __init__(self, lanes: Iterable[Lane]):
        self._lanes: dict[str, Lane] = {}
        for lane in lanes:
            if lane.lane_id in self._lanes:
                raise ValueError(f"duplicate lane id {lane.lane_id}")
            self._lanes[lane.lane_id] = lane
        if not self._lanes:
            raise ValueError("a map needs at least one lane")

    def __iter__(self):
        return iter(self._lanes.values())

    def __contains__(self, lane_id: str) -> bool:
        return lane_id in self._lanes

    def __len__(self) -> int:
        return len(self._lanes)

    def get(self, lane_id: str) -> Lane:
        try:
            return self._lanes[lane_id]
        except KeyError:
            raise KeyError(f"unknown lane id {lane_id!r}") from None

    def nearest_lane(self, x: float, y: float, same_direction_only: bool = False) -> Lane:
        """Lane whose centerline is laterally closest; ties break by lane id."""
        best: tuple[float, str] | None = None
        for lane in self._lanes.values():
            if same_direction_only and lane.direction_sign != 1:
                continue
            offset = abs(lane.project(x, y).lateral)
            key = (offset, lane.lane_id)
            if best is None or key < best:
                best = key
        if best is None:
            raise ValueError("no lane matches the direction filter")
        return self._lanes[best[1]]

    def adjacent_same_direction(self, lane: Lane) -> list[Lane]:
        """Same-direction neighbours of a lane, left first."""
        result = []
        for neighbour_id in (lane.left, lane.right):
            if neighbour_id is not None and neighbour_id in self._lanes:
                neighbour = self._lanes[neighbour_id]
                if neighbour.direction_sign == 1:
                    result.append(neighbour)
        return result
