"""Oriented rectangular footprints with exact collision and clearance tests.

Collision uses the separating-axis criterion over the four unique edge
normals of the two rectangles. Clearance is the exact minimum distance
between the closed rectangles, computed from vertex-to-edge distances; for
disjoint convex polygons the minimum is always attained at such a pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "Pose",
    "Footprint",
    "OrientedBox",
    "normalize_angle",
    "boxes_collide",
    "box_clearance",
]

_TWO_PI = 2.0 * math.pi


def normalize_angle(angle: float) -> float:
    """Wrap an angle in radians to the interval (-pi, pi]."""
    wrapped = (angle + math.pi) % _TWO_PI - math.pi
    return math.pi if wrapped == -math.pi else wrapped


@dataclass(frozen=True)
class Pose:
    """Planar position in meters plus heading in radians."""

    x: float
    y: float
    heading: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("Pose fields must be finite")
        object.__setattr__(self, "heading", normalize_angle(float(self.heading)))
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))


@dataclass(frozen=True)
class Footprint:
    """Rectangular body dimensions; length is along the heading axis."""

    length: float
    width: float

    def __post_init__(self) -> None:
        if not (self.length >= self.width > 0.0):
            raise ValueError("Footprint requires length >= width > 0")

    @property
    def circumradius(self) -> float:
        """Radius of the smallest circle containing the rectangle."""
        return 0.5 * math.hypot(self.length, self.width)


@dataclass(frozen=True)
class OrientedBox:
    """A footprint placed at a pose; the rectangle is centered on (x, y)."""

    pose: Pose
    footprint: Footprint

    def corners(self) -> list[tuple[float, float]]:
        """Corner coordinates in counter-clockwise order."""
        return box_corners(
            self.pose.x,
            self.pose.y,
            self.pose.heading,
            0.5 * self.footprint.length,
            0.5 * self.footprint.width,
        )

    @property
    def area(self) -> float:
        return self.footprint.length * self.footprint.width


def box_corners(
    x: float, y: float, heading: float, half_length: float, half_width: float
) -> list[tuple[float, float]]:
    """Corners of an oriented rectangle, counter-clockwise from front-left."""
    c = math.cos(heading)
    s = math.sin(heading)
    lc = half_length * c
    ls = half_length * s
    wc = half_width * c
    ws = half_width * s
    return [
        (x + lc - ws, y + ls + wc),
        (x - lc - ws, y - ls + wc),
        (x - lc + ws, y - ls - wc),
        (x + lc + ws, y + ls - wc),
    ]


def _project_interval(corners, ax: float, ay: float) -> tuple[float, float]:
    d0 = corners[0][0] * ax + corners[0][1] * ay
    lo = hi = d0
    for cx, cy in corners[1:]:
        d = cx * ax + cy * ay
        if d < lo:
            lo = d
        elif d > hi:
            hi = d
    return lo, hi


def corners_collide(ca, cb) -> bool:
    """Separating-axis test on two rectangle corner lists."""
    for corners in (ca, cb):
        # Opposite edges of a rectangle are parallel: two unique axes each.
        for k in (0, 1):
            ex = corners[k + 1][0] - corners[k][0]
            ey = corners[k + 1][1] - corners[k][1]
            ax, ay = -ey, ex
            lo_a, hi_a = _project_interval(ca, ax, ay)
            lo_b, hi_b = _project_interval(cb, ax, ay)
            if hi_a < lo_b or hi_b < lo_a:
                return False
    return True


def boxes_collide(a: OrientedBox, b: OrientedBox) -> bool:
    """True iff the two closed rectangles intersect."""
    dx = b.pose.x - a.pose.x
    dy = b.pose.y - a.pose.y
    reach = a.footprint.circumradius + b.footprint.circumradius
    if dx * dx + dy * dy > reach * reach:
        return False
    return corners_collide(a.corners(), b.corners())


def _point_segment_distance_sq(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> float:
    abx = bx - ax
    aby = by - ay
    apx = px - ax
    apy = py - ay
    denom = abx * abx + aby * aby
    if denom > 0.0:
        t = (apx * abx + apy * aby) / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        apx -= t * abx
        apy -= t * aby
    return apx * apx + apy * apy


def corners_clearance(ca, cb) -> float:
    """Minimum distance between two disjoint rectangles given as corner lists."""
    best = math.inf
    for pts, seg in ((ca, cb), (cb, ca)):
        for px, py in pts:
            for k in range(4):
                qx, qy = seg[k]
                rx, ry = seg[(k + 1) % 4]
                d = _point_segment_distance_sq(px, py, qx, qy, rx, ry)
                if d < best:
                    best = d
    return math.sqrt(best)


def box_clearance(a: OrientedBox, b: OrientedBox) -> float:
    """Minimum Euclidean distance between two rectangles; 0 iff they collide."""
    ca = a.corners()
    cb = b.corners()
    if corners_collide(ca, cb):
        return 0.0
    return corners_clearance(ca, cb)
