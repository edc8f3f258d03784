"""Scenario scoring from a simulation trace.

Four multiplier subscores (collision fault, drivable area, driving
direction, making progress) gate a weighted sum of four graded subscores
(time to collision, ego progress, speed compliance, comfort). The composite
is the product of the multipliers times the weighted sum normalized to
[0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Footprint, OrientedBox, Pose, boxes_collide, normalize_angle
from .simulator import SimTrace, StateRecord

__all__ = [
    "MetricsReport",
    "composite_score",
    "score_trace",
    "min_ttc",
    "swept_collision_time",
    "TTC_THRESHOLD",
]

TTC_THRESHOLD = 0.95  # seconds

# Weighted subscore weights; the normalizer keeps the composite in [0, 1].
_W_TTC, _W_EP, _W_SC, _W_COMFORT = 5.0, 5.0, 4.0, 2.0
_W_TOTAL = _W_TTC + _W_EP + _W_SC + _W_COMFORT

COMFORT_LON_ACCEL = 2.4  # m/s^2
COMFORT_LAT_ACCEL = 4.9  # m/s^2
COMFORT_JERK = 4.13  # m/s^3

# Ego lateral offsets beyond this are treated as a lane transition for the
# lateral time-to-collision qualification.
_LANE_TRANSITION_OFFSET = 0.6
_TTC_LATERAL_RANGE = 4.5


@dataclass(frozen=True)
class MetricsReport:
    """Subscores plus the composite scenario score."""

    nc: float
    dac: float
    ddc: float
    mp: float
    ttc: float
    ep: float
    sc: float
    comfort: float
    composite: float
    min_ttc_seconds: Optional[float] = None


def composite_score(
    nc: float,
    dac: float,
    ddc: float,
    mp: float,
    ttc: float,
    ep: float,
    sc: float,
    comfort: float,
) -> float:
    """Multiplier product times the normalized weighted subscore sum."""
    weighted = (_W_TTC * ttc + _W_EP * ep + _W_SC * sc + _W_COMFORT * comfort) / _W_TOTAL
    return nc * dac * ddc * mp * weighted


def swept_collision_time(
    pose_a: Pose,
    footprint_a: Footprint,
    speed_a: float,
    pose_b: Pose,
    footprint_b: Footprint,
    speed_b: float,
) -> float:
    """Exact first contact time of two boxes moving at constant velocity.

    Orientations stay fixed, so the projections onto the four separating
    axes move linearly: contact starts at the latest axis entry time if that
    precedes every axis exit time. Returns inf when they never touch.
    """
    boxes = (
        (pose_a, footprint_a, speed_a),
        (pose_b, footprint_b, speed_b),
    )
    vel = [
        (s * math.cos(p.heading), s * math.sin(p.heading)) for p, _, s in boxes
    ]
    rel_vx = vel[1][0] - vel[0][0]
    rel_vy = vel[1][1] - vel[0][1]
    dx = pose_b.x - pose_a.x
    dy = pose_b.y - pose_a.y

    enter = 0.0
    exit_ = math.inf
    for p, f, _ in boxes:
        c, s = math.cos(p.heading), math.sin(p.heading)
        for ax, ay in ((c, s), (-s, c)):
            # Half-extent of each box projected on this axis.
            reach = 0.0
            for q, g, _ in boxes:
                qc, qs = math.cos(q.heading), math.sin(q.heading)
                reach += abs(0.5 * g.length * (qc * ax + qs * ay))
                reach += abs(0.5 * g.width * (-qs * ax + qc * ay))
            d0 = dx * ax + dy * ay
            dv = rel_vx * ax + rel_vy * ay
            if abs(dv) < 1e-12:
                if abs(d0) > reach:
                    return math.inf
                continue
            t1 = (-reach - d0) / dv
            t2 = (reach - d0) / dv
            if t1 > t2:
                t1, t2 = t2, t1
            enter = max(enter, t1)
            exit_ = min(exit_, t2)
            if enter > exit_:
                return math.inf
    return enter


def _qualifies_for_ttc(ego: StateRecord, agent: StateRecord, ego_in_transition: bool) -> bool:
    dx = agent.x - ego.x
    dy = agent.y - ego.y
    lon = dx * math.cos(ego.heading) + dy * math.sin(ego.heading)
    if lon >= 0.0:
        return True
    if ego_in_transition:
        lat = -dx * math.sin(ego.heading) + dy * math.cos(ego.heading)
        return abs(lat) <= _TTC_LATERAL_RANGE
    return False


def min_ttc(trace: SimTrace) -> float:
    """Minimum constant-velocity collision time over the whole trace.

    Only agents ahead of the ego count, plus laterally close agents while
    the ego is offset from every centerline (a lane transition). Returns
    inf when no qualifying pair ever closes.
    """
    if not trace.steps:
        raise ValueError("empty trace")
    scenario = trace.scenario
    footprints = {spec.agent_id: spec.footprint for spec in scenario.agents}
    best = math.inf
    for record in trace.steps:
        ego = record.ego
        offset = min(
            abs(lane.project(ego.x, ego.y).lateral) for lane in scenario.lanes
        )
        in_transition = offset > _LANE_TRANSITION_OFFSET
        for agent_id, state in record.agents.items():
            if not _qualifies_for_ttc(ego, state, in_transition):
                continue
            t = swept_collision_time(
                ego.pose,
                scenario.ego.footprint,
                ego.speed,
                state.pose,
                footprints[agent_id],
                state.speed,
            )
            best = min(best, t)
    return best


def _collision_fault_score(trace: SimTrace) -> float:
    """1 without collisions; 0 when the ego is at fault, else 0.5.

    The ego is at fault when its front half overlaps the other vehicle or
    when it sits outside every lane corridor at the collision step; a
    rear-end hit on a lane-keeping ego is scored as not at fault.
    """
    scenario = trace.scenario
    footprints = {spec.agent_id: spec.footprint for spec in scenario.agents}
    score = 1.0
    for event in trace.events:
        if event.kind != "collision":
            continue
        record = trace.steps[event.step]
        ego = record.ego
        agent = record.agents[event.agent_id]
        half = scenario.ego.footprint
        front_center = Pose(
            ego.x + 0.25 * half.length * math.cos(ego.heading),
            ego.y + 0.25 * half.length * math.sin(ego.heading),
            ego.heading,
        )
        front_box = OrientedBox(front_center, Footprint(0.5 * half.length, half.width))
        agent_box = OrientedBox(agent.pose, footprints[event.agent_id])
        off_lane = all(
            abs(lane.project(ego.x, ego.y).lateral) > lane.half_width + 1e-6
            for lane in scenario.lanes
        )
        if boxes_collide(front_box, agent_box) or off_lane:
            score = 0.0
        else:
            score = min(score, 0.5)
        if score == 0.0:
            break
    return score


def _route_progress(trace: SimTrace) -> float:
    """Arc advance of the ego's projection onto the route's final lane."""
    lane = trace.scenario.lanes.get(trace.scenario.ego.route[-1])
    start = lane.project(trace.steps[0].ego.x, trace.steps[0].ego.y).s
    end = lane.project(trace.steps[-1].ego.x, trace.steps[-1].ego.y).s
    return max(end - start, 0.0)


def _speed_compliance(trace: SimTrace) -> float:
    """1 minus the mean over-limit fraction, clipped to [0, 1]."""
    scenario = trace.scenario
    overs = []
    for record in trace.steps:
        lane = scenario.lanes.nearest_lane(record.ego.x, record.ego.y)
        overs.append(max(0.0, record.ego.speed - lane.speed_limit) / lane.speed_limit)
    return float(min(max(1.0 - np.mean(overs), 0.0), 1.0))


def _comfort(trace: SimTrace) -> float:
    speeds = np.array([r.ego.speed for r in trace.steps])
    headings = np.array([r.ego.heading for r in trace.steps])
    dt = trace.scenario.dt
    accel = np.diff(speeds) / dt
    if np.max(np.abs(accel)) > COMFORT_LON_ACCEL:
        return 0.0
    if len(accel) >= 2 and np.max(np.abs(np.diff(accel))) / dt > COMFORT_JERK:
        return 0.0
    dheading = np.array([normalize_angle(float(d)) for d in np.diff(headings)])
    lat_accel = speeds[1:] * dheading / dt
    if len(lat_accel) and np.max(np.abs(lat_accel)) > COMFORT_LAT_ACCEL:
        return 0.0
    return 1.0


def _drivable_and_direction(trace: SimTrace) -> tuple[float, float]:
    scenario = trace.scenario
    dac = 1.0
    oncoming_distance = 0.0
    prev = None
    for record in trace.steps:
        ego = record.ego
        inside = any(
            abs(lane.project(ego.x, ego.y).lateral) <= lane.half_width + 1e-6
            for lane in scenario.lanes
        )
        if not inside:
            dac = 0.0
        nearest = scenario.lanes.nearest_lane(ego.x, ego.y)
        if nearest.direction_sign == -1 and prev is not None:
            oncoming_distance += math.hypot(ego.x - prev.x, ego.y - prev.y)
        prev = ego
    if oncoming_distance > 6.0:
        ddc = 0.0
    elif oncoming_distance > 2.0:
        ddc = 0.5
    else:
        ddc = 1.0
    return dac, ddc


def score_trace(trace: SimTrace, expert_progress: float) -> MetricsReport:
    """Compute every subscore and the composite for a finished trace."""
    if not trace.steps or not trace.cycles:
        raise ValueError("cannot score an empty trace")
    if expert_progress <= 0.0:
        raise ValueError("expert_progress must be positive")

    nc = _collision_fault_score(trace)
    dac, ddc = _drivable_and_direction(trace)
    ep = float(min(max(_route_progress(trace) / expert_progress, 0.0), 1.0))
    mp = 0.0 if ep < 0.2 else 1.0
    ttc_seconds = min_ttc(trace)
    ttc = 1.0 if ttc_seconds > TTC_THRESHOLD else 0.0
    sc = _speed_compliance(trace)
    comfort = _comfort(trace)
    composite = composite_score(nc, dac, ddc, mp, ttc, ep, sc, comfort)
    return MetricsReport(
        nc=nc,
        dac=dac,
        ddc=ddc,
        mp=mp,
        ttc=ttc,
        ep=ep,
        sc=sc,
        comfort=comfort,
        composite=composite,
        min_ttc_seconds=None if math.isinf(ttc_seconds) else ttc_seconds,
    )
