"""Closed-loop scenario execution.

The ego replans every step: observe the world, predict each agent, generate
proposals, update per-agent confidence, precompute the interaction table,
iterate best response, commit the most likely proposal and advance the world
one step. Traffic agents either follow the car-following law along their
lane, replay a fixed recording, or execute one scripted maneuver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from .confidence import ConfidenceState, bayes_update, confidence
from .dynamics import IdmParams, idm_accel
from .geometry import Footprint, OrientedBox, Pose, boxes_collide
from .ibr import (
    GameState,
    RewardWeights,
    build_interaction_table,
    make_update_order,
    run_ibr,
)
from .maps import LaneMap
from .predictor import (
    COARSE_DT,
    AgentObservation,
    ConstantVelocityPredictor,
    Maneuver,
    Predictor,
    ScriptedPredictor,
    maneuver_rollout,
)
from .proposer import LateralPath, ProposalConfig, ProposalError, generate_proposals
from .trajectory import (
    Trajectory,
    WeightedBundle,
    current_distribution,
    most_likely,
    most_likely_index,
    relative_entropy_trace,
    resample,
)

__all__ = [
    "IdmBehavior",
    "ReplayBehavior",
    "ScriptedBehavior",
    "AgentSpec",
    "EgoSpec",
    "Scenario",
    "RunConfig",
    "StateRecord",
    "WorldRecord",
    "EventRecord",
    "CycleRecord",
    "SimTrace",
    "World",
    "step_world",
    "run_closed_loop",
]

# A vehicle this close laterally to a lane's centerline acts as a leader for
# car-following agents on that lane.
LEADER_LATERAL_LIMIT = 2.0

# Gap floor fed to the car-following law when vehicles overlap; the law then
# commands its hardest braking instead of dividing by zero.
MIN_GAP = 0.5

FALLBACK_DECEL = 3.0  # m/s^2, emergency plan when no proposal exists

HISTORY_STATES = 21  # 2 s of observation history at 10 Hz


@dataclass(frozen=True)
class IdmBehavior:
    """Reactive car-following along a fixed lane."""

    lane_id: str
    v_target: Optional[float] = None  # None: use the lane's speed limit
    a_max: float = 1.5
    s_star: float = 6.0
    delta: float = 4.0


@dataclass(frozen=True)
class ReplayBehavior:
    """Non-reactive playback of a recorded trajectory."""

    trajectory: Trajectory


@dataclass(frozen=True)
class ScriptedBehavior:
    """Executes one maneuver of a script open loop.

    The executed trajectory is produced through the same coarse-grid
    generation and upsampling as the scripted predictor, so the motion
    matches the corresponding predicted mode exactly.
    """

    script: tuple[Maneuver, ...]
    executes: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "script", tuple(self.script))
        if not (0 <= self.executes < len(self.script)):
            raise ValueError("executes must index a script entry")


Behavior = Union[IdmBehavior, ReplayBehavior, ScriptedBehavior]


@dataclass(frozen=True)
class AgentSpec:
    agent_id: str
    pose: Pose
    speed: float
    footprint: Footprint
    behavior: Behavior
    prediction_script: Optional[tuple[Maneuver, ...]] = None


@dataclass(frozen=True)
class EgoSpec:
    pose: Pose
    speed: float
    footprint: Footprint
    route: tuple[str, ...]
    expert_progress: float


@dataclass(frozen=True)
class Scenario:
    name: str
    lanes: LaneMap
    ego: EgoSpec
    agents: tuple[AgentSpec, ...]
    duration: float
    dt: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", tuple(self.agents))
        object.__setattr__(self, "ego", replace(self.ego, route=tuple(self.ego.route)))
        steps = self.duration / self.dt
        if self.dt <= 0.0 or steps < 1 or abs(steps - round(steps)) > 1e-6:
            raise ValueError("duration must be a positive multiple of dt")
        if not self.ego.route:
            raise ValueError("ego route must name at least one lane")
        for lane_id in self.ego.route:
            if lane_id not in self.lanes:
                raise ValueError(f"route references unknown lane {lane_id!r}")
        for a, b in zip(self.ego.route, self.ego.route[1:]):
            lane = self.lanes.get(a)
            if b not in (lane.left, lane.right):
                raise ValueError(f"route lanes {a!r} and {b!r} are not adjacent")
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids) or "ego" in ids:
            raise ValueError("agent ids must be unique and distinct from 'ego'")
        for agent in self.agents:
            if isinstance(agent.behavior, IdmBehavior) and agent.behavior.lane_id not in self.lanes:
                raise ValueError(
                    f"agent {agent.agent_id!r} follows unknown lane {agent.behavior.lane_id!r}"
                )

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class RunConfig:
    """Planner configuration; the defaults are the reference setup."""

    iterations: int = 10
    reward: RewardWeights = field(default_factory=RewardWeights)
    proposals: ProposalConfig = field(default_factory=ProposalConfig)
    predictor: str = "scripted"  # "scripted" or "cv"
    confidence_enabled: bool = True
    sigma: float = 0.5
    confidence_prior: float = 0.5
    ego_confidence: float = 1.0
    update_order: str = "ego-first"
    comfort_accel_limit: float = 2.4
    comfort_jerk_limit: float = 4.13

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.predictor not in ("scripted", "cv"):
            raise ValueError("predictor must be 'scripted' or 'cv'")
        if self.update_order not in ("ego-first", "ego-last"):
            raise ValueError("update_order must be 'ego-first' or 'ego-last'")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class StateRecord:
    x: float
    y: float
    heading: float
    speed: float

    @property
    def pose(self) -> Pose:
        return Pose(self.x, self.y, self.heading)


@dataclass(frozen=True)
class WorldRecord:
    t: float
    ego: StateRecord
    agents: dict[str, StateRecord]


@dataclass(frozen=True)
class EventRecord:
    step: int
    kind: str
    agent_id: Optional[str] = None
    detail: str = ""


@dataclass(frozen=True)
class CycleRecord:
    index: int
    t: float
    chosen_index: int
    fallback: bool
    ego_distribution: list[float]
    agent_distributions: dict[str, list[float]]
    confidences: dict[str, float]
    ego_entropy: list[float]
    ego_entropy_degenerate: bool
    agent_entropy: dict[str, list[float]]
    exp_clamped: bool


@dataclass(frozen=True)
class SimTrace:
    scenario: Scenario
    config: RunConfig
    steps: list[WorldRecord]
    cycles: list[CycleRecord]
    events: list[EventRecord]


class _ReplayRuntime:
    def __init__(self, spec: AgentSpec, trajectory: Trajectory):
        self.trajectory = trajectory
        self.cursor = 0
        self.frozen = False

    def state_at(self, cursor: int) -> StateRecord:
        i = min(cursor, len(self.trajectory) - 1)
        pose, speed = self.trajectory.state(i)
        return StateRecord(pose.x, pose.y, pose.heading, speed)

    def advance(self, world: "World", spec: AgentSpec, prev: StateRecord) -> StateRecord:
        self.cursor += 1
        if self.cursor >= len(self.trajectory) and not self.frozen:
            self.frozen = True
            world._log_event("replay_end_frozen", spec.agent_id)
        return self.state_at(self.cursor)


class _IdmRuntime:
    def __init__(self, spec: AgentSpec, behavior: IdmBehavior, lanes: LaneMap):
        self.lane = lanes.get(behavior.lane_id)
        target = behavior.v_target if behavior.v_target is not None else self.lane.speed_limit
        self.params = IdmParams(
            v_target=target, a_max=behavior.a_max, s_star=behavior.s_star, delta=behavior.delta
        )
        proj = self.lane.project(spec.pose.x, spec.pose.y)
        self.s = proj.s
        self.v = spec.speed
        self.frozen = False

    def current_state(self) -> StateRecord:
        x, y = self.lane.point_at(self.s)
        return StateRecord(x, y, self.lane.heading_at(self.s), self.v)

    def _leader_gap(self, world: "World", spec: AgentSpec) -> float:
        best = math.inf
        half_len = 0.5 * spec.footprint.length
        participants = [("ego", world.ego_state, world.scenario.ego.footprint)]
        participants += [
            (a.agent_id, world.agent_states[a.agent_id], a.footprint)
            for a in world.scenario.agents
            if a.agent_id != spec.agent_id
        ]
        for _, state, footprint in participants:
            proj = self.lane.project(state.x, state.y)
            if abs(proj.lateral) > LEADER_LATERAL_LIMIT:
                continue
            if proj.s <= self.s:
                continue
            gap = proj.s - self.s - half_len - 0.5 * footprint.length
            best = min(best, gap)
        return max(best, MIN_GAP) if math.isfinite(best) else math.inf

    def advance(self, world: "World", spec: AgentSpec, prev: StateRecord) -> StateRecord:
        if self.frozen:
            return prev
        gap = self._leader_gap(world, spec)
        accel = idm_accel(self.params, self.v, gap)
        self.s += self.v * world.scenario.dt
        self.v = max(0.0, self.v + accel * world.scenario.dt)
        if self.s >= self.lane.length:
            self.s = self.lane.length
            self.v = 0.0
            self.frozen = True
            world._log_event("lane_end_frozen", spec.agent_id)
        return self.current_state()


def _scripted_execution(spec: AgentSpec, behavior: ScriptedBehavior, duration: float, dt: float) -> Trajectory:
    # Round the coarse horizon up so the executed trajectory covers the run.
    coarse_horizon = math.ceil((duration + dt) / COARSE_DT) * COARSE_DT
    rolled = maneuver_rollout(
        spec.pose, spec.speed, behavior.script[behavior.executes], coarse_horizon, COARSE_DT
    )
    return resample(rolled, dt)


class World:
    """Mutable world state advanced one step at a time."""

    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.time = 0.0
        self.step_index = 0
        self.ego_state = StateRecord(
            scenario.ego.pose.x,
            scenario.ego.pose.y,
            scenario.ego.pose.heading,
            scenario.ego.speed,
        )
        self.ego_plan: Optional[Trajectory] = None
        self.events: list[EventRecord] = []
        self.agent_states: dict[str, StateRecord] = {}
        self._runtimes: dict[str, object] = {}
        for spec in scenario.agents:
            behavior = spec.behavior
            if isinstance(behavior, IdmBehavior):
                runtime = _IdmRuntime(spec, behavior, scenario.lanes)
                state = StateRecord(spec.pose.x, spec.pose.y, spec.pose.heading, spec.speed)
            elif isinstance(behavior, ReplayBehavior):
                runtime = _ReplayRuntime(spec, behavior.trajectory)
                state = runtime.state_at(0)
            elif isinstance(behavior, ScriptedBehavior):
                runtime = _ReplayRuntime(
                    spec, _scripted_execution(spec, behavior, scenario.duration, scenario.dt)
                )
                state = runtime.state_at(0)
            else:
                raise TypeError(f"unknown behavior {behavior!r}")
            self._runtimes[spec.agent_id] = runtime
            self.agent_states[spec.agent_id] = state

    def _log_event(self, kind: str, agent_id: Optional[str] = None, detail: str = "") -> None:
        self.events.append(EventRecord(self.step_index, kind, agent_id, detail))

    def snapshot(self) -> WorldRecord:
        return WorldRecord(t=self.time, ego=self.ego_state, agents=dict(self.agent_states))

    def set_ego_plan(self, plan: Trajectory) -> None:
        start = plan.pose(0)
        err = math.hypot(start.x - self.ego_state.x, start.y - self.ego_state.y)
        if err > 1e-6:
            raise ValueError(f"committed plan starts {err:.2e} m away from the ego")
        self.ego_plan = plan

    def advance(self) -> None:
        """One time step: the ego follows its plan, agents follow their behavior."""
        if self.ego_plan is not None and len(self.ego_plan) > 1:
            pose, speed = self.ego_plan.state(1)
            new_ego = StateRecord(pose.x, pose.y, pose.heading, speed)
        else:
            new_ego = self.ego_state
        new_states = {}
        for spec in self.scenario.agents:
            runtime = self._runtimes[spec.agent_id]
            prev = self.agent_states[spec.agent_id]
            new_states[spec.agent_id] = runtime.advance(self, spec, prev)
        self.ego_state = new_ego
        self.agent_states = new_states
        self.step_index += 1
        self.time = self.step_index * self.scenario.dt


def step_world(world: World, dt: Optional[float] = None) -> World:
    """Advance the world one step in place and return it."""
    if dt is not None and abs(dt - world.scenario.dt) > 1e-12:
        raise ValueError("the world advances at the scenario's fixed dt")
    world.advance()
    return world


def _make_predictor(scenario: Scenario, cfg: RunConfig) -> Predictor:
    if cfg.predictor == "cv":
        return ConstantVelocityPredictor(horizon=cfg.proposals.horizon, dt=cfg.proposals.dt)
    scripts: dict[str, tuple[Maneuver, ...]] = {}
    for spec in scenario.agents:
        if spec.prediction_script is not None:
            scripts[spec.agent_id] = tuple(spec.prediction_script)
        elif isinstance(spec.behavior, ScriptedBehavior):
            scripts[spec.agent_id] = spec.behavior.script
    return ScriptedPredictor(scripts, horizon=cfg.proposals.horizon, dt=cfg.proposals.dt)


def _observation(
    spec: AgentSpec, steps: list[WorldRecord], dt: float
) -> AgentObservation:
    recent = steps[-HISTORY_STATES:]
    states = [rec.agents[spec.agent_id] for rec in recent]
    if len(states) == 1:
        states = [states[0], states[0]]
    current = states[-1]
    history = Trajectory(
        x=np.array([s.x for s in states]),
        y=np.array([s.y for s in states]),
        heading=np.array([s.heading for s in states]),
        speed=np.array([s.speed for s in states]),
        dt=dt,
    )
    return AgentObservation(
        agent_id=spec.agent_id,
        footprint=spec.footprint,
        history=history,
        pose=current.pose,
        speed=current.speed,
    )


def _route_lateral_sign(scenario: Scenario, ego_pose: Pose) -> int:
    """+1 when the route's target lane is to the ego's left, -1 right, 0 done."""
    target = scenario.lanes.get(scenario.ego.route[-1])
    offset = target.project(ego_pose.x, ego_pose.y).lateral
    if abs(offset) <= target.half_width:
        return 0
    return 1 if offset < 0.0 else -1


def _leader_lookup(world: World, ego: StateRecord, ego_footprint: Footprint):
    """Per-path leading vehicle, fixed at plan time with constant speed."""

    def lookup(path: LateralPath):
        s0 = path.project_arc(ego.x, ego.y)
        lane = world.scenario.lanes.get(path.target_lane_id)
        best: Optional[tuple[float, float, float]] = None  # (arc, speed_along, half_len)
        for spec in world.scenario.agents:
            state = world.agent_states[spec.agent_id]
            if path.lateral_distance(state.x, state.y) > lane.half_width:
                continue
            s_agent = path.project_arc(state.x, state.y)
            if s_agent <= s0 + 0.1:
                continue
            if best is None or s_agent < best[0]:
                along = state.speed * math.cos(state.heading - path.heading_at(s_agent))
                best = (s_agent, max(along, 0.0), 0.5 * spec.footprint.length)
        if best is None:
            return None
        s_agent, v_lead, half_len = best
        base = max(s_agent - s0 - half_len - 0.5 * ego_footprint.length, MIN_GAP)
        return lambda t: base + v_lead * t

    return lookup


def _fallback_plan(ego: StateRecord, cfg: RunConfig) -> Trajectory:
    maneuver = Maneuver("brake", 1.0, rate=FALLBACK_DECEL)
    return maneuver_rollout(ego.pose, ego.speed, maneuver, cfg.proposals.horizon, cfg.proposals.dt)


def _detect_events(world: World, colliding: set[str], off_road: list[bool]) -> None:
    ego_box = OrientedBox(world.ego_state.pose, world.scenario.ego.footprint)
    for spec in world.scenario.agents:
        state = world.agent_states[spec.agent_id]
        hit = boxes_collide(ego_box, OrientedBox(state.pose, spec.footprint))
        if hit and spec.agent_id not in colliding:
            colliding.add(spec.agent_id)
            world._log_event("collision", spec.agent_id)
        elif not hit:
            colliding.discard(spec.agent_id)
    inside = any(
        abs(lane.project(world.ego_state.x, world.ego_state.y).lateral) <= lane.half_width + 1e-6
        for lane in world.scenario.lanes
    )
    if not inside and not (off_road and off_road[-1]):
        world._log_event("off_drivable")
    off_road.append(not inside)


def run_closed_loop(scenario: Scenario, cfg: RunConfig) -> SimTrace:
    """Simulate a scenario under the replanning loop and record everything."""
    if abs(cfg.proposals.dt - scenario.dt) > 1e-12:
        raise ValueError("proposal dt must match the scenario dt")
    world = World(scenario)
    predictor = _make_predictor(scenario, cfg)
    conf_states = {
        spec.agent_id: ConfidenceState(posterior=cfg.confidence_prior, sigma=cfg.sigma,
                                       prior0=cfg.confidence_prior)
        for spec in scenario.agents
    }
    steps: list[WorldRecord] = [world.snapshot()]
    cycles: list[CycleRecord] = []
    colliding: set[str] = set()
    off_road: list[bool] = []
    _detect_events(world, colliding, off_road)

    for k in range(scenario.n_steps):
        ego = world.ego_state
        # Confidence update against the representatives committed last cycle.
        if cfg.confidence_enabled:
            for spec in scenario.agents:
                state = conf_states[spec.agent_id]
                if state.biber_rep is not None:
                    obs_pose = world.agent_states[spec.agent_id].pose
                    conf_states[spec.agent_id] = bayes_update(state, obs_pose, scenario.dt)
        applied_conf = {
            spec.agent_id: (
                confidence(conf_states[spec.agent_id]) if cfg.confidence_enabled else 1.0
            )
            for spec in scenario.agents
        }
        recorded_conf = {
            spec.agent_id: confidence(conf_states[spec.agent_id]) for spec in scenario.agents
        }

        raw_bundles = {
            spec.agent_id: predictor.predict(_observation(spec, steps, scenario.dt), scenario.lanes)
            for spec in scenario.agents
        }

        fallback = False
        try:
            ego_bundle = generate_proposals(
                (ego.pose, ego.speed),
                scenario.ego.footprint,
                scenario.lanes,
                _leader_lookup(world, ego, scenario.ego.footprint),
                cfg.proposals,
            )
        except ProposalError:
            fallback = True
            world._log_event("planner_failure", detail="no proposals; braking fallback")
            plan = _fallback_plan(ego, cfg)
            world.set_ego_plan(plan)
            cycles.append(
                CycleRecord(
                    index=k,
                    t=world.time,
                    chosen_index=-1,
                    fallback=True,
                    ego_distribution=[1.0],
                    agent_distributions={
                        aid: [float(v) for v in current_distribution(b)]
                        for aid, b in raw_bundles.items()
                    },
                    confidences=recorded_conf,
                    ego_entropy=[],
                    ego_entropy_degenerate=True,
                    agent_entropy={},
                    exp_clamped=False,
                )
            )
            world.advance()
            steps.append(world.snapshot())
            _detect_events(world, colliding, off_road)
            continue

        bundles = [ego_bundle] + [raw_bundles[spec.agent_id] for spec in scenario.agents]
        lateral_sign = _route_lateral_sign(scenario, ego.pose)
        table = build_interaction_table(
            bundles,
            cfg.reward,
            lateral_sign,
            cfg.comfort_accel_limit,
            cfg.comfort_jerk_limit,
        )
        confid = np.array([cfg.ego_confidence] + [applied_conf[s.agent_id] for s in scenario.agents])
        game = GameState(
            bundles=tuple(bundles),
            table=table,
            reward_cfg=cfg.reward,
            confidences=confid,
            update_order=make_update_order(len(bundles), cfg.update_order),
        )
        final, history = run_ibr(game, cfg.iterations)

        chosen = most_likely_index(final.bundles[0])
        plan = ego_bundle.trajectories[chosen]
        world.set_ego_plan(plan)

        for idx, spec in enumerate(scenario.agents):
            conf_states[spec.agent_id] = conf_states[spec.agent_id].with_representatives(
                most_likely(final.bundles[idx + 1]),
                most_likely(raw_bundles[spec.agent_id]),
            )

        ego_trace = relative_entropy_trace([h[0] for h in history])
        agent_traces = {
            spec.agent_id: relative_entropy_trace([h[idx + 1] for h in history])
            for idx, spec in enumerate(scenario.agents)
        }
        cycles.append(
            CycleRecord(
                index=k,
                t=world.time,
                chosen_index=chosen,
                fallback=False,
                ego_distribution=[float(v) for v in current_distribution(final.bundles[0])],
                agent_distributions={
                    spec.agent_id: [float(v) for v in current_distribution(final.bundles[idx + 1])]
                    for idx, spec in enumerate(scenario.agents)
                },
                confidences=recorded_conf,
                ego_entropy=[float(v) for v in ego_trace.values],
                ego_entropy_degenerate=ego_trace.degenerate_base,
                agent_entropy={
                    aid: [float(v) for v in trace.values] for aid, trace in agent_traces.items()
                },
                exp_clamped=final.exp_clamped,
            )
        )

        world.advance()
        steps.append(world.snapshot())
        _detect_events(world, colliding, off_road)

    return SimTrace(
        scenario=scenario,
        config=cfg,
        steps=steps,
        cycles=cycles,
        events=list(world.events),
    )
