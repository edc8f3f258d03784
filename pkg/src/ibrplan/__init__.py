"""Game-theoretic re-weighting of fixed trajectory sets for an ego vehicle
and surrounding agents, with a closed-loop simulator and scenario metrics."""

from .confidence import ConfidenceState, bayes_update, confidence, likelihood
from .dynamics import IdmParams, idm_accel, idm_rollout
from .geometry import Footprint, OrientedBox, Pose, box_clearance, boxes_collide
from .ibr import (
    GameState,
    InteractionTable,
    NashCertificate,
    RewardWeights,
    build_interaction_table,
    comfort_reward,
    ibr_sweep,
    nash_oracle,
    pair_score,
    progress_reward,
    run_ibr,
    total_reward,
)
from .maps import Lane, LaneMap
from .metrics import MetricsReport, composite_score, min_ttc, score_trace
from .predictor import (
    AgentObservation,
    ConstantVelocityPredictor,
    Maneuver,
    Predictor,
    ScriptedPredictor,
    cv_predict,
    scripted_predict,
)
from .proposer import ProposalConfig, ProposalError, generate_proposals, lateral_paths
from .scenario_io import (
    ScenarioError,
    config_hash,
    load_results,
    load_scenario,
    write_results,
)
from .simulator import (
    AgentSpec,
    EgoSpec,
    IdmBehavior,
    ReplayBehavior,
    RunConfig,
    Scenario,
    ScriptedBehavior,
    SimTrace,
    World,
    run_closed_loop,
    step_world,
)
from .trajectory import (
    Trajectory,
    WeightedBundle,
    current_distribution,
    most_likely,
    most_likely_index,
    relative_entropy_trace,
    resample,
)

__version__ = "0.1.0"
