"""Small standalone games for auditing the re-weighting loop.

A game is a set of agent bundles plus a ready-made interaction table; the
trajectories themselves are stubs since only the table drives the sweep.
Games come from YAML files or from a seeded random generator that the
agreement suite uses.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import Footprint
from .ibr import InteractionTable, RewardWeights
from .scenario_io import ScenarioValidationError, _check_version, _parse_yaml_file
from .trajectory import Trajectory, WeightedBundle

__all__ = ["stub_bundle", "load_game", "random_game"]

_STUB_FOOTPRINT = Footprint(4.0, 2.0)


def stub_bundle(agent_index: int, size: int, base_probs=None, agent_id: Optional[str] = None) -> WeightedBundle:
    """A bundle of placeholder trajectories for table-driven games."""
    trajectories = []
    for l in range(size):
        y = 100.0 * agent_index + 10.0 * l
        trajectories.append(
            Trajectory(
                x=np.array([0.0, 1.0]),
                y=np.array([y, y]),
                heading=np.zeros(2),
                speed=np.ones(2),
                dt=1.0,
            )
        )
    return WeightedBundle.from_trajectories(
        trajectories, _STUB_FOOTPRINT, agent_id or f"agent{agent_index}", base_probs=base_probs
    )


def _reward_from_dict(entry: Optional[dict]) -> RewardWeights:
    if not entry:
        return RewardWeights()
    allowed = {"u_c", "u_d", "proximity_threshold", "alpha", "beta", "w_p", "w_c"}
    unknown = set(entry) - allowed
    if unknown:
        raise ScenarioValidationError(f"unknown reward fields: {sorted(unknown)}")
    return RewardWeights(**{k: float(v) for k, v in entry.items()})


def load_game(path: str | Path) -> tuple[list[WeightedBundle], InteractionTable, RewardWeights]:
    """Load a game file: agent sizes, penalty matrices, ego terms."""
    data = _parse_yaml_file(path)
    _check_version(data, path)
    try:
        agents = data["agents"]
        sizes = [int(a["m"]) for a in agents]
        cfg = _reward_from_dict(data.get("reward"))
        bundles = [
            stub_bundle(i, sizes[i], base_probs=agents[i].get("base_probs"), agent_id=agents[i]["id"])
            for i in range(len(agents))
        ]
        psi: dict[tuple[int, int], np.ndarray] = {}
        for block in data["psi"]:
            i, j = (int(v) for v in block["pair"])
            if not (0 <= i < j < len(agents)):
                raise ScenarioValidationError(f"{path}: psi pair [{i}, {j}] is not ordered agent indices")
            matrix = np.asarray(block["matrix"], dtype=np.float64)
            if matrix.shape != (sizes[i], sizes[j]):
                raise ScenarioValidationError(
                    f"{path}: psi matrix for pair [{i}, {j}] must have shape {(sizes[i], sizes[j])}"
                )
            allowed = (cfg.u_c, cfg.u_d, 0.0)
            if not np.all(np.isin(matrix, allowed)):
                raise ScenarioValidationError(
                    f"{path}: psi entries must come from {{u_c, u_d, 0}} = {allowed}"
                )
            psi[(i, j)] = matrix
        for i in range(len(agents)):
            for j in range(i + 1, len(agents)):
                if (i, j) not in psi:
                    raise ScenarioValidationError(f"{path}: missing psi matrix for pair [{i}, {j}]")
        progress = np.asarray(data.get("ego_progress", [0.0] * sizes[0]), dtype=np.float64)
        comfort = np.asarray(data.get("ego_comfort", [0] * sizes[0]), dtype=np.float64)
        if len(progress) != sizes[0] or len(comfort) != sizes[0]:
            raise ScenarioValidationError(f"{path}: ego term lengths must match the ego's m")
        if np.any(progress < 0.0) or np.any(progress > cfg.alpha + cfg.beta + 1e-12):
            raise ScenarioValidationError(f"{path}: ego_progress must lie in [0, alpha + beta]")
        if not np.all(np.isin(comfort, (0.0, 1.0))):
            raise ScenarioValidationError(f"{path}: ego_comfort flags must be 0 or 1")
        table = InteractionTable(psi=psi, ego_progress=progress, ego_comfort=comfort)
        return bundles, table, cfg
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ScenarioValidationError):
            raise
        raise ScenarioValidationError(f"{path}: {exc}") from exc


def random_game(
    seed: int,
    n_agents: int = 2,
    n_trajectories: int = 3,
    cfg: Optional[RewardWeights] = None,
) -> tuple[list[WeightedBundle], InteractionTable, RewardWeights]:
    """Seeded random game: penalty entries drawn from {u_c, u_d, 0}, random
    ego progress in [0, alpha + beta], random comfort flags."""
    cfg = cfg or RewardWeights()
    rng = np.random.default_rng(seed)
    sizes = [n_trajectories] * n_agents
    psi = {}
    for i in range(n_agents):
        for j in range(i + 1, n_agents):
            choices = rng.choice([cfg.u_c, cfg.u_d, 0.0], size=(sizes[i], sizes[j]), p=[0.25, 0.25, 0.5])
            psi[(i, j)] = choices
    progress = rng.uniform(0.0, cfg.alpha + cfg.beta, size=sizes[0])
    comfort = rng.integers(0, 2, size=sizes[0]).astype(float)
    table = InteractionTable(psi=psi, ego_progress=progress, ego_comfort=comfort)
    bundles = [stub_bundle(i, sizes[i]) for i in range(n_agents)]
    return bundles, table, cfg
