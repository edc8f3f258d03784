"""Scenario and results files: strict schemas, deterministic serialization.

Scenarios are YAML validated against a JSON Schema (unknown fields are
rejected) followed by semantic checks. Results are written canonically:
fixed field order and fixed float formatting with 17 significant digits, so
identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from dataclasses import asdict
from importlib import resources
from pathlib import Path
from typing import Any, Optional

import jsonschema
import numpy as np
import yaml

from .geometry import Footprint, Pose
from .maps import Lane, LaneMap
from .metrics import MetricsReport
from .predictor import Maneuver
from .simulator import (
    AgentSpec,
    EgoSpec,
    IdmBehavior,
    ReplayBehavior,
    RunConfig,
    Scenario,
    ScriptedBehavior,
    SimTrace,
)
from .trajectory import Trajectory

__all__ = [
    "ScenarioError",
    "ScenarioParseError",
    "ScenarioValidationError",
    "ScenarioVersionError",
    "load_scenario",
    "load_scenario_data",
    "scenario_to_dict",
    "config_to_dict",
    "config_hash",
    "write_results",
    "load_results",
    "canonical_yaml",
    "bundled_scenario_path",
]

SCHEMA_VERSION = 1


class ScenarioError(Exception):
    """Base class for scenario and results file problems."""


class ScenarioParseError(ScenarioError):
    """The file is not well-formed YAML."""


class ScenarioValidationError(ScenarioError):
    """The file parses but violates the schema or a semantic invariant."""


class ScenarioVersionError(ScenarioError):
    """The file declares an unsupported schema version."""


def _format_float(value: float) -> str:
    if math.isnan(value):
        return ".nan"
    if math.isinf(value):
        return ".inf" if value > 0 else "-.inf"
    text = format(value, ".17g")
    if not any(ch in text for ch in ".eE"):
        text += ".0"
    return text


class _CanonicalDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper: yaml.SafeDumper, value: float):
    return dumper.represent_scalar("tag:yaml.org,2002:float", _format_float(float(value)))


_CanonicalDumper.add_representer(float, _represent_float)
_CanonicalDumper.add_representer(np.float64, _represent_float)


def canonical_yaml(data: Any) -> str:
    """Deterministic YAML: insertion order kept, floats at 17 significant digits."""
    return yaml.dump(
        data,
        Dumper=_CanonicalDumper,
        sort_keys=False,
        default_flow_style=None,
        width=100000,
        allow_unicode=True,
    )


def _load_schema(name: str) -> dict:
    with resources.files("ibrplan.scenarios").joinpath(name).open("r", encoding="utf-8") as fh:
        return json.load(fh)


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    path = resources.files("ibrplan.scenarios").joinpath(f"{name}.yaml")
    if not path.is_file():
        raise FileNotFoundError(f"no bundled scenario named {name!r}")
    return Path(str(path))


def _parse_yaml_file(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ScenarioParseError(f"{path}: malformed YAML: {exc}") from exc


def _check_version(data: Any, path: str | Path) -> None:
    if not isinstance(data, dict) or "schema_version" not in data:
        raise ScenarioValidationError(f"{path}: missing schema_version")
    if data["schema_version"] != SCHEMA_VERSION:
        raise ScenarioVersionError(
            f"{path}: unsupported schema_version {data['schema_version']!r}, expected {SCHEMA_VERSION}"
        )


def _validate_against(data: Any, schema_name: str, path: str | Path) -> None:
    schema = _load_schema(schema_name)
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        location = "/".join(str(p) for p in first.absolute_path) or "<root>"
        raise ScenarioValidationError(f"{path}: at {location}: {first.message}")


def _parse_maneuver(entry: dict) -> Maneuver:
    return Maneuver(
        kind=entry["kind"],
        prob=float(entry["prob"]),
        rate=float(entry.get("rate", 0.0)),
        lateral=float(entry.get("lateral", 0.0)),
    )


def _parse_pose(entry: dict) -> Pose:
    return Pose(float(entry["x"]), float(entry["y"]), float(entry["heading"]))


def _parse_footprint(entry: dict) -> Footprint:
    return Footprint(float(entry["length"]), float(entry["width"]))


def _parse_behavior(entry: dict, agent_id: str) -> IdmBehavior | ReplayBehavior | ScriptedBehavior:
    kind = entry["type"]
    if kind == "idm":
        return IdmBehavior(
            lane_id=entry["lane"],
            v_target=float(entry["v_target"]) if "v_target" in entry else None,
            a_max=float(entry.get("a_max", 1.5)),
            s_star=float(entry.get("s_star", 6.0)),
            delta=float(entry.get("delta", 4.0)),
        )
    if kind == "replay":
        states = np.asarray(entry["states"], dtype=np.float64)
        return ReplayBehavior(
            trajectory=Trajectory(
                x=states[:, 0],
                y=states[:, 1],
                heading=states[:, 2],
                speed=states[:, 3],
                dt=float(entry["dt"]),
            )
        )
    if kind == "scripted":
        return ScriptedBehavior(
            script=tuple(_parse_maneuver(m) for m in entry["script"]),
            executes=int(entry.get("executes", 0)),
        )
    raise ScenarioValidationError(f"agent {agent_id!r}: unknown behavior type {kind!r}")


def load_scenario_data(data: dict, source: str = "<data>") -> Scenario:
    """Build a validated Scenario from already-parsed file data."""
    _check_version(data, source)
    _validate_against(data, "scenario.schema.json", source)
    try:
        lanes = LaneMap(
            Lane(
                lane_id=entry["id"],
                centerline=np.asarray(entry["centerline"], dtype=np.float64),
                speed_limit=float(entry["speed_limit"]),
                left=entry.get("left"),
                right=entry.get("right"),
                direction_sign=int(entry.get("direction", 1)),
                half_width=float(entry.get("half_width", 1.75)),
            )
            for entry in data["map"]["lanes"]
        )
        ego_data = data["ego"]
        ego = EgoSpec(
            pose=_parse_pose(ego_data["pose"]),
            speed=float(ego_data["speed"]),
            footprint=_parse_footprint(ego_data["footprint"]),
            route=tuple(ego_data["route"]),
            expert_progress=float(ego_data["expert_progress"]),
        )
        agents = tuple(
            AgentSpec(
                agent_id=entry["id"],
                pose=_parse_pose(entry["pose"]),
                speed=float(entry["speed"]),
                footprint=_parse_footprint(entry["footprint"]),
                behavior=_parse_behavior(entry["behavior"], entry["id"]),
                prediction_script=(
                    tuple(_parse_maneuver(m) for m in entry["prediction_script"])
                    if "prediction_script" in entry
                    else None
                ),
            )
            for entry in data["agents"]
        )
        return Scenario(
            name=data["name"],
            lanes=lanes,
            ego=ego,
            agents=agents,
            duration=float(data["duration"]),
            dt=float(data.get("dt", 0.1)),
            seed=int(data.get("seed", 0)),
        )
    except (ValueError, KeyError) as exc:
        raise ScenarioValidationError(f"{source}: {exc}") from exc


def load_scenario(path: str | Path) -> Scenario:
    """Load and validate a scenario file."""
    data = _parse_yaml_file(path)
    return load_scenario_data(data, str(path))


def _maneuver_to_dict(m: Maneuver) -> dict:
    out: dict[str, Any] = {"kind": m.kind, "prob": m.prob}
    if m.rate:
        out["rate"] = m.rate
    if m.lateral:
        out["lateral"] = m.lateral
    return out


def scenario_to_dict(scenario: Scenario) -> dict:
    """Inverse of load_scenario_data; used for canonical hashing."""
    lanes = []
    for lane in scenario.lanes:
        entry: dict[str, Any] = {
            "id": lane.lane_id,
            "centerline": [[float(x), float(y)] for x, y in lane.centerline],
            "speed_limit": lane.speed_limit,
            "direction": lane.direction_sign,
            "half_width": lane.half_width,
        }
        if lane.left is not None:
            entry["left"] = lane.left
        if lane.right is not None:
            entry["right"] = lane.right
        lanes.append(entry)
    agents = []
    for spec in scenario.agents:
        behavior = spec.behavior
        if isinstance(behavior, IdmBehavior):
            beh: dict[str, Any] = {"type": "idm", "lane": behavior.lane_id}
            if behavior.v_target is not None:
                beh["v_target"] = behavior.v_target
            beh.update(a_max=behavior.a_max, s_star=behavior.s_star, delta=behavior.delta)
        elif isinstance(behavior, ReplayBehavior):
            t = behavior.trajectory
            beh = {
                "type": "replay",
                "dt": t.dt,
                "states": [
                    [float(t.x[i]), float(t.y[i]), float(t.heading[i]), float(t.speed[i])]
                    for i in range(len(t))
                ],
            }
        else:
            beh = {
                "type": "scripted",
                "script": [_maneuver_to_dict(m) for m in behavior.script],
                "executes": behavior.executes,
            }
        entry = {
            "id": spec.agent_id,
            "pose": {"x": spec.pose.x, "y": spec.pose.y, "heading": spec.pose.heading},
            "speed": spec.speed,
            "footprint": {"length": spec.footprint.length, "width": spec.footprint.width},
            "behavior": beh,
        }
        if spec.prediction_script is not None:
            entry["prediction_script"] = [_maneuver_to_dict(m) for m in spec.prediction_script]
        agents.append(entry)
    return {
        "schema_version": SCHEMA_VERSION,
        "name": scenario.name,
        "map": {"lanes": lanes},
        "ego": {
            "pose": {
                "x": scenario.ego.pose.x,
                "y": scenario.ego.pose.y,
                "heading": scenario.ego.pose.heading,
            },
            "speed": scenario.ego.speed,
            "footprint": {
                "length": scenario.ego.footprint.length,
                "width": scenario.ego.footprint.width,
            },
            "route": list(scenario.ego.route),
            "expert_progress": scenario.ego.expert_progress,
        },
        "agents": agents,
        "duration": scenario.duration,
        "dt": scenario.dt,
        "seed": scenario.seed,
    }


def config_to_dict(cfg: RunConfig) -> dict:
    data = asdict(cfg)
    data["proposals"]["speed_fractions"] = list(cfg.proposals.speed_fractions)
    data["proposals"]["lateral_offsets"] = list(cfg.proposals.lateral_offsets)
    return data


def config_hash(scenario: Scenario, cfg: RunConfig) -> str:
    """Hash identifying the full run input: scenario content plus config."""
    payload = canonical_yaml(
        {"scenario": scenario_to_dict(scenario), "config": config_to_dict(cfg)}
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def _results_dict(trace: SimTrace, report: MetricsReport) -> dict:
    metrics = {
        "nc": report.nc,
        "dac": report.dac,
        "ddc": report.ddc,
        "mp": report.mp,
        "ttc": report.ttc,
        "ep": report.ep,
        "sc": report.sc,
        "comfort": report.comfort,
        "composite": report.composite,
        "min_ttc_seconds": report.min_ttc_seconds,
    }
    cycles = []
    for cyc in trace.cycles:
        agents = {}
        for agent_id in cyc.agent_distributions:
            agents[agent_id] = {
                "distribution": cyc.agent_distributions[agent_id],
                "confidence": cyc.confidences.get(agent_id),
                "entropy": cyc.agent_entropy.get(agent_id, []),
            }
        cycles.append(
            {
                "index": cyc.index,
                "t": cyc.t,
                "chosen": cyc.chosen_index,
                "fallback": cyc.fallback,
                "ego_distribution": cyc.ego_distribution,
                "ego_entropy": cyc.ego_entropy,
                "ego_entropy_degenerate": cyc.ego_entropy_degenerate,
                "exp_clamped": cyc.exp_clamped,
                "confidences": cyc.confidences,
                "agents": agents,
            }
        )
    events = [
        {"step": e.step, "kind": e.kind, "agent": e.agent_id, "detail": e.detail}
        for e in trace.events
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "scenario": trace.scenario.name,
        "config_hash": config_hash(trace.scenario, trace.config),
        "seed": trace.scenario.seed,
        "config": config_to_dict(trace.config),
        "metrics": metrics,
        "events": events,
        "cycles": cycles,
    }


_CSV_FIELDS = ["scenario", "config_hash", "nc", "dac", "ddc", "mp", "ttc", "ep", "sc", "comfort", "composite"]


def write_results(trace: SimTrace, report: MetricsReport, path: str | Path) -> Path:
    """Write the canonical results file plus a flat CSV sidecar.

    Returns the path of the YAML file; the sidecar sits next to it with a
    .csv suffix.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _results_dict(trace, report)
    path.write_text(canonical_yaml(payload), encoding="utf-8")

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(_CSV_FIELDS)
    writer.writerow(
        [payload["scenario"], payload["config_hash"]]
        + [_format_float(payload["metrics"][k]) for k in _CSV_FIELDS[2:]]
    )
    path.with_suffix(".csv").write_text(buffer.getvalue(), encoding="utf-8")
    return path


def load_results(path: str | Path) -> dict:
    """Load a results file back into plain data."""
    data = _parse_yaml_file(path)
    _check_version(data, path)
    for key in ("scenario", "config_hash", "metrics", "cycles", "events"):
        if key not in data:
            raise ScenarioValidationError(f"{path}: results file missing {key!r}")
    return data
