"""Command-line entry point: run scenarios, sweeps, the equilibrium oracle,
and plot-data export.

Exit codes: 0 success, 2 validation failure (bad files, bad arguments,
oversized games), 3 runtime planner failure (the braking fallback engaged).
"""

from __future__ import annotations

import argparse
import csv
import math
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .games import load_game, random_game
from .ibr import GameState, nash_oracle, run_ibr
from .metrics import score_trace
from .scenario_io import (
    ScenarioError,
    bundled_scenario_path,
    config_hash,
    load_results,
    load_scenario,
    write_results,
    _format_float,
)
from .simulator import RunConfig, Scenario, run_closed_loop
from .trajectory import current_distribution

__all__ = ["main", "build_parser"]

OUTPUT_DIR_ENV = "IBRPLAN_OUTPUT_DIR"
EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_PLANNER = 3

ORACLE_SWEEPS = 50
ORACLE_CONCENTRATION = 0.99


def _default_output_dir() -> str:
    return os.environ.get(OUTPUT_DIR_ENV, "runs")


def _add_planner_flags(parser: argparse.ArgumentParser) -> None:
    base = RunConfig()
    g = parser.add_argument_group("planner")
    g.add_argument("--iterations", type=int, default=base.iterations,
                   help="best-response sweeps per cycle (default %(default)s)")
    g.add_argument("--u-c", type=float, default=base.reward.u_c,
                   help="collision penalty (default %(default)s)")
    g.add_argument("--u-d", type=float, default=base.reward.u_d,
                   help="proximity penalty (default %(default)s)")
    g.add_argument("--proximity-threshold", type=float, default=base.reward.proximity_threshold,
                   help="clearance below this is too close, meters (default %(default)s)")
    g.add_argument("--alpha", type=float, default=base.reward.alpha,
                   help="longitudinal progress weight (default %(default)s)")
    g.add_argument("--beta", type=float, default=base.reward.beta,
                   help="lateral progress weight (default %(default)s)")
    g.add_argument("--w-p", type=float, default=base.reward.w_p,
                   help="progress term weight (default %(default)s)")
    g.add_argument("--w-c", type=float, default=base.reward.w_c,
                   help="comfort term weight (default %(default)s)")
    g.add_argument("--confidence", choices=("on", "off"), default="on",
                   help="per-agent reliability modulation (default %(default)s)")
    g.add_argument("--order", choices=("ego-first", "ego-last"), default=base.update_order,
                   help="agent update order within a sweep (default %(default)s)")
    g.add_argument("--predictor", choices=("scripted", "cv"), default=base.predictor,
                   help="agent motion predictor (default %(default)s)")
    g.add_argument("--sigma", type=float, default=base.sigma,
                   help="confidence likelihood std in meters (default %(default)s)")
    g.add_argument("--ego-confidence", type=float, default=base.ego_confidence,
                   help="fixed confidence of the ego update (default %(default)s)")
    g.add_argument("--max-proposals", type=int, default=base.proposals.max_proposals,
                   help="ego proposal cap (default %(default)s)")
    g.add_argument("--horizon", type=float, default=base.proposals.horizon,
                   help="proposal and prediction horizon in seconds (default %(default)s)")
    parser.add_argument("--output-dir", default=_default_output_dir(),
                        help=f"results directory (default ${OUTPUT_DIR_ENV} or 'runs')")


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    base = RunConfig()
    reward = replace(
        base.reward,
        u_c=args.u_c,
        u_d=args.u_d,
        proximity_threshold=args.proximity_threshold,
        alpha=args.alpha,
        beta=args.beta,
        w_p=args.w_p,
        w_c=args.w_c,
    )
    proposals = replace(base.proposals, max_proposals=args.max_proposals, horizon=args.horizon)
    return replace(
        base,
        iterations=args.iterations,
        reward=reward,
        proposals=proposals,
        predictor=args.predictor,
        confidence_enabled=args.confidence == "on",
        sigma=args.sigma,
        ego_confidence=args.ego_confidence,
        update_order=args.order,
    )


def _resolve_scenario(ref: str) -> Scenario:
    path = Path(ref)
    if path.is_file():
        return load_scenario(path)
    try:
        return load_scenario(bundled_scenario_path(ref))
    except FileNotFoundError:
        raise ScenarioError(f"scenario {ref!r}: no such file or bundled scenario") from None


def _print_report(scenario: Scenario, cfg: RunConfig, report) -> None:
    print(f"scenario: {scenario.name}")
    print(f"config_hash: {config_hash(scenario, cfg)}")
    for key in ("nc", "dac", "ddc", "mp", "ttc", "ep", "sc", "comfort"):
        print(f"  {key:8s} {getattr(report, key):.4f}")
    print(f"composite: {report.composite:.4f}")


def cmd_run(args: argparse.Namespace) -> int:
    try:
        scenario = _resolve_scenario(args.scenario)
        cfg = _config_from_args(args)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    trace = run_closed_loop(scenario, cfg)
    report = score_trace(trace, scenario.ego.expert_progress)
    out = Path(args.output_dir) / f"{scenario.name}.results.yaml"
    write_results(trace, report, out)
    _print_report(scenario, cfg, report)
    print(f"results: {out}")
    if any(e.kind == "planner_failure" for e in trace.events):
        print("planner failure: braking fallback engaged", file=sys.stderr)
        return EXIT_PLANNER
    return EXIT_OK


_SWEEP_AXES = ("iterations", "confidence", "order", "sigma")


def _parse_sweep_values(axis: str, raw: str) -> list:
    items = [v.strip() for v in raw.split(",") if v.strip()]
    if not items:
        raise ValueError("no sweep values given")
    if axis == "iterations":
        return [int(v) for v in items]
    if axis == "sigma":
        return [float(v) for v in items]
    if axis == "confidence":
        bad = [v for v in items if v not in ("on", "off")]
        if bad:
            raise ValueError(f"confidence values must be on/off, got {bad}")
        return items
    bad = [v for v in items if v not in ("ego-first", "ego-last")]
    if bad:
        raise ValueError(f"order values must be ego-first/ego-last, got {bad}")
    return items


def _apply_sweep_value(cfg: RunConfig, axis: str, value) -> RunConfig:
    if axis == "iterations":
        return replace(cfg, iterations=value)
    if axis == "sigma":
        return replace(cfg, sigma=value)
    if axis == "confidence":
        return replace(cfg, confidence_enabled=value == "on")
    return replace(cfg, update_order=value)


def cmd_sweep(args: argparse.Namespace) -> int:
    try:
        scenario = _resolve_scenario(args.scenario)
        base_cfg = _config_from_args(args)
        values = _parse_sweep_values(args.axis, args.values)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out_dir = Path(args.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    had_planner_failure = False
    for value in values:
        cfg = _apply_sweep_value(base_cfg, args.axis, value)
        trace = run_closed_loop(scenario, cfg)
        report = score_trace(trace, scenario.ego.expert_progress)
        had_planner_failure |= any(e.kind == "planner_failure" for e in trace.events)
        stem = f"{scenario.name}__{args.axis}_{value}"
        write_results(trace, report, out_dir / f"{stem}.results.yaml")
        rows.append(
            [args.axis, value]
            + [
                _format_float(getattr(report, k))
                for k in ("nc", "dac", "ddc", "mp", "ttc", "ep", "sc", "comfort", "composite")
            ]
        )
        print(f"{args.axis}={value}: composite {report.composite:.4f}")
    csv_path = out_dir / f"{scenario.name}__sweep_{args.axis}.csv"
    with csv_path.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["axis", "value", "nc", "dac", "ddc", "mp", "ttc", "ep", "sc", "comfort", "composite"])
        writer.writerows(rows)
    print(f"sweep csv: {csv_path}")
    return EXIT_PLANNER if had_planner_failure else EXIT_OK


def _oracle_verdict(bundles, table, cfg, sweeps: int) -> tuple[bool, bool, object]:
    """Run the sweep to (near) convergence and audit the concentrated profile."""
    state = GameState(
        bundles=tuple(bundles),
        table=table,
        reward_cfg=cfg,
        confidences=np.ones(len(bundles)),
    )
    final, _ = run_ibr(state, sweeps)
    concentrated = all(
        float(np.max(current_distribution(b))) > ORACLE_CONCENTRATION for b in final.bundles
    )
    certificate = nash_oracle(final.bundles, table, cfg)
    return concentrated, certificate.is_equilibrium, certificate


def cmd_oracle(args: argparse.Namespace) -> int:
    if args.random_suite is not None:
        agree = 0
        concentrated_count = 0
        for seed in range(args.seed, args.seed + args.random_suite):
            bundles, table, cfg = random_game(seed)
            concentrated, is_eq, _ = _oracle_verdict(bundles, table, cfg, args.sweeps)
            if concentrated:
                concentrated_count += 1
                agree += int(is_eq)
        print(f"games: {args.random_suite}  concentrated: {concentrated_count}  agreements: {agree}")
        if concentrated_count:
            print(f"agreement rate on concentrated outcomes: {agree / concentrated_count:.4f}")
        return EXIT_OK
    if args.game is None:
        print("error: provide a game file or --random-suite", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        bundles, table, cfg = load_game(args.game)
        concentrated, is_eq, certificate = _oracle_verdict(bundles, table, cfg, args.sweeps)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"profile after {args.sweeps} sweeps: {list(certificate.profile)}")
    print(f"concentrated: {concentrated}")
    print(f"pure equilibria: {[list(p) for p in certificate.equilibria]}")
    if certificate.violation is not None:
        agent, better, gain = certificate.violation
        print(f"deviation: agent {agent} prefers trajectory {better} (gain {gain:.6g})")
    print("verdict:", "AGREE" if is_eq else "DISAGREE")
    return EXIT_OK


def _export_entropy(data: dict, out: Path) -> None:
    cycles = [c for c in data["cycles"] if not c.get("fallback") and c.get("ego_entropy")]
    if not cycles:
        raise ScenarioError("results contain no planning cycles with entropy traces")
    n_points = len(cycles[0]["ego_entropy"])
    ego = np.zeros(n_points)
    agent_sum = np.zeros(n_points)
    agent_count = 0
    for cyc in cycles:
        ego += np.asarray(cyc["ego_entropy"], dtype=float)
        for record in cyc.get("agents", {}).values():
            trace = record.get("entropy") or []
            if len(trace) == n_points:
                agent_sum += np.asarray(trace, dtype=float)
                agent_count += 1
    ego /= len(cycles)
    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "ego_relative_entropy", "agents_relative_entropy"])
        for k in range(n_points):
            agents_val = agent_sum[k] / agent_count if agent_count else math.nan
            writer.writerow([k, _format_float(float(ego[k])), _format_float(float(agents_val))])


def _export_confidence(data: dict, out: Path) -> None:
    cycles = data["cycles"]
    agent_ids: list[str] = []
    for cyc in cycles:
        for agent_id in (cyc.get("confidences") or {}):
            if agent_id not in agent_ids:
                agent_ids.append(agent_id)
    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["cycle", "t"] + agent_ids)
        for cyc in cycles:
            conf = cyc.get("confidences") or {}
            writer.writerow(
                [cyc["index"], _format_float(float(cyc["t"]))]
                + [_format_float(float(conf[a])) if a in conf else "" for a in agent_ids]
            )


def _export_score_vs_iteration(path: Path, out: Path) -> None:
    with path.open("r", encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0] or "composite" not in rows[0]:
        raise ScenarioError(f"{path}: not a sweep csv (needs value and composite columns)")
    with out.open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iteration", "composite"])
        for row in rows:
            writer.writerow([row["value"], row["composite"]])


def cmd_export_plot(args: argparse.Namespace) -> int:
    source = Path(args.results)
    out = Path(args.output) if args.output else source.with_suffix(f".{args.kind.replace('-', '_')}.csv")
    try:
        if args.kind == "score-vs-iteration":
            _export_score_vs_iteration(source, out)
        else:
            data = load_results(source)
            if args.kind == "entropy":
                _export_entropy(data, out)
            else:
                _export_confidence(data, out)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"exported: {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibrplan",
        description="Game-theoretic trajectory re-weighting planner and scenario simulator.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario closed loop and score it")
    run_p.add_argument("scenario", help="scenario file path or bundled scenario name")
    _add_planner_flags(run_p)
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a scenario across an axis of config values")
    sweep_p.add_argument("scenario", help="scenario file path or bundled scenario name")
    sweep_p.add_argument("--axis", choices=_SWEEP_AXES, required=True)
    sweep_p.add_argument("--values", required=True, help="comma-separated values for the axis")
    _add_planner_flags(sweep_p)
    sweep_p.set_defaults(func=cmd_sweep)

    oracle_p = sub.add_parser("oracle", help="audit the sweep against exhaustive enumeration")
    oracle_p.add_argument("game", nargs="?", help="game file (bundles + penalty table)")
    oracle_p.add_argument("--random-suite", type=int, default=None,
                          help="run N seeded random games instead of a file")
    oracle_p.add_argument("--seed", type=int, default=0, help="first seed of the random suite")
    oracle_p.add_argument("--sweeps", type=int, default=ORACLE_SWEEPS,
                          help="sweeps before the audit (default %(default)s)")
    oracle_p.set_defaults(func=cmd_oracle)

    export_p = sub.add_parser("export-plot", help="export plain CSV series from a results file")
    export_p.add_argument("results", help="results yaml (or sweep csv for score-vs-iteration)")
    export_p.add_argument("--kind", choices=("entropy", "score-vs-iteration", "confidence-trace"),
                          required=True)
    export_p.add_argument("--output", default=None, help="output csv path")
    export_p.set_defaults(func=cmd_export_plot)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
