"""Batch entry point: replay solves, compile trajectories, emit reports.

Exit codes are a stable contract: 0 success, 1 input/schema error, 2 solver
failure, 3 validation failure. All outputs are canonical (sorted-key JSON,
shortest round-trip floats in CSV) so identical inputs give identical bytes.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import feasibility, ik, trajectory
from .geometry import load_environment
from .kinematics import com_and_momentum_matrix, load_robot_model
from .script import (
    AuthoringSession,
    Script,
    ScriptError,
    canonical_json,
    contacts_from_anchors,
    load_script,
    save_script,
    solve_session,
)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_VALIDATION = 3

PROFILE_DEFAULT_S = {"simulation": 2.0, "hardware": 4.0}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", required=True, help="robot model JSON")
    common.add_argument("--env", help="environment JSON (array of polytopes)")
    common.add_argument("--script", required=True, help="script JSON")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument(
        "--profile", choices=("simulation", "hardware"), default="simulation",
        help="default transition profile for unset keyframe durations",
    )
    common.add_argument(
        "--region-mode", choices=("flat", "multi-contact", "off"), default="flat",
        help="CoM support-region mode used while solving",
    )
    parser = argparse.ArgumentParser(prog="poseworks", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_solve = sub.add_parser("solve", parents=[common], help="re-solve keyframes from stored anchors")
    p_solve.add_argument("--keyframe", default="all", help="index to solve, or 'all'")
    p_compile = sub.add_parser("compile", parents=[common], help="compile keyframes into a trajectory")
    p_compile.add_argument("--rate", type=float, default=100.0, help="sample rate for CSV export (Hz)")
    sub.add_parser("region", parents=[common], help="export support-region polygons per keyframe")
    sub.add_parser("report", parents=[common], help="stability-margin CSV (flat vs multi-contact)")
    p_validate = sub.add_parser("validate", parents=[common], help="validate the compiled trajectory")
    p_validate.add_argument("--rate", type=float, default=100.0)
    return parser


def _load_inputs(args):
    model = load_robot_model(args.model)
    environment = load_environment(args.env) if args.env else None
    script = load_script(args.script)
    problems = validate_script_references(script, model)
    if problems:
        raise ScriptError("; ".join(problems))
    return model, environment, script


def validate_script_references(script: Script, model) -> list[str]:
    problems = []
    for kf in script.keyframes:
        if len(kf.controller_q) != model.n or len(kf.puppet_q) != model.n:
            problems.append(f"keyframe {kf.index}: configuration length != model dof {model.n}")
        for anchor in kf.anchors:
            if anchor.kind == "spatial" and not model.has_body(anchor.body):
                problems.append(f"anchor {anchor.id!r}: unknown body {anchor.body!r}")
            if anchor.kind == "joint":
                try:
                    model.joint(anchor.joint)
                except Exception:
                    problems.append(f"anchor {anchor.id!r}: unknown joint {anchor.joint!r}")
    return problems


def _keyframe_session(model, environment, script, kf, region_mode) -> AuthoringSession:
    session = AuthoringSession(model, environment=environment)
    session.anchors = {a.id: a.clone() for a in kf.anchors}
    session.puppet_q = np.asarray(kf.controller_q, dtype=float).copy()
    session.controller_q = np.asarray(kf.controller_q, dtype=float).copy()
    session.region_mode = region_mode
    return session


def _margin_row(model, q, contacts, want_multi: bool):
    com, _ = com_and_momentum_matrix(model, q)
    flat = multi = ""
    if contacts:
        region = feasibility.support_region_flat(model, q, contacts)
        flat = repr(feasibility.stability_margin(region, com[:2]))
        if want_multi and len(contacts) >= 2:
            mc = feasibility.support_region_multicontact(model, q, contacts)
            multi = repr(feasibility.stability_margin(mc, com[:2]))
    return flat, multi


def _write_margins(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["keyframe", "flat_margin", "multi_contact_margin"])
        writer.writerows(rows)


def cmd_solve(args) -> int:
    model, environment, script = _load_inputs(args)
    indices = (
        range(len(script.keyframes))
        if args.keyframe == "all"
        else [int(args.keyframe)]
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    failing = []
    diagnostics = []
    margin_rows = []
    for i in indices:
        if i < 0 or i >= len(script.keyframes):
            print(f"error: keyframe {i} out of range", file=sys.stderr)
            return EXIT_INPUT
        kf = script.keyframes[i]
        session = _keyframe_session(model, environment, script, kf, args.region_mode)
        diag = solve_session(session)
        deviation = float(np.abs(session.puppet_q - kf.puppet_q).max()) if len(kf.puppet_q) else 0.0
        diagnostics.append(
            {
                "keyframe": kf.index,
                "status": diag.status,
                "iterations": diag.iterations,
                "final_cost": None if np.isnan(diag.final_cost) else diag.final_cost,
                "task_residuals": {k: float(v) for k, v in diag.task_residuals.items()},
                "max_kkt_residual": diag.max_kkt_residual,
                "deviation_from_stored": deviation,
                "warnings": diag.warnings,
            }
        )
        if diag.status != ik.CONVERGED:
            failing.append(kf.index)
        kf.puppet_q = session.puppet_q.copy()
        contacts = contacts_from_anchors(session)
        flat, multi = _margin_row(
            model, session.puppet_q, contacts, want_multi=args.region_mode == "multi-contact"
        )
        margin_rows.append([kf.index, flat, multi])
    save_script(script, out / "solved_script.json")
    with open(out / "solve_diagnostics.json", "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"keyframes": diagnostics}))
    _write_margins(out / "margins.csv", margin_rows)
    if failing:
        print(f"solver failed to converge on keyframes: {failing}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _compile_trajectory(script: Script, profile: str):
    if len(script.keyframes) < 2:
        raise ScriptError("need >= 2 keyframes to compile a trajectory")
    default = PROFILE_DEFAULT_S[profile]
    configs = [np.asarray(script.keyframes[0].controller_q, dtype=float)]
    times = [0.0]
    for kf in script.keyframes:
        duration = kf.duration_s if kf.duration_s is not None else default
        times.append(times[-1] + float(duration))
        configs.append(np.asarray(kf.puppet_q, dtype=float))
    return trajectory.compile_trajectory(np.array(configs), np.array(times))


def cmd_compile(args) -> int:
    model, environment, script = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj = _compile_trajectory(script, args.profile)
    trajectory.export_csv(traj, out / "trajectory.csv", rate_hz=args.rate)
    trajectory.export_coeffs_json(traj, out / "trajectory_coeffs.json")
    report = trajectory.validate_trajectory(traj, model, environment=environment)
    _write_validation(out / "validation.json", traj, report)
    if not report.clean:
        print(
            f"validation: {len(report.joint_limit_violations)} joint, "
            f"{len(report.velocity_violations)} velocity, "
            f"{len(report.collisions)} collision findings",
            file=sys.stderr,
        )
        return EXIT_VALIDATION
    return EXIT_OK


def _write_validation(path, traj, report) -> None:
    doc = {
        "duration_s": traj.duration,
        "clean": report.clean,
        "joint_limit_violations": [
            {"t": t, "joint": j, "value": v} for t, j, v in report.joint_limit_violations
        ],
        "velocity_violations": [
            {"t": t, "joint": j, "value": v} for t, j, v in report.velocity_violations
        ],
        "collisions": [
            {"t": t, "robot": r, "environment": e, "depth": d}
            for t, r, e, d in report.collisions
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(doc))


def cmd_region(args) -> int:
    model, environment, script = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for kf in script.keyframes:
        session = _keyframe_session(model, environment, script, kf, args.region_mode)
        session.puppet_q = np.asarray(kf.puppet_q, dtype=float).copy()
        contacts = contacts_from_anchors(session)
        entry = {"keyframe": kf.index, "flat": None, "multi_contact": None}
        if contacts:
            flat = feasibility.support_region_flat(model, session.puppet_q, contacts)
            entry["flat"] = [[float(x) for x in v] for v in flat.vertices]
            if len(contacts) >= 2 and args.region_mode == "multi-contact":
                mc = feasibility.support_region_multicontact(model, session.puppet_q, contacts)
                entry["multi_contact"] = [[float(x) for x in v] for v in mc.vertices]
        entries.append(entry)
    with open(out / "regions.json", "w", encoding="utf-8") as fh:
        fh.write(canonical_json({"keyframes": entries}))
    return EXIT_OK


def cmd_report(args) -> int:
    model, environment, script = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for kf in script.keyframes:
        session = _keyframe_session(model, environment, script, kf, args.region_mode)
        session.puppet_q = np.asarray(kf.puppet_q, dtype=float).copy()
        contacts = contacts_from_anchors(session)
        flat, multi = _margin_row(model, session.puppet_q, contacts, want_multi=True)
        rows.append([kf.index, flat, multi])
    _write_margins(out / "margins.csv", rows)
    return EXIT_OK


def cmd_validate(args) -> int:
    model, environment, script = _load_inputs(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    traj = _compile_trajectory(script, args.profile)
    report = trajectory.validate_trajectory(traj, model, environment=environment, rate_hz=args.rate)
    _write_validation(out / "validation.json", traj, report)
    return EXIT_OK if report.clean else EXIT_VALIDATION


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "solve": cmd_solve,
        "compile": cmd_compile,
        "region": cmd_region,
        "report": cmd_report,
        "validate": cmd_validate,
    }
    try:
        return handlers[args.command](args)
    except (ScriptError, FileNotFoundError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
