"""Command-line front end: plant ingestion, solve/bench/sweep orchestration.

Subcommands
-----------
solve      Run the sequential scheme on one plant and emit a controller JSON.
bench      Run an eta grid over a directory of plants; write summary CSV rows.
eta-sweep  Solve a single penalized round per (cone, eta) from the zero anchor.
norm       Print the open-loop H2 (trace convention) or H-infinity norm.

Exit codes: 0 success (solve: stabilizing feasible result), 2 solve terminated
without a feasible/stabilizing controller, 1 input or solver errors.

The environment variable ``PENRELAX_SOLVER_TOL`` overrides the conic backend
tolerance for all subcommands.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .conic import SolverSettings
from .relaxation import ConeKind, PenaltyConfig, build_penalized, split_primal
from .bmi import lift_residual
from .conic import Status, solve as conic_solve
from .sequential import SequentialConfig, SequentialError, run
from .synthesis import (
    Plant,
    SynthesisKind,
    centralized_structure,
    controller_json,
    diagonal_structure,
    extract_controller,
    open_loop_norm,
    structure_from_mask,
)

ETA_GRID = tuple(m * 10.0**i for i in range(-2, 5) for m in (1, 2, 5))

BENCH_COLUMNS = [
    "name",
    "open_loop_norm",
    "eta",
    "t_avg_seconds",
    "k_f",
    "obj_f",
    "k_p",
    "obj_p",
    "cone",
    "status",
]


def _fmt(value) -> str:
    """CSV cell: 6 significant digits, '.' decimal separator, Inf spelled out."""
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isinf(value):
            return "Inf" if value > 0 else "-Inf"
        if math.isnan(value):
            return "NaN"
        return f"{value:.6g}"
    return str(value)


def solver_settings_from_env() -> SolverSettings:
    raw = os.environ.get("PENRELAX_SOLVER_TOL")
    if raw is None:
        return SolverSettings()
    try:
        tol = float(raw)
    except ValueError as exc:
        raise ValueError(f"PENRELAX_SOLVER_TOL={raw!r} is not a number") from exc
    if not tol > 0:
        raise ValueError("PENRELAX_SOLVER_TOL must be positive")
    return SolverSettings(tol=tol)


def load_plant(path) -> Plant:
    """Read and validate a plant JSON file.

    The document must hold the eight state-space matrices as row-major arrays
    of arrays; ``name`` is optional and defaults to the file stem.
    """
    path = Path(path)
    with open(path) as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not valid JSON ({exc})") from exc
    matrices = {}
    for key in ("A", "B1", "B", "C1", "C", "D11", "D12", "D21"):
        if key not in doc:
            raise ValueError(f"{path}: missing field {key!r}")
        matrices[key] = np.asarray(doc[key], dtype=float)
    try:
        return Plant(name=str(doc.get("name", path.stem)), **matrices)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def _parse_structure(choice: str, plant: Plant):
    if choice == "centralized":
        return centralized_structure(plant.nu, plant.ny)
    if choice == "diagonal":
        return diagonal_structure(plant.nu, plant.ny)
    with open(choice) as f:
        mask = json.load(f)
    return structure_from_mask(np.asarray(mask, dtype=float))


def _default_thresh(kind: SynthesisKind, value):
    if value is not None:
        return value
    return 0.1 if kind is SynthesisKind.H2 else 0.05


def _build(plant, kind: SynthesisKind, structure, eta: float):
    from .synthesis import build_h2, build_hinf

    if kind is SynthesisKind.H2:
        return build_h2(plant, structure, eta)
    return build_hinf(plant, structure, eta)


def _run_once(plant, kind, structure, cone, eta, prog_thresh, max_round, accelerate,
              feas_tol, anchor_raw, settings):
    """Build + iterate + extract. Returns (sp, trace, h, K, cert)."""
    sp = _build(plant, kind, structure, eta)
    anchor0 = None
    if anchor_raw is not None:
        raw = np.asarray(anchor_raw, dtype=float).ravel()
        if raw.size != sp.bmi.n:
            raise ValueError(
                f"anchor has length {raw.size}, synthesis problem has {sp.bmi.n} variables"
            )
        anchor0 = raw * sp.varmap.scale
    cfg = SequentialConfig(
        eta=eta,
        cone=cone,
        prog_thresh=prog_thresh,
        max_round=max_round,
        accelerate=accelerate,
        feas_tol=feas_tol,
        anchor0=anchor0,
    )
    x_star, trace = run(sp.bmi, cfg, settings=settings)
    h, K, cert = extract_controller(x_star, sp)
    return sp, trace, h, K, cert


def cmd_solve(args) -> int:
    settings = solver_settings_from_env()
    try:
        plant = load_plant(args.plant)
        structure = _parse_structure(args.structure, plant)
        kind = SynthesisKind(args.kind)
        anchor_raw = None
        if args.seed_anchor is not None:
            with open(args.seed_anchor) as f:
                anchor_raw = json.load(f)
        prog_thresh = _default_thresh(kind, args.prog_thresh)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        sp, trace, h, K, cert = _run_once(
            plant, kind, structure, ConeKind(args.cone), args.eta, prog_thresh,
            args.max_round, args.accelerate, args.feas_tol, anchor_raw, settings,
        )
    except SequentialError as exc:
        doc = {"name": plant.name, "error": str(exc), "trace": exc.trace.to_json_dict()}
        print(json.dumps(doc, indent=2))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    feasible = trace.rounds[-1].lift_residual <= args.feas_tol
    # Re-certify before emission: the reported objective must be consistent
    # with (i.e. not smaller than) the independently computed closed-loop norm.
    certified = (
        feasible
        and cert.stabilizing
        and cert.norm <= trace.obj_p + 1e-3 * (1.0 + abs(trace.obj_p))
    )
    doc = {
        "name": plant.name,
        "kind": kind.value,
        "cone": args.cone,
        "eta": args.eta,
        "objective_label": "tr_W" if kind is SynthesisKind.H2 else "gamma",
        "objective": trace.obj_p,
        "k_f": trace.k_f,
        "obj_f": trace.obj_f,
        "k_p": trace.k_p,
        "obj_p": trace.obj_p,
        "feasible": feasible,
        "stabilizing": cert.stabilizing,
        "certified": certified,
        "closed_loop_norm": cert.norm,
        "max_real_eig": cert.max_real_eig,
        "controller": controller_json(h, sp, cert),
        "trace": trace.to_json_dict()["rounds"],
    }
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0 if certified else 2


def _bench_one(plant, kind, structure, cone, eta_grid, prog_thresh, max_round,
               feas_tol, settings):
    """All per-eta rows for one plant plus the selected summary row."""
    ol = open_loop_norm(plant, kind)
    per_eta = []
    candidates = []
    for eta in eta_grid:
        base = {
            "name": plant.name,
            "open_loop_norm": ol,
            "eta": eta,
            "cone": cone.value,
        }
        try:
            sp, trace, h, K, cert = _run_once(
                plant, kind, structure, cone, eta, prog_thresh, max_round,
                True, feas_tol, None, settings,
            )
        except SequentialError as exc:
            per_eta.append({**base, "status": f"solver_error:{exc.status.value}"})
            continue
        except (ValueError, ArithmeticError):
            per_eta.append({**base, "status": "build_error"})
            continue
        feasible = trace.rounds[-1].lift_residual <= feas_tol
        row = {
            **base,
            "t_avg_seconds": trace.mean_solve_time,
            "k_f": trace.k_f,
            "obj_f": trace.obj_f,
            "k_p": trace.k_p,
            "obj_p": trace.obj_p,
        }
        if feasible and cert.stabilizing:
            row["status"] = "ok"
            candidates.append((trace.obj_p, eta, row))
        elif not feasible:
            row["status"] = "not_feasible"
        else:
            row["status"] = "not_stabilizing"
        per_eta.append(row)

    if candidates:
        candidates.sort(key=lambda t: (t[0], t[1]))
        selected = dict(candidates[0][2])
    else:
        selected = {
            "name": plant.name,
            "open_loop_norm": ol,
            "cone": cone.value,
            "status": "no_feasible",
        }
    return selected, per_eta


def _write_csv(path, columns, rows):
    def emit(f):
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in columns])

    if path is None or path == "-":
        emit(sys.stdout)
    else:
        with open(path, "w", newline="") as f:
            emit(f)


def cmd_bench(args) -> int:
    settings = solver_settings_from_env()
    cone = ConeKind(args.cone)
    kind = SynthesisKind(args.kind)
    prog_thresh = _default_thresh(kind, args.prog_thresh)
    eta_grid = _parse_eta_grid(args.eta_grid) if args.eta_grid else list(ETA_GRID)

    directory = Path(args.dir)
    if not directory.is_dir():
        print(f"error: {directory} is not a directory", file=sys.stderr)
        return 1
    files = sorted(directory.glob("*.json"))

    summary, log = [], []
    for path in files:
        try:
            plant = load_plant(path)
            structure = _parse_structure(args.structure, plant)
        except (OSError, ValueError) as exc:
            summary.append({"name": path.stem, "status": "load_error"})
            print(f"warning: {exc}", file=sys.stderr)
            continue
        try:
            selected, per_eta = _bench_one(
                plant, kind, structure, cone, eta_grid, prog_thresh,
                args.max_round, args.feas_tol, settings,
            )
        except (ValueError, ArithmeticError) as exc:
            summary.append({"name": plant.name, "status": "build_error"})
            print(f"warning: {plant.name}: {exc}", file=sys.stderr)
            continue
        summary.append(selected)
        log.extend(per_eta)

    _write_csv(args.out, BENCH_COLUMNS, summary)
    per_eta_path = args.per_eta_log
    if per_eta_path is None and args.out and args.out != "-":
        per_eta_path = str(args.out) + ".per-eta.csv"
    if per_eta_path:
        _write_csv(per_eta_path, BENCH_COLUMNS, log)
    return 0


def _parse_eta_grid(text: str):
    try:
        grid = [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise SystemExit(f"error: bad eta grid {text!r}: {exc}")
    if not grid or any(not (math.isfinite(v) and v > 0) for v in grid):
        raise SystemExit(f"error: eta grid must be positive reals, got {text!r}")
    return grid


def cmd_eta_sweep(args) -> int:
    """One penalized round per (cone, eta) from the zero anchor."""
    settings = solver_settings_from_env()
    try:
        plant = load_plant(args.plant)
        structure = _parse_structure(args.structure, plant)
        kind = SynthesisKind(args.kind)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    cones = [ConeKind(tok) for tok in args.cones.split(",") if tok.strip()]
    if args.eta_grid:
        etas = _parse_eta_grid(args.eta_grid)
    else:
        etas = list(np.logspace(math.log10(args.eta_min), math.log10(args.eta_max), args.steps))

    rows = []
    for cone in cones:
        for eta in etas:
            row = {"cone": cone.value, "eta": eta}
            try:
                sp = _build(plant, kind, structure, eta)
                prog = build_penalized(
                    sp.bmi, cone, PenaltyConfig(eta=eta, anchor=np.zeros(sp.bmi.n))
                )
                sol = conic_solve(prog, settings=settings)
                if sol.primal is None:
                    row["status"] = sol.status.value
                else:
                    x, X = split_primal(sol.primal, sp.bmi.n)
                    row["lift_residual"] = lift_residual(x, X)
                    row["obj"] = float(sp.bmi.c @ x)
                    row["status"] = sol.status.value
            except (ValueError, ArithmeticError) as exc:
                row["status"] = f"error:{exc}"
            rows.append(row)
    _write_csv(args.out, ["cone", "eta", "lift_residual", "obj", "status"], rows)
    return 0


def cmd_norm(args) -> int:
    try:
        plant = load_plant(args.plant)
        value = open_loop_norm(plant, SynthesisKind(args.kind))
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print("Inf" if math.isinf(value) else f"{value:.6g}")
    return 0


def _add_common(parser):
    parser.add_argument("--kind", choices=["h2", "hinf"], required=True)
    parser.add_argument(
        "--structure",
        default="centralized",
        help="centralized, diagonal, or a path to a JSON 0/1 mask matrix",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="penrelax",
        description="Sequential penalized convex relaxations for BMI problems "
        "and static output-feedback synthesis.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="synthesize a controller for one plant")
    p.add_argument("plant", help="plant JSON file")
    _add_common(p)
    p.add_argument("--cone", choices=[c.value for c in ConeKind], default="parabolic")
    p.add_argument("--eta", type=float, required=True, help="penalty weight")
    p.add_argument("--prog-thresh", type=float, default=None,
                   help="stopping threshold in percent (default 0.1 h2 / 0.05 hinf)")
    p.add_argument("--max-round", type=int, default=250)
    p.add_argument("--accelerate", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--feas-tol", type=float, default=1e-5)
    p.add_argument("--seed-anchor", default=None,
                   help="JSON file with the initial anchor in raw (unscaled) coordinates")
    p.add_argument("--out", default=None, help="write the result JSON here instead of stdout")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run an eta grid over a directory of plants")
    p.add_argument("dir", help="directory of plant JSON files")
    _add_common(p)
    p.add_argument("--cone", choices=[c.value for c in ConeKind], default="parabolic")
    p.add_argument("--eta-grid", default=None,
                   help="comma-separated eta values (default: {1,2,5}x10^i for i=-2..4)")
    p.add_argument("--prog-thresh", type=float, default=None)
    p.add_argument("--max-round", type=int, default=250)
    p.add_argument("--feas-tol", type=float, default=1e-5)
    p.add_argument("--out", default=None, help="summary CSV path (default stdout)")
    p.add_argument("--per-eta-log", default=None,
                   help="full per-eta CSV (default <out>.per-eta.csv when --out is a file)")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("eta-sweep", help="single penalized round per (cone, eta)")
    p.add_argument("plant")
    _add_common(p)
    p.add_argument("--cones", default="sdp,socp,parabolic")
    p.add_argument("--eta-min", type=float, default=1e-2)
    p.add_argument("--eta-max", type=float, default=1e4)
    p.add_argument("--steps", type=int, default=21)
    p.add_argument("--eta-grid", default=None, help="explicit comma-separated eta values")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.set_defaults(func=cmd_eta_sweep)

    p = sub.add_parser("norm", help="print the open-loop norm of a plant")
    p.add_argument("plant")
    p.add_argument("--kind", choices=["h2", "hinf"], required=True)
    p.set_defaults(func=cmd_norm)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
