"""Command-line front end.

Exit codes:

    0   success
    2   usage error (bad arguments)
    3   invalid config, family spec or generator
    4   invalid mesh
    5   file could not be read or written
    6   surface admits no negatively curved metric
    7   step size fell below dt_min
    8   flow or solver did not converge
    9   a diagnostic check failed
    10  other numerical error
"""

import argparse
import hashlib
import logging
import sys
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io
from .analysis import analysis_report, envelope_table
from .errors import (
    ConfigError,
    FamilyRangeError,
    InvalidGenerator,
    LamflowError,
    MeshError,
    NoConvergence,
    NonHyperbolic,
    NotConverged,
    StepFloorHit,
)
from .flow import FlowConfig, rescale_to_minus_one, run
from .geometry.elliptic import precondition_negative
from .geometry.generators import gen_flat_torus, gen_genus2
from .geometry.metric import curvature
from .jsonio import dumps, read_json, write_json
from .lamination import build_family, run_family, transversal_modulus

logger = logging.getLogger("lamflow")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MESH = 4
EXIT_IO = 5
EXIT_NON_HYPERBOLIC = 6
EXIT_STEP_FLOOR = 7
EXIT_NOT_CONVERGED = 8
EXIT_CHECK_FAILED = 9
EXIT_NUMERICAL = 10

GAUSS_BONNET_TOL = 1e-9


def exit_code_for(exc):
    table = [
        (ConfigError, EXIT_CONFIG),
        (InvalidGenerator, EXIT_CONFIG),
        (MeshError, EXIT_MESH),
        (NonHyperbolic, EXIT_NON_HYPERBOLIC),
        (StepFloorHit, EXIT_STEP_FLOOR),
        (NoConvergence, EXIT_NOT_CONVERGED),
        (NotConverged, EXIT_NOT_CONVERGED),
        (FamilyRangeError, EXIT_NUMERICAL),
    ]
    for cls, code in table:
        if isinstance(exc, cls):
            return code
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_NUMERICAL


def tool_version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunManifest:
    command: str
    inputs: dict
    config_digest: str
    seed: int | None
    version: str = field(default_factory=tool_version)
    wall_time: float = 0.0
    status: str = "running"

    def to_dict(self):
        return {
            "command": self.command,
            "inputs": self.inputs,
            "config_digest": self.config_digest,
            "seed": self.seed,
            "version": self.version,
            "wall_time": self.wall_time,
            "status": self.status,
        }


def config_digest(config):
    return hashlib.sha256(dumps(config.to_dict()).encode()).hexdigest()


def load_config(args):
    return io.read_config(args.config) if args.config else FlowConfig()


def _initial_u(args, mesh):
    if getattr(args, "u0", None) and getattr(args, "u0_random", None) is not None:
        raise ConfigError("--u0 and --u0-random are mutually exclusive")
    if getattr(args, "u0", None):
        return io.read_conformal_factor(args.u0, mesh.n_vertices)
    if getattr(args, "u0_random", None) is not None:
        amp = float(args.u0_random)
        rng = np.random.default_rng(args.seed)
        return rng.uniform(-amp, amp, mesh.n_vertices)
    return np.zeros(mesh.n_vertices)


def _stats(cf):
    return {"R_min": cf.R_min, "R_max": cf.R_max, "mean": cf.mean, "area": cf.total_area}


# -- commands -------------------------------------------------------------


def cmd_mesh_gen(args, out):
    if args.kind == "torus":
        if args.n < 3:
            raise _UsageError("--n must be at least 3")
        mesh = gen_flat_torus(args.n)
    else:
        if args.sub < 0:
            raise _UsageError("--sub must be non-negative")
        mesh = gen_genus2(args.sub, args.spoke)
    io.write_mesh(out / "mesh.json", mesh)
    print(f"wrote {out / 'mesh.json'}: V={mesh.n_vertices} E={mesh.n_edges} F={mesh.n_faces} chi={mesh.euler_characteristic}")
    return EXIT_OK, {}


def cmd_precondition(args, out):
    mesh = io.read_mesh(args.mesh)
    u0 = _initial_u(args, mesh)
    pre = precondition_negative(mesh, u0, tol=args.tol)
    io.write_conformal_factor(out / "u.json", pre.u)
    report = {
        "c": pre.c,
        "expected_c": 4.0 * np.pi * mesh.euler_characteristic / pre.before.total_area,
        "iterations": pre.iterations,
        "correction_norm": pre.correction_norm,
        "before": _stats(pre.before),
        "after": _stats(pre.after),
    }
    write_json(out / "report.json", report)
    print(f"max R {pre.before.R_max:.6g} -> {pre.after.R_max:.6g} in {pre.iterations} corrections")
    return EXIT_OK, {"mesh": args.mesh, "u0": args.u0}


def _probes_for(mesh, spec):
    if spec == "all":
        return None
    if spec == "auto":
        return np.unique(np.r_[0, 1, np.linspace(0, mesh.n_vertices - 1, 8).round()].astype(np.int64) % mesh.n_vertices)
    try:
        return np.array([int(x) for x in spec.split(",")], dtype=np.int64)
    except ValueError as exc:
        raise _UsageError(f"bad --probes value {spec!r}") from exc


def _failed_checks(report):
    failed = []
    if report["envelope"] is not None and not report["envelope"]["pass"]:
        failed.append("envelope")
    if report["gradient_decay"] is not None and not report["gradient_decay"]["pass"]:
        failed.append("gradient_decay")
    if report["gauss_bonnet_audit"] > GAUSS_BONNET_TOL:
        failed.append("gauss_bonnet_audit")
    return failed


def _write_analysis(out, traj, slack):
    report = analysis_report(traj, slack=slack)
    write_json(out / "analysis.json", report)
    if traj.r < 0 and traj.R_max[0] < 0 and traj.R_min[0] <= traj.R_max[0]:
        io.write_envelope_csv(out / "envelope.csv", envelope_table(traj))
    return report


def _finish_run(traj, report):
    if traj.termination == "step_floor_hit":
        return EXIT_STEP_FLOOR
    if not traj.converged:
        return EXIT_NOT_CONVERGED
    failed = _failed_checks(report)
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_run(args, out):
    config = load_config(args)
    mesh = io.read_mesh(args.mesh)
    u0 = _initial_u(args, mesh)
    if args.precondition:
        u0 = precondition_negative(mesh, u0).u
    traj = run(mesh, u0, config, probes=_probes_for(mesh, args.probes))
    io.write_trajectory(out, traj, Path(args.mesh).resolve())
    report = _write_analysis(out, traj, args.slack)
    doc = {"u_inf": traj.final.u, "r": traj.r}
    if traj.r < 0:
        u1 = rescale_to_minus_one(traj.final.u, traj.r)
        cf = curvature(mesh, u1)
        doc["u_rescaled"] = u1
        doc["rescaled"] = {**_stats(cf), "max_abs_R_plus_one": float(np.abs(cf.R + 1.0).max())}
    write_json(out / "uniformized.json", doc)
    print(f"{traj.termination} at t={traj.final.t:.6g} after {traj.n_steps} steps, sup|R-r|={traj.final.sup_dev:.3e}")
    return _finish_run(traj, report), {"mesh": args.mesh, "u0": args.u0}


def cmd_analyze(args, out):
    traj = io.read_trajectory(args.run_dir)
    report = _write_analysis(out, traj, args.slack)
    print(f"analysed {args.run_dir}: termination {traj.termination}")
    return _finish_run(traj, report), {"run_dir": args.run_dir}


def load_family(spec_path):
    spec_path = Path(spec_path)
    spec = read_json(spec_path)
    try:
        mesh_ref = Path(spec["mesh"])
        K = int(spec["K"])
        gen = dict(spec["generator"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed family spec: {exc}") from exc
    mesh_path = mesh_ref if mesh_ref.is_absolute() else spec_path.parent / mesh_ref
    mesh = io.read_mesh(mesh_path)
    if gen.get("kind") == "tabulated" and "path" in gen:
        tab_ref = Path(gen.pop("path"))
        table = read_json(tab_ref if tab_ref.is_absolute() else spec_path.parent / tab_ref)
        gen["u0"] = table["u0"]
        gen["length_scale"] = table.get("length_scale")
    return mesh, mesh_path, build_family(mesh, K, gen)


def cmd_family(args, out):
    config = load_config(args)
    mesh, mesh_path, family = load_family(args.spec)
    result = run_family(family, config, precondition=not args.no_precondition, jobs=args.jobs)
    leaves = out / "leaves"
    leaves.mkdir(exist_ok=True)
    for k, traj in enumerate(result.trajectories):
        d = leaves / f"leaf_{k:04d}"
        d.mkdir(exist_ok=True)
        io.write_trajectory(d, traj, mesh_path.resolve(), extra={"k": k, "zeta": family.zetas[k]})
    summary = {
        "K": family.K,
        "r": result.r,
        "zetas": family.zetas,
        "lipschitz": family.lipschitz(),
        "terminations": [t.termination for t in result.trajectories],
        "convergence_times": result.convergence_times,
        "all_converged": result.all_converged,
    }
    code = EXIT_OK
    try:
        rep = transversal_modulus(result)
        summary.update(rep.to_dict())
    except NotConverged as exc:
        print(str(exc), file=sys.stderr)
        code = EXIT_NOT_CONVERGED
    write_json(out / "summary.json", summary)
    print(f"{family.K} leaves, max modulus {summary.get('max_modulus', float('nan')):.6g}")
    return code, {"spec": args.spec}


# -- parser and driver ----------------------------------------------------


class _UsageError(Exception):
    pass


def _add_global(p):
    p.add_argument("--config", help="FlowConfig JSON document")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for family runs")
    p.add_argument("--seed", type=int, default=None, help="seed for random initial data (recorded)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(prog="lamflow", description="Normalized Ricci flow on discrete surfaces and families.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mesh-gen", help="write a built-in fixture mesh")
    p.add_argument("kind", choices=["torus", "genus2"])
    p.add_argument("--n", type=int, default=4, help="torus grid size (>= 3)")
    p.add_argument("--sub", type=int, default=2, help="genus-2 subdivision levels")
    p.add_argument("--spoke", type=float, default=1.0, help="genus-2 octagon spoke length")
    _add_global(p)
    p.set_defaults(func=cmd_mesh_gen)

    def add_u0(p):
        p.add_argument("mesh", help="mesh JSON file")
        p.add_argument("--u0", help="initial conformal factor file (default: zero)")
        p.add_argument("--u0-random", type=float, metavar="AMP", help="uniform random u0 in [-AMP, AMP] from --seed")

    p = sub.add_parser("precondition", help="conformally change to negative curvature")
    add_u0(p)
    p.add_argument("--tol", type=float, default=1e-10)
    _add_global(p)
    p.set_defaults(func=cmd_precondition)

    p = sub.add_parser("run", help="flow one surface")
    add_u0(p)
    p.add_argument("--precondition", action="store_true", help="precondition u0 before flowing")
    p.add_argument("--probes", default="auto", help="'auto', 'all' or comma-separated vertex ids")
    p.add_argument("--slack", type=float, default=0.1, help="envelope slack")
    _add_global(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("family", help="flow every leaf of a transversal family")
    p.add_argument("spec", help="family spec JSON")
    p.add_argument("--no-precondition", action="store_true")
    _add_global(p)
    p.set_defaults(func=cmd_family)

    p = sub.add_parser("analyze", help="re-run the analysis on a run directory")
    p.add_argument("run_dir")
    p.add_argument("--slack", type=float, default=0.1)
    _add_global(p)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        parser.error("--jobs must be at least 1")

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO

    start = time.perf_counter()
    manifest = RunManifest(args.command, {}, config_digest(FlowConfig()), args.seed)
    try:
        if args.config:
            manifest.config_digest = config_digest(load_config(args))
        code, inputs = args.func(args, out)
        manifest.inputs = {k: v for k, v in inputs.items() if v is not None}
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"lamflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LamflowError, OSError) as exc:
        code = exit_code_for(exc)
        extra = ""
        if getattr(exc, "zeta", None) is not None:
            extra = f" (leaf {exc.leaf}, zeta={exc.zeta:g})"
        print(f"error: {type(exc).__name__}: {exc}{extra}", file=sys.stderr)
    except ValueError as exc:
        code = EXIT_CONFIG
        print(f"error: {exc}", file=sys.stderr)
    manifest.wall_time = time.perf_counter() - start
    manifest.status = "ok" if code == EXIT_OK else f"exit {code}"
    try:
        write_json(out / "manifest.json", manifest.to_dict())
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    return code


if __name__ == "__main__":
    sys.exit(main())
