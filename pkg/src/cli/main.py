"""Command-line entry point.

Subcommands: ``mesh gen|check|info``, ``solve1d``, ``solve2d``,
``converge 1d|2d`` and ``identities``. Tables and summaries go to stdout,
logs to stderr. Exit status: 0 success, 1 validation failure, 2 solver
failure, 64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, NoReturn

from pydantic import ValidationError

from src import __version__
from src.cli.models import Command, ExitCode, RunConfig
from src.core import elliptic1d, harness, mesh1d, mesh2d
from src.core.config import ConfigError, Settings, load_settings
from src.core.identities import run_identity_suite
from src.core.linalg import LinalgError
from src.core.logging import EventType, LogContext, configure_logging, get_logger, log_error
from src.core.manufactured import ManufacturedCase1D, ManufacturedCase2D, UnknownCaseError
from src.core.ops2d import EdgeField, curl_norm, dump_field, edge_l2_norm, restrict_velocity
from src.core.schemas import StudyInvariantError
from src.core.stokes2d import solve_stokes, structural_violations

logger = get_logger(__name__)

DEFAULT_CASE_1D = "sinpi"
DEFAULT_CASE_2D = "sin2"


class UsageError(Exception):
    """Raised when the command line cannot be parsed or is inconsistent."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        self.print_help(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


# =============================================================================
# Argument parsing
# =============================================================================


def _levels(text: str) -> list[int]:
    try:
        return [int(tok) for tok in text.replace(",", " ").split()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"levels must be integers, got {text!r}") from e


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--mesh", help="uniform|random|midpoint|rect|perturbed|trihex|file:<path>")
    common.add_argument("--n", type=int, help="Cells (1D) or primary centers per side (2D)")
    common.add_argument("--nx", type=int, help="Primary centers along x (rect, perturbed)")
    common.add_argument("--ny", type=int, help="Primary centers along y (rect, perturbed)")
    common.add_argument("--ratio", type=float, help="Quasi-uniformity bound of random 1D meshes")
    common.add_argument("--amplitude", type=float, help="Perturbation amplitude, below 0.25")
    common.add_argument("--seed", type=int, help="Mesh and sample seed")
    common.add_argument("--levels", type=_levels, help="Comma-separated refinement levels")
    common.add_argument("--tol", type=float, help="CG relative residual tolerance")
    common.add_argument("--out", type=Path, help="Output directory (default $STAGFV_OUT or out)")
    common.add_argument("--case", help="Manufactured case name")
    common.add_argument("--force", action="store_true", help="Accept meshes failing validation")
    common.add_argument("--workers", type=int, help="Threads used for study levels")
    common.add_argument("--timings", action="store_true", help="Write wall times into CSV")
    common.add_argument("--solver", choices=["direct", "cg"], default="direct")
    common.add_argument("--samples", type=int, help="Random fields per identity check")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stagfv", description="Staggered FD/FV solvers and convergence studies")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", type=Path, help="YAML file with run defaults")
    parser.add_argument("--log-json", action="store_true", help="Emit JSON logs on stderr")
    parser.add_argument(
        "--log-level", default=os.environ.get("STAGFV_LOG_LEVEL", "WARNING"), help="Log level"
    )
    common = _common_flags()
    commands = parser.add_subparsers(dest="command", required=True)

    mesh = commands.add_parser("mesh", help="Generate, check or describe meshes")
    actions = mesh.add_subparsers(dest="action", required=True)
    gen = actions.add_parser("gen", parents=[common], help="Write a generated mesh")
    gen.add_argument("path", nargs="?", type=Path, help="Target file (stdout when omitted)")
    for name, text in (("check", "Validate a mesh file"), ("info", "Summarize a mesh file")):
        sub = actions.add_parser(name, parents=[common], help=text)
        sub.add_argument("path", type=Path)

    commands.add_parser("solve1d", parents=[common], help="Solve the 1D elliptic problem")
    commands.add_parser("solve2d", parents=[common], help="Solve the 2D Stokes problem")
    converge = commands.add_parser("converge", parents=[common], help="Run a convergence study")
    converge.add_argument("action", choices=["1d", "2d"])
    converge.add_argument(
        "--consistency", action="store_true", help="Also run the restriction consistency study"
    )
    commands.add_parser("identities", parents=[common], help="Check exact discrete identities")
    return parser


def build_run_config(args: argparse.Namespace, settings: Settings) -> RunConfig:
    """Merge parsed flags over configured defaults and validate the result."""
    command = Command(args.command)
    dimension = 1 if command is Command.SOLVE1D or getattr(args, "action", None) == "1d" else 2

    def pick(value: Any, default: Any) -> Any:
        return default if value is None else value

    levels_default = settings.levels_1d if dimension == 1 else settings.levels_2d
    return RunConfig(
        command=command,
        action=getattr(args, "action", None),
        path=getattr(args, "path", None),
        mesh=args.mesh,
        n=args.n,
        nx=args.nx,
        ny=args.ny,
        ratio=pick(args.ratio, settings.ratio),
        amplitude=pick(args.amplitude, settings.amplitude),
        seed=pick(args.seed, settings.seed),
        levels=pick(args.levels, levels_default),
        tol=pick(args.tol, settings.tol),
        out=pick(args.out, settings.out_dir),
        case=args.case,
        force=args.force,
        workers=pick(args.workers, settings.workers),
        timings=args.timings,
        solver=args.solver,
        samples=pick(args.samples, settings.identity_samples),
        consistency=getattr(args, "consistency", False),
        quality_rules=settings.quality_rules,
    )


# =============================================================================
# Mesh helpers
# =============================================================================


def _is_1d_text(text: str) -> bool:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            return stripped.startswith("mesh1d")
    return False


def _require_n(cfg: RunConfig) -> int:
    n = cfg.n if cfg.n is not None else cfg.nx
    if n is None:
        raise UsageError(f"{cfg.command.value} needs --n")
    return n


def _mesh_1d(cfg: RunConfig) -> mesh1d.Mesh1D:
    if (path := cfg.mesh_file) is not None:
        mesh = mesh1d.load(path)
        issues = mesh1d.validate(mesh, ratio_bound=cfg.ratio)
        if issues and not cfg.force:
            raise mesh1d.Mesh1DError("; ".join(issues))
        return mesh
    assert cfg.family is not None
    return harness.make_mesh_1d(cfg.family, _require_n(cfg), cfg.ratio, cfg.seed)


def _mesh_2d(cfg: RunConfig) -> mesh2d.StaggeredMesh2D:
    if (path := cfg.mesh_file) is not None:
        return mesh2d.load(path, force=cfg.force, rules_path=cfg.quality_rules)
    assert cfg.family is not None
    if cfg.family in ("rect", "perturbed") and (cfg.nx is not None or cfg.ny is not None):
        nx = cfg.nx or _require_n(cfg)
        ny = cfg.ny or nx
        if cfg.family == "rect":
            return mesh2d.gen_rect(nx, ny)
        return mesh2d.gen_perturbed(nx, ny, cfg.amplitude, cfg.seed)
    return harness.make_mesh_2d(cfg.family, _require_n(cfg), cfg.amplitude, cfg.seed)


def _print_pairs(pairs: dict[str, Any]) -> None:
    for key, value in pairs.items():
        text = f"{value:.6g}" if isinstance(value, float) else str(value)
        print(f"{key:<22} {text}")


# =============================================================================
# Commands
# =============================================================================


def cmd_mesh(cfg: RunConfig) -> ExitCode:
    if cfg.action == "gen":
        if cfg.dimension == 1:
            text = mesh1d.to_text(_mesh_1d(cfg))
        else:
            text = mesh2d.to_text(_mesh_2d(cfg))
        if cfg.path is None:
            sys.stdout.write(text)
        else:
            cfg.path.parent.mkdir(parents=True, exist_ok=True)
            cfg.path.write_text(text, encoding="utf-8")
            print(cfg.path)
        return ExitCode.OK

    assert cfg.path is not None
    text = cfg.path.read_text(encoding="utf-8")
    if _is_1d_text(text):
        m1 = mesh1d.from_text(text)
        issues = mesh1d.validate(m1, ratio_bound=cfg.ratio)
        if cfg.action == "info":
            _print_pairs(
                {
                    "N": m1.N,
                    "h_max": m1.h_max,
                    "quasi_uniformity": m1.quasi_uniformity(),
                }
            )
            return ExitCode.OK
        for issue in issues:
            print(issue)
        print("mesh1d " + ("OK" if not issues else "FAIL"))
        return ExitCode.OK if not issues else ExitCode.VALIDATION_FAILED

    m2 = mesh2d.from_text(text, force=True, rules_path=cfg.quality_rules)
    if cfg.action == "info":
        _print_pairs(m2.info())
        return ExitCode.OK
    report = mesh2d.validate(m2, rules_path=cfg.quality_rules)
    for check in report.checks:
        print(check.describe())
    print("mesh2d " + ("OK" if report.passed else "FAIL"))
    return ExitCode.OK if report.passed else ExitCode.VALIDATION_FAILED


def cmd_solve1d(cfg: RunConfig) -> ExitCode:
    case = harness.get_case(cfg.case or DEFAULT_CASE_1D, 1)
    assert isinstance(case, ManufacturedCase1D)
    mesh = _mesh_1d(cfg)
    solution = elliptic1d.assemble_and_solve(mesh, case.f, solver=cfg.solver, tol=cfg.tol)
    exact = elliptic1d.restrict_primal(mesh, case.u)
    err_l2, err_h1 = elliptic1d.norms(
        mesh, mesh1d.Grid1DField.primary(solution.u_h.values - exact.values)
    )
    _print_pairs(
        {
            "case": case.name,
            "N": mesh.N,
            "h_max": mesh.h_max,
            "err_l2": err_l2,
            "err_h1": err_h1,
            "iterations": solution.solve_report.iterations,
            "relative_residual": solution.solve_report.relative_residual,
        }
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    target = cfg.out / f"solve1d_{case.name}_N{mesh.N}.dat"
    rows = ["# x u_h u"] + [
        f"{x:.17g} {a:.17g} {b:.17g}"
        for x, a, b in zip(mesh.x_center, solution.u_h.values, exact.values, strict=True)
    ]
    target.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return ExitCode.OK


def cmd_solve2d(cfg: RunConfig) -> ExitCode:
    case = harness.get_case(cfg.case or DEFAULT_CASE_2D, 2)
    assert isinstance(case, ManufacturedCase2D)
    mesh = _mesh_2d(cfg)
    exact = case.on_patch(mesh.patch)
    solution = solve_stokes(mesh, exact.psi_f, exact.phi_f, tol=cfg.tol)
    violations = structural_violations(mesh, solution, cfg.tol)
    error = EdgeField(solution.u.values - restrict_velocity(mesh, exact.psi).values)
    _print_pairs(
        {
            "case": case.name,
            "family": mesh.family,
            "n_v": mesh.n_v,
            "h": mesh.h,
            "err_l2": edge_l2_norm(mesh, error, mesh.trusted_edge_mask),
            "err_curl": curl_norm(mesh, error, mesh.trusted_dual_mask),
            "cg_iters": solution.solve_report.iterations,
            "momentum_residual": solution.momentum_residual_inf,
            "residual_scale": solution.residual_scale,
            "boundary_slip": solution.boundary_slip,
        }
    )
    cfg.out.mkdir(parents=True, exist_ok=True)
    stem = f"solve2d_{case.name}_{mesh.family}"
    fields = {"psi": solution.psi, "u": solution.u, "omega": solution.omega, "p": solution.p}
    for name, field in fields.items():
        (cfg.out / f"{stem}_{name}.field").write_text(dump_field(field), encoding="utf-8")
    for violation in violations:
        print(f"violation: {violation}", file=sys.stderr)
    return ExitCode.SOLVER_FAILED if violations else ExitCode.OK


def cmd_converge(cfg: RunConfig) -> ExitCode:
    assert cfg.family is not None
    if cfg.dimension == 1:
        report = harness.run_1d_study(
            cfg.case or DEFAULT_CASE_1D,
            cfg.family,
            cfg.levels,
            ratio=cfg.ratio,
            seed=cfg.seed,
            solver=cfg.solver,
            tol=cfg.tol,
            workers=cfg.workers,
        )
    else:
        report = harness.run_2d_study(
            cfg.case or DEFAULT_CASE_2D,
            cfg.family,
            cfg.levels,
            amplitude=cfg.amplitude,
            seed=cfg.seed,
            tol=cfg.tol,
            workers=cfg.workers,
        )

    stem = f"converge{report.dimension}d_{report.case}_{report.mesh_family}"
    harness.write_csv(report, cfg.out / f"{stem}.csv", include_timings=cfg.timings)
    harness.write_json(report, cfg.out / f"{stem}.json")
    harness.write_gnuplot(report, cfg.out, stem)

    table = harness.to_frame(report, include_timings=cfg.timings)
    print(table.to_string(index=False, na_rep="", float_format=lambda v: f"{v:.4e}"))
    for line in harness.format_summary(report):
        print(line.lstrip("# "))

    if cfg.consistency and cfg.dimension == 2:
        consistency = harness.run_consistency_study(
            report.case, cfg.family, cfg.levels, amplitude=cfg.amplitude, seed=cfg.seed
        )
        harness.write_json(consistency, cfg.out / f"{stem}_consistency.json")
        for line in harness.format_summary(consistency)[1:]:
            print("consistency " + line.lstrip("# "))
    return ExitCode.OK


def cmd_identities(cfg: RunConfig) -> ExitCode:
    mesh = _mesh_2d(cfg)
    report = run_identity_suite(mesh, samples=cfg.samples, seed=cfg.seed)
    print(f"family {report.family} cells {report.n_cells} samples {report.samples}")
    for line in report.lines():
        print(line)
    return ExitCode.OK if report.passed else ExitCode.VALIDATION_FAILED


COMMANDS: dict[Command, Callable[[RunConfig], ExitCode]] = {
    Command.MESH: cmd_mesh,
    Command.SOLVE1D: cmd_solve1d,
    Command.SOLVE2D: cmd_solve2d,
    Command.CONVERGE: cmd_converge,
    Command.IDENTITIES: cmd_identities,
}


# =============================================================================
# Entry points
# =============================================================================


def main(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return ExitCode.USAGE.value
    except SystemExit as e:
        # --help and --version
        return int(e.code or 0)

    configure_logging(json_logs=args.log_json or None, log_level=args.log_level)

    try:
        cfg = build_run_config(args, load_settings(args.config))
    except (ConfigError, ValidationError) as e:
        print(f"stagfv: {e}", file=sys.stderr)
        return ExitCode.USAGE.value

    with LogContext(command=cfg.command.value, action=cfg.action):
        try:
            return COMMANDS[cfg.command](cfg).value
        except (UsageError, UnknownCaseError, FileNotFoundError) as e:
            print(f"stagfv: {e}", file=sys.stderr)
            return ExitCode.USAGE.value
        except (mesh1d.Mesh1DError, mesh2d.Mesh2DError) as e:
            log_error(EventType.MESH_VALIDATION_FAILED, e, command=cfg.command.value)
            print(f"stagfv: {e}", file=sys.stderr)
            return ExitCode.VALIDATION_FAILED.value
        except (LinalgError, StudyInvariantError, harness.DegenerateRateError) as e:
            log_error(EventType.SOLVER_NOT_CONVERGED, e, command=cfg.command.value)
            print(f"stagfv: {e}", file=sys.stderr)
            return ExitCode.SOLVER_FAILED.value


def run() -> None:
    """Console-script entry point."""
    sys.exit(main())


if __name__ == "__main__":
    run()
