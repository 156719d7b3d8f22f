"""Convergence studies with manufactured solutions and report emission.

Levels of a study may run on a thread pool; the report is always assembled
in level order, so its content does not depend on scheduling.
"""

from __future__ import annotations

import math
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Literal, TypeVar

import numpy as np
import pandas as pd

from src.core import elliptic1d
from src.core.logging import EventType, get_logger, log_solver_event
from src.core.manufactured import (
    CASES_1D,
    CASES_2D,
    ManufacturedCase1D,
    ManufacturedCase2D,
    UnknownCaseError,
    get_case,
)
from src.core.mesh1d import CenterPlacement, Grid1DField, Mesh1D, gen_random, gen_uniform
from src.core.mesh2d import StaggeredMesh2D, gen_perturbed, gen_rect, gen_tri_hex
from src.core.ops2d import (
    EdgeField,
    curl_norm,
    dual_cell_l2_error,
    dual_l2,
    edge_l2_norm,
    restrict_dual_points,
    restrict_velocity,
)
from src.core.schemas import (
    CSV_COLUMNS,
    ConsistencyRecord,
    ConsistencyReport,
    ConvergenceReport,
    LevelRecord,
    StudyInvariantError,
)
from src.core.stokes2d import solve_stokes, structural_violations, truncation_diagnostics

logger = get_logger(__name__)

__all__ = [
    "CASES_1D",
    "CASES_2D",
    "DegenerateRateError",
    "UnknownCaseError",
    "fit_rate",
    "get_case",
    "make_mesh_1d",
    "make_mesh_2d",
    "run_1d_study",
    "run_2d_study",
    "run_consistency_study",
    "write_csv",
    "write_gnuplot",
    "write_json",
]

Family1D = Literal["uniform", "random", "midpoint"]
Family2D = Literal["rect", "perturbed", "trihex"]

FAMILIES_1D: tuple[str, ...] = ("uniform", "random", "midpoint")
FAMILIES_2D: tuple[str, ...] = ("rect", "perturbed", "trihex")

T = TypeVar("T")


class DegenerateRateError(ValueError):
    """Raised when a rate cannot be fitted from the given (h, error) pairs."""


# ============================================================
# Rate fitting
# ============================================================


def fit_rate(pairs: Sequence[tuple[float, float]]) -> float:
    """Least-squares slope of log(error) against log(h).

    Args:
        pairs: At least three (h, error) pairs.

    Returns:
        Fitted order; ``inf`` when any error is exactly zero.

    Raises:
        DegenerateRateError: On fewer than three pairs, nonpositive h, negative
            or non-finite errors, or a single distinct h.

    Examples:
        >>> fit_rate([(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)])
        2.0
    """
    if len(pairs) < 3:
        raise DegenerateRateError(f"need at least 3 (h, error) pairs, got {len(pairs)}")
    h = np.array([p[0] for p in pairs], dtype=np.float64)
    err = np.array([p[1] for p in pairs], dtype=np.float64)
    if not (np.all(np.isfinite(h)) and np.all(np.isfinite(err))):
        raise DegenerateRateError("h and errors must be finite")
    if np.any(h <= 0.0) or np.any(err < 0.0):
        raise DegenerateRateError("h must be positive and errors nonnegative")
    if np.any(err == 0.0):
        return math.inf
    if np.unique(h).size < 2:
        raise DegenerateRateError("need at least two distinct h values")
    slope = np.polyfit(np.log(h), np.log(err), 1)[0]
    return float(round(slope, 12))


def _rates(
    records: Sequence[LevelRecord], norms: Sequence[str]
) -> tuple[dict[str, float], dict[str, float]]:
    rates: dict[str, float] = {}
    constants: dict[str, float] = {}
    for norm in norms:
        values = [getattr(r, norm) for r in records]
        if any(v is None for v in values) or len(records) < 3:
            continue
        rate = fit_rate([(r.h, float(v)) for r, v in zip(records, values, strict=True)])
        rates[norm] = rate
        finest = records[-1]
        if math.isfinite(rate):
            constants[norm] = float(getattr(finest, norm)) / finest.h**rate
    return rates, constants


def _map_levels(fn: Callable[[int, int], T], levels: Sequence[int], workers: int) -> list[T]:
    indexed = list(enumerate(levels))
    if workers <= 1:
        return [fn(k, n) for k, n in indexed]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda item: fn(*item), indexed))


# ============================================================
# Mesh families
# ============================================================


def make_mesh_1d(family: str, N: int, ratio: float = 3.0, seed: int = 7) -> Mesh1D:
    """Build a 1D mesh of the named family."""
    if family == "uniform":
        return gen_uniform(N)
    if family == "random":
        return gen_random(N, ratio, seed, CenterPlacement.RANDOM)
    if family == "midpoint":
        return gen_random(N, ratio, seed, CenterPlacement.MIDPOINT)
    raise ValueError(f"unknown 1D mesh family {family!r}; available: {list(FAMILIES_1D)}")


def make_mesh_2d(family: str, n: int, amplitude: float = 0.1, seed: int = 7) -> StaggeredMesh2D:
    """Build a 2D mesh with ``n`` primary centers per side (h = 1/(n - 1))."""
    if family == "rect":
        return gen_rect(n, n)
    if family == "perturbed":
        return gen_perturbed(n, n, amplitude, seed)
    if family == "trihex":
        return gen_tri_hex(n - 1)
    raise ValueError(f"unknown 2D mesh family {family!r}; available: {list(FAMILIES_2D)}")


# ============================================================
# Studies
# ============================================================


def _resolve_1d(case: str | ManufacturedCase1D) -> ManufacturedCase1D:
    resolved = get_case(case, 1) if isinstance(case, str) else case
    assert isinstance(resolved, ManufacturedCase1D)
    return resolved


def _resolve_2d(case: str | ManufacturedCase2D) -> ManufacturedCase2D:
    resolved = get_case(case, 2) if isinstance(case, str) else case
    assert isinstance(resolved, ManufacturedCase2D)
    return resolved


def run_1d_study(
    case: str | ManufacturedCase1D,
    mesh_family: str,
    levels: Sequence[int],
    ratio: float = 3.0,
    seed: int = 7,
    solver: Literal["direct", "cg"] = "direct",
    tol: float = 1e-12,
    workers: int = 1,
) -> ConvergenceReport:
    """Solve the 1D scheme on each level and fit rates of |u_h - R_h u|.

    Errors are the discrete L2 and semi-H1 norms of u_h - R_h u; ``tau_f`` is
    the sup-norm of the flux truncation. ``h`` is the nominal 1/N.
    """
    manufactured = _resolve_1d(case)
    log_solver_event(
        EventType.STUDY_STARTED, dimension=1, case=manufactured.name, family=mesh_family
    )

    def level(k: int, N: int) -> LevelRecord:
        mesh = make_mesh_1d(mesh_family, N, ratio, seed)
        start = time.perf_counter()
        solution = elliptic1d.assemble_and_solve(mesh, manufactured.f, solver=solver, tol=tol)
        seconds = time.perf_counter() - start
        exact = elliptic1d.restrict_primal(mesh, manufactured.u)
        error = Grid1DField.primary(solution.u_h.values - exact.values)
        err_l2, err_h1 = elliptic1d.norms(mesh, error)
        tau = elliptic1d.flux_truncation(mesh, manufactured.u, manufactured.u_x).values
        record = LevelRecord(
            level=k,
            h=1.0 / N,
            n_dof=N,
            err_l2=err_l2,
            err_h1=err_h1,
            tau_f=float(np.abs(tau).max()),
            cg_iters=solution.solve_report.iterations,
            seconds=seconds,
        )
        logger.debug(EventType.STUDY_LEVEL_COMPLETED.value, dimension=1, level=k, N=N)
        return record

    records = _map_levels(level, sorted(levels), workers)
    rates, constants = _rates(records, ("err_l2", "err_h1", "tau_f"))
    report = ConvergenceReport(
        dimension=1,
        case=manufactured.name,
        mesh_family=mesh_family,
        seed=None if mesh_family == "uniform" else seed,
        parameters={"ratio": ratio, "solver": solver, "tol": tol},
        levels=records,
        rates=rates,
        constants=constants,
    )
    log_solver_event(EventType.STUDY_COMPLETED, dimension=1, family=mesh_family, **rates)
    return report


def run_2d_study(
    case: str | ManufacturedCase2D,
    mesh_family: str,
    levels: Sequence[int],
    amplitude: float = 0.1,
    seed: int = 7,
    tol: float = 1e-12,
    workers: int = 1,
) -> ConvergenceReport:
    """Solve the Stokes scheme on each level and fit rates of u_h - R_h u.

    ``err_l2`` is the edge L2 norm over trusted edges, ``err_h1`` the curl
    norm over trusted duals; the restricted velocity is only first order in
    the wall layer. Meshes too coarse to have a trusted region report zero.
    Structural invariants are re-checked on every level.

    Raises:
        StudyInvariantError: If a solve violates divergence, momentum or
            energy invariants.
    """
    manufactured = _resolve_2d(case)
    log_solver_event(
        EventType.STUDY_STARTED, dimension=2, case=manufactured.name, family=mesh_family
    )

    def level(k: int, n: int) -> LevelRecord:
        mesh = make_mesh_2d(mesh_family, n, amplitude, seed)
        exact = manufactured.on_patch(mesh.patch)
        solution = solve_stokes(mesh, exact.psi_f, exact.phi_f, tol=tol)
        violations = structural_violations(mesh, solution, tol)
        if violations:
            raise StudyInvariantError(f"level {k} (n={n}): " + "; ".join(violations))
        error = EdgeField(solution.u.values - restrict_velocity(mesh, exact.psi).values)
        trunc = truncation_diagnostics(mesh, exact)
        record = LevelRecord(
            level=k,
            h=mesh.h,
            n_dof=mesh.n_v,
            err_l2=edge_l2_norm(mesh, error, mesh.trusted_edge_mask),
            err_h1=curl_norm(mesh, error, mesh.trusted_dual_mask),
            tau_p=trunc.max_tau_p,
            tau_f=trunc.max_tau_f,
            tau_omega=trunc.max_tau_omega,
            cg_iters=solution.solve_report.iterations,
            seconds=solution.seconds,
            boundary_slip=solution.boundary_slip,
            momentum_residual=solution.momentum_residual_inf,
        )
        logger.debug(EventType.STUDY_LEVEL_COMPLETED.value, dimension=2, level=k, n=n)
        return record

    records = _map_levels(level, sorted(levels), workers)
    rates, constants = _rates(records, ("err_l2", "err_h1", "tau_p", "tau_f", "tau_omega"))
    report = ConvergenceReport(
        dimension=2,
        case=manufactured.name,
        mesh_family=mesh_family,
        seed=seed if mesh_family == "perturbed" else None,
        parameters={"amplitude": amplitude, "tol": tol},
        levels=records,
        rates=rates,
        constants=constants,
    )
    log_solver_event(EventType.STUDY_COMPLETED, dimension=2, family=mesh_family, **rates)
    return report


def run_consistency_study(
    case: str | ManufacturedCase2D,
    mesh_family: str,
    levels: Sequence[int],
    amplitude: float = 0.1,
    seed: int = 7,
) -> ConsistencyReport:
    """Restriction errors of the exact streamfunction and vorticity per level.

    ``psi_error`` integrates (psi_v - psi)^2 over dual cells; ``omega_error``
    is the dual L2 norm of curl(R_h u) - omega(x_v) over interior duals.
    """
    manufactured = _resolve_2d(case)
    records: list[ConsistencyRecord] = []
    for k, n in enumerate(sorted(levels)):
        mesh = make_mesh_2d(mesh_family, n, amplitude, seed)
        exact = manufactured.on_patch(mesh.patch)
        psi_h = restrict_dual_points(mesh, exact.psi)
        tau = truncation_diagnostics(mesh, exact).tau_omega.values
        records.append(
            ConsistencyRecord(
                level=k,
                h=mesh.h,
                psi_error=dual_cell_l2_error(mesh, psi_h, exact.psi),
                omega_error=dual_l2(mesh, tau, mesh.trusted_dual_mask),
            )
        )
    rates: dict[str, float] = {}
    if len(records) >= 3:
        for name in ("psi_error", "omega_error"):
            rates[name] = fit_rate([(r.h, getattr(r, name)) for r in records])
    return ConsistencyReport(
        dimension=2,
        case=manufactured.name,
        mesh_family=mesh_family,
        records=records,
        rates=rates,
    )


# ============================================================
# Writers
# ============================================================


def to_frame(report: ConvergenceReport, include_timings: bool = False) -> pd.DataFrame:
    """Study table with the CSV column order.

    Timings are blanked unless requested so repeated runs give identical files.
    """
    frame = pd.DataFrame(
        [record.model_dump(include=set(CSV_COLUMNS)) for record in report.levels],
        columns=list(CSV_COLUMNS),
    )
    if not include_timings:
        frame["seconds"] = None
    return frame


def format_summary(report: ConvergenceReport | ConsistencyReport) -> list[str]:
    """Summary lines with fitted rates, ``#``-prefixed for CSV trailers."""
    lines = [
        f"# case={report.case} family={report.mesh_family} dimension={report.dimension}",
    ]
    lines += [f"# rate {name} {value:.6g}" for name, value in report.rates.items()]
    if isinstance(report, ConvergenceReport):
        lines += [f"# constant {name} {value:.6g}" for name, value in report.constants.items()]
    return lines


def write_csv(
    report: ConvergenceReport, path: str | Path, include_timings: bool = False
) -> Path:
    """Table at 17 significant digits followed by the rate summary."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    table = to_frame(report, include_timings).to_csv(
        index=False, float_format="%.17g", na_rep="", lineterminator="\n"
    )
    target.write_text(table + "\n".join(format_summary(report)) + "\n", encoding="utf-8")
    return target


def write_gnuplot(report: ConvergenceReport, directory: str | Path, stem: str) -> list[Path]:
    """One ``h error`` two-column file per reported norm."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for norm in ("err_l2", "err_h1", "tau_p", "tau_f", "tau_omega"):
        values = [getattr(r, norm) for r in report.levels]
        if any(v is None for v in values):
            continue
        target = out / f"{stem}_{norm}.dat"
        rows = [f"# h {norm}"] + [
            f"{r.h:.17g} {float(v):.17g}" for r, v in zip(report.levels, values, strict=True)
        ]
        target.write_text("\n".join(rows) + "\n", encoding="utf-8")
        written.append(target)
    return written


def write_json(report: ConvergenceReport | ConsistencyReport, path: str | Path) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return target
