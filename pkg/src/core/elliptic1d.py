"""Cell-centered scheme for -u_xx = f on (0, 1) with u(0) = u(1) = 0.

Discrete gradients map primary to dual values and back, with the ghost
convention u_0 = u_{N+1} = 0 standing in for the Dirichlet data. The scheme
-grad_dual(grad_primal(u)) = f is assembled row-scaled by h_i so the matrix
is symmetric.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.core.linalg import SolveReport, SparseSpd, cg_solve, thomas_solve
from src.core.logging import EventType, get_logger
from src.core.mesh1d import FloatArray, Grid1DField, GridKind, KindMismatchError, Mesh1D

logger = get_logger(__name__)

Function1D = Callable[[FloatArray], FloatArray]

GAUSS_POINTS = 5
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(GAUSS_POINTS)


@dataclass(frozen=True)
class Elliptic1DSolution:
    """Discrete solution with its forcing and solve report."""

    u_h: Grid1DField
    f_h: Grid1DField
    solve_report: SolveReport


@dataclass(frozen=True)
class TridiagonalSystem:
    """Row-scaled scheme matrix as bands plus the same matrix in CSR form."""

    lower: FloatArray
    diag: FloatArray
    upper: FloatArray
    matrix: SparseSpd


# ============================================================
# Operators
# ============================================================


def grad_primal(mesh: Mesh1D, u: Grid1DField) -> Grid1DField:
    """(u_{i+1} - u_i) / h_{i+1/2} on every face, ghosts zero."""
    values = u.require(mesh, GridKind.PRIMARY)
    padded = np.concatenate([[0.0], values, [0.0]])
    return Grid1DField.dual(np.diff(padded) / mesh.h_half)


def grad_dual(mesh: Mesh1D, v: Grid1DField) -> Grid1DField:
    """(v_{i+1/2} - v_{i-1/2}) / h_i on every cell."""
    values = v.require(mesh, GridKind.DUAL)
    return Grid1DField.primary(np.diff(values) / mesh.h)


def inner(mesh: Mesh1D, a: Grid1DField, b: Grid1DField) -> float:
    """Length-weighted L2 pairing of two fields of the same kind.

    Raises:
        KindMismatchError: If the kinds differ.
    """
    if a.kind is not b.kind:
        raise KindMismatchError(f"cannot pair {a.kind.value} with {b.kind.value}")
    weights = mesh.h if a.kind is GridKind.PRIMARY else mesh.h_half
    return float(np.sum(a.require(mesh, a.kind) * b.require(mesh, b.kind) * weights))


def norms(mesh: Mesh1D, u: Grid1DField) -> tuple[float, float]:
    """Discrete L2 norm and semi-H1 norm of a primary field."""
    u.require(mesh, GridKind.PRIMARY)
    g = grad_primal(mesh, u)
    return float(np.sqrt(inner(mesh, u, u))), float(np.sqrt(inner(mesh, g, g)))


# ============================================================
# Restriction and quadrature
# ============================================================


def restrict_primal(mesh: Mesh1D, u: Function1D) -> Grid1DField:
    """Point values u(x_i)."""
    return Grid1DField.primary(np.asarray(u(mesh.x_center), dtype=np.float64))


def restrict_dual(mesh: Mesh1D, w: Function1D) -> Grid1DField:
    """Point values w(x_{i+1/2})."""
    return Grid1DField.dual(np.asarray(w(mesh.x_face), dtype=np.float64))


def _gauss_points(left: FloatArray, right: FloatArray) -> tuple[FloatArray, FloatArray]:
    mid = 0.5 * (left + right)
    half = 0.5 * (right - left)
    points = mid[:, None] + half[:, None] * _NODES[None, :]
    return points, half


def cell_averages(mesh: Mesh1D, f: Function1D) -> Grid1DField:
    """(1/h_i) times the 5-point Gauss-Legendre integral of f over each K_i."""
    points, half = _gauss_points(mesh.x_face[:-1], mesh.x_face[1:])
    values = np.asarray(f(points.ravel()), dtype=np.float64).reshape(points.shape)
    integrals = half * (values @ _WEIGHTS)
    return Grid1DField.primary(integrals / mesh.h)


def flux_truncation(mesh: Mesh1D, u: Function1D, u_x: Function1D) -> Grid1DField:
    """restrict_dual(u_x) - grad_primal(restrict_primal(u))."""
    exact = restrict_dual(mesh, u_x).values
    approx = grad_primal(mesh, restrict_primal(mesh, u)).values
    return Grid1DField.dual(exact - approx)


def consistency_errors(mesh: Mesh1D, u: Function1D, u_x: Function1D) -> tuple[float, float]:
    """L2 distance of the piecewise-constant restriction and its gradient to u, u_x.

    The first value integrates (u_i - u)^2 over primary cells, the second
    (grad_primal(R u) - u_x)^2 over dual cells, both with 5-point Gauss.
    """
    restricted = restrict_primal(mesh, u).values
    points, half = _gauss_points(mesh.x_face[:-1], mesh.x_face[1:])
    diff = restricted[:, None] - np.asarray(u(points.ravel())).reshape(points.shape)
    primal_err = float(np.sum(half * ((diff**2) @ _WEIGHTS)))

    grads = grad_primal(mesh, restrict_primal(mesh, u)).values
    ends = np.concatenate([[0.0], mesh.x_center, [1.0]])
    points, half = _gauss_points(ends[:-1], ends[1:])
    diff = grads[:, None] - np.asarray(u_x(points.ravel())).reshape(points.shape)
    dual_err = float(np.sum(half * ((diff**2) @ _WEIGHTS)))
    return float(np.sqrt(primal_err)), float(np.sqrt(dual_err))


# ============================================================
# Assembly and solve
# ============================================================


def assemble(mesh: Mesh1D) -> TridiagonalSystem:
    """Row i scaled by h_i: coupling 1/h_{i+1/2} between cells i and i+1.

    Examples:
        >>> from src.core.mesh1d import gen_uniform
        >>> system = assemble(gen_uniform(2))
        >>> system.diag.tolist(), system.upper.tolist()
        ([6.0, 6.0], [-2.0])
    """
    inv = 1.0 / mesh.h_half
    diag = inv[:-1] + inv[1:]
    off = -inv[1:-1]
    return TridiagonalSystem(
        lower=off.copy(),
        diag=diag,
        upper=off.copy(),
        matrix=SparseSpd.from_tridiagonal(off, diag, off),
    )


def assemble_and_solve(
    mesh: Mesh1D,
    f: Function1D | Grid1DField,
    solver: Literal["direct", "cg"] = "direct",
    tol: float = 1e-12,
) -> Elliptic1DSolution:
    """Solve -grad_dual(grad_primal(u_h)) = f_h.

    Args:
        mesh: Primary/dual partition.
        f: Source as a function (averaged per cell) or as primary values.
        solver: ``"direct"`` for the Thomas path, ``"cg"`` for conjugate gradients.
        tol: CG tolerance.

    Returns:
        Elliptic1DSolution.
    """
    f_h = f if isinstance(f, Grid1DField) else cell_averages(mesh, f)
    rhs = f_h.require(mesh, GridKind.PRIMARY) * mesh.h
    system = assemble(mesh)

    if solver == "cg":
        u, report = cg_solve(system.matrix, rhs, tol=tol)
    else:
        u = thomas_solve(system.lower, system.diag, system.upper, rhs)
        b_norm = float(np.linalg.norm(rhs))
        residual = float(np.linalg.norm(system.matrix.matvec(u) - rhs))
        report = SolveReport(
            iterations=0,
            relative_residual=residual / b_norm if b_norm > 0.0 else 0.0,
            converged=True,
        )

    logger.debug(
        EventType.SOLVE_COMPLETED.value,
        scheme="elliptic1d",
        solver=solver,
        N=mesh.N,
        relative_residual=report.relative_residual,
    )
    return Elliptic1DSolution(u_h=Grid1DField.primary(u), f_h=f_h, solve_report=report)


def random_primary(mesh: Mesh1D, rng: np.random.Generator) -> Grid1DField:
    """Standard normal primary field, used by property checks."""
    return Grid1DField.primary(rng.standard_normal(mesh.N))


def random_dual(mesh: Mesh1D, rng: np.random.Generator) -> Grid1DField:
    """Standard normal dual field, used by property checks."""
    return Grid1DField.dual(rng.standard_normal(mesh.N + 1))
