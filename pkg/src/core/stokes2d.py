"""Staggered scheme for the Stokes problem through the streamfunction.

The velocity space is the skew gradient of streamfunctions that vanish at
boundary duals (and at exterior vertices), so u_h is exactly divergence-free
and exactly zero on boundary edges. With forcing
f_h = perp_grad_dual(psi_f_h) + grad_cell(phi_f_h) the discrete variational
problem (curl u_h, curl v) = 2 (f_h, v) becomes, by the exact adjointness of
the operators, a clamped vertex problem: minimize |A^-1 L psi + psi_f_h|_A
over such psi. It is solved by eliminating the interior duals with a sparse
LU factorization and running CG on the Schur complement for the boundary
values of the harmonic correction r = omega_h + psi_f_h. The pressure is
phi_f_h plus the cell potential whose gradient matches perp_grad_dual(r) on
interior edges, shifted to zero area-weighted mean.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial.legendre import leggauss
from scipy.sparse.csgraph import connected_components

from src.core.linalg import SolveReport, SparseSpd, cg_solve
from src.core.logging import EventType, get_logger
from src.core.manufactured import PhysicalCase2D
from src.core.mesh2d import FloatArray, StaggeredMesh2D
from src.core.ops2d import (
    CellField,
    DiscreteForcing,
    DualField,
    EdgeField,
    Function2D,
    boundary_slip,
    curl,
    discretize_forcing,
    div,
    grad_cell,
    inner_dual,
    inner_edge,
    perp_grad_dual,
    restrict_dual_points,
    restrict_velocity,
)

logger = get_logger(__name__)

LINE_POINTS = 5
_NODES, _WEIGHTS = leggauss(LINE_POINTS)


@dataclass(frozen=True, eq=False)
class StokesSolution:
    """Discrete Stokes solution with its verification figures.

    ``momentum_residual_inf`` is measured on interior edges;
    ``residual_scale`` is ||b||_2 / (min|A_v| min l_e). ``psi`` vanishes at
    boundary duals and ``u`` on boundary edges. The pressure is normalized to
    zero area-weighted mean.
    """

    psi: DualField
    u: EdgeField
    omega: DualField
    p: CellField
    forcing: DiscreteForcing
    solve_report: SolveReport
    momentum_residual_inf: float
    residual_scale: float
    boundary_slip: float
    seconds: float


@dataclass(frozen=True, eq=False)
class TruncationDiagnostics:
    """Local truncation errors of the curl, pressure gradient and forcing.

    ``tau_omega`` is trusted at interior duals only; ``tau_p`` and ``tau_f``
    are zero on boundary edges.
    """

    tau_omega: DualField
    tau_p: EdgeField
    tau_f: EdgeField
    max_tau_omega: float
    max_tau_p: float
    max_tau_f: float


# ============================================================
# Assembly and solve
# ============================================================


def assemble_vertex_laplacian(mesh: StaggeredMesh2D) -> SparseSpd:
    """Row-scaled negative vertex Laplacian over all duals.

    Row v is the sum over EV(v) of (d_e/l_e)(psi_v - psi_other), with exterior
    vertices eliminated, so curl(perp_grad_dual(psi)) = -A^-1 L psi.

    Examples:
        >>> from src.core.mesh2d import gen_rect
        >>> L = assemble_vertex_laplacian(gen_rect(3, 3))
        >>> L.diagonal().tolist()
        [4.0, 4.0, 4.0, 4.0]
    """
    w = mesh.dual_edge_length / mesh.edge_length
    v1, v2 = mesh.edge_duals[:, 0], mesh.edge_duals[:, 1]
    both = (v1 >= 0) & (v2 >= 0)
    rows = [v1[v1 >= 0], v2[v2 >= 0], v1[both], v2[both]]
    cols = [v1[v1 >= 0], v2[v2 >= 0], v2[both], v1[both]]
    vals = [w[v1 >= 0], w[v2 >= 0], -w[both], -w[both]]
    return SparseSpd.from_triplets(
        mesh.n_v, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    )


def residual_scale(mesh: StaggeredMesh2D, rhs: FloatArray) -> float:
    return float(np.linalg.norm(rhs) / (mesh.dual_area.min() * mesh.edge_length.min()))


def clamped_streamfunction(
    mesh: StaggeredMesh2D,
    laplacian: SparseSpd,
    psi_f_h: FloatArray,
    tol: float = 1e-12,
) -> tuple[FloatArray, SolveReport]:
    """Streamfunction of the discrete Stokes velocity, zero at boundary duals.

    Minimizes sum |A_v| (omega_v + psi_f_v)^2 with omega = -A^-1 L psi. The
    correction r = omega + psi_f is discrete harmonic at interior duals, so
    r_I = -L_II^-1 L_IB r_B and r_B solves the SPD Schur system

        (diag(A_B) + M' diag(A_I) M) r_B = A_B psi_f_B - L_BI L_II^-1 A_I psi_f_I

    with M = L_II^-1 L_IB. The report is that of CG on this system.

    Raises:
        NonConvergenceError: If CG does not converge.
    """
    boundary = mesh.dual_is_boundary
    inner = ~boundary
    a_i, a_b = mesh.dual_area[inner], mesh.dual_area[boundary]
    f_i, f_b = psi_f_h[inner], psi_f_h[boundary]
    psi = np.zeros(mesh.n_v)
    if not inner.any():
        _, report = cg_solve(SparseSpd.from_dense(np.diag(a_b)), a_b * f_b, tol=tol)
        return psi, report

    coupling = laplacian.matrix[inner][:, boundary]
    solve_inner = laplacian.principal(inner).factorize()
    harmonic = solve_inner(coupling.toarray())
    base = solve_inner(a_i * f_i)
    schur = np.diag(a_b) + harmonic.T @ (a_i[:, None] * harmonic)
    schur = 0.5 * (schur + schur.T)
    rhs = a_b * f_b - np.asarray(coupling.T @ base, dtype=np.float64)
    r_b, report = cg_solve(SparseSpd.from_dense(schur), rhs, tol=tol)
    psi[inner] = solve_inner(a_i * (f_i + harmonic @ r_b))
    return psi, report


def pressure_correction(mesh: StaggeredMesh2D, r: DualField, tol: float = 1e-12) -> CellField:
    """Cell potential q with grad_cell(q) = perp_grad_dual(r) on interior edges.

    Solved in the least-squares sense with one cell pinned to zero per
    connected component of the interior-edge graph. The fit is exact when r
    is discrete harmonic at every interior dual.
    """
    g = perp_grad_dual(mesh, DualField(r.check(mesh), dirichlet=False)).values
    interior = mesh.interior_edge_mask
    c1, c2 = mesh.edge_cells[interior, 0], mesh.edge_cells[interior, 1]
    w = (mesh.edge_length / mesh.dual_edge_length)[interior]
    load = (mesh.edge_length * g)[interior]
    b = np.zeros(mesh.n_cells)
    np.add.at(b, c2, load)
    np.add.at(b, c1, -load)

    graph = sp.coo_matrix((np.ones(c1.size), (c1, c2)), shape=(mesh.n_cells, mesh.n_cells))
    _, labels = connected_components(graph, directed=False)
    pinned = np.zeros(mesh.n_cells, dtype=bool)
    pinned[np.unique(labels, return_index=True)[1]] = True

    q = np.zeros(mesh.n_cells)
    free = ~pinned
    if free.any():
        anchors = np.flatnonzero(pinned)
        stiffness = SparseSpd.from_triplets(
            mesh.n_cells,
            np.concatenate([c1, c2, c1, c2, anchors]),
            np.concatenate([c1, c2, c2, c1, anchors]),
            np.concatenate([w, w, -w, -w, np.ones(anchors.size)]),
        )
        q[free], report = cg_solve(stiffness.principal(free), b[free], tol=tol)
        logger.debug(
            "pressure_correction",
            components=int(anchors.size),
            iterations=report.iterations,
            relative_residual=report.relative_residual,
        )
    return CellField(q)


def solve_stokes(
    mesh: StaggeredMesh2D,
    psi_f: Function2D,
    phi_f: Function2D,
    tol: float = 1e-12,
) -> StokesSolution:
    """Solve the staggered Stokes scheme for forcing given by its Helmholtz potentials.

    Args:
        mesh: Validated staggered mesh.
        psi_f: Solenoidal potential of the forcing.
        phi_f: Mean-zero irrotational potential of the forcing.
        tol: CG relative residual tolerance.

    Returns:
        StokesSolution.

    Raises:
        NonConvergenceError: If CG does not converge.
    """
    start = time.perf_counter()
    logger.debug(EventType.SOLVE_STARTED.value, scheme="stokes2d", family=mesh.family, n=mesh.n_v)
    forcing = discretize_forcing(mesh, psi_f, phi_f)
    psi_f_h = forcing.psi_f_h.values
    rhs = mesh.dual_area * psi_f_h

    laplacian = assemble_vertex_laplacian(mesh)
    psi_values, report = clamped_streamfunction(mesh, laplacian, psi_f_h, tol=tol)
    psi = DualField(psi_values)
    u = perp_grad_dual(mesh, psi)
    omega = curl(mesh, u)

    q = pressure_correction(mesh, DualField(omega.values + psi_f_h, dirichlet=False), tol=tol)
    pressure = forcing.phi_f_h.values + q.values
    mean = float(np.sum(pressure * mesh.cell_area) / np.sum(mesh.cell_area))
    p = CellField(pressure - mean)

    residual = (
        -perp_grad_dual(mesh, DualField(omega.values)).values
        + grad_cell(mesh, p).values
        - forcing.f_h.values
    )
    interior = mesh.interior_edge_mask
    residual_inf = float(np.abs(residual[interior]).max()) if interior.any() else 0.0
    seconds = time.perf_counter() - start

    solution = StokesSolution(
        psi=psi,
        u=u,
        omega=omega,
        p=p,
        forcing=forcing,
        solve_report=report,
        momentum_residual_inf=residual_inf,
        residual_scale=residual_scale(mesh, rhs),
        boundary_slip=boundary_slip(mesh, u),
        seconds=seconds,
    )
    logger.debug(
        EventType.SOLVE_COMPLETED.value,
        scheme="stokes2d",
        family=mesh.family,
        iterations=report.iterations,
        momentum_residual=residual_inf,
        seconds=round(seconds, 6),
    )
    return solution


# ============================================================
# Verification
# ============================================================


def energy_identity_defect(mesh: StaggeredMesh2D, solution: StokesSolution) -> float:
    """|(omega, omega) - 2 (f_h, u_h)|; bounded by tol ||omega||_2 ||b||_2."""
    w = solution.omega
    return abs(inner_dual(mesh, w, w) - 2.0 * inner_edge(mesh, solution.forcing.f_h, solution.u))


def galerkin_defect(mesh: StaggeredMesh2D, solution: StokesSolution, test: DualField) -> float:
    """|a_h(u_h, v) - 2 (f_h, v)| for v = perp_grad_dual(test).

    ``test`` is cleared at boundary duals so that v lies in the velocity
    space. Bounded by tol ||b||_2 ||curl v||_2.
    """
    values = test.check(mesh).copy()
    values[mesh.dual_is_boundary] = 0.0
    v = perp_grad_dual(mesh, DualField(values))
    curl_v = curl(mesh, v)
    energy = inner_dual(mesh, solution.omega, curl_v)
    return abs(energy - 2.0 * inner_edge(mesh, solution.forcing.f_h, v))


def _line_average(p1: FloatArray, p2: FloatArray, fn: Function2D) -> FloatArray:
    """Average of fn over each segment p1 -> p2 by Gauss-Legendre."""
    t = 0.5 * (1.0 + _NODES)
    points = p1[:, None, :] + t[None, :, None] * (p2 - p1)[:, None, :]
    values = np.asarray(fn(points[..., 0], points[..., 1]), dtype=np.float64)
    return np.asarray(0.5 * values @ _WEIGHTS, dtype=np.float64)


def truncation_diagnostics(mesh: StaggeredMesh2D, case: PhysicalCase2D) -> TruncationDiagnostics:
    """Curl, pressure and forcing truncation errors of the exact solution.

    tau_omega = curl(R_h u) - omega(x_v); tau_p and tau_f compare the average
    normal component over each interior primary edge with the difference
    quotients the scheme uses, evaluated on point values.
    """
    omega_h = curl(mesh, restrict_velocity(mesh, case.psi))
    tau_omega = omega_h.values - restrict_dual_points(mesh, case.omega).values

    interior = mesh.interior_edge_mask
    verts = mesh.edge_vertices[interior]
    p1, p2 = verts[:, 0], verts[:, 1]
    n = mesh.edge_normal[interior]
    cells = mesh.edge_cells[interior]
    duals = mesh.edge_duals[interior]
    d = mesh.dual_edge_length[interior]
    l = mesh.edge_length[interior]
    xc, xd = mesh.cell_center, mesh.dual_center

    def normal_grad_p(x: FloatArray, y: FloatArray) -> FloatArray:
        gx, gy = case.grad_p(x, y)
        return gx * n[:, 0:1] + gy * n[:, 1:2]

    def normal_forcing(x: FloatArray, y: FloatArray) -> FloatArray:
        fx, fy = case.forcing(x, y)
        return fx * n[:, 0:1] + fy * n[:, 1:2]

    def diff_cells(fn: Function2D) -> FloatArray:
        a = fn(xc[cells[:, 0], 0], xc[cells[:, 0], 1])
        b = fn(xc[cells[:, 1], 0], xc[cells[:, 1], 1])
        return np.asarray((b - a) / d, dtype=np.float64)

    def perp_duals(fn: Function2D) -> FloatArray:
        a = fn(xd[duals[:, 0], 0], xd[duals[:, 0], 1])
        b = fn(xd[duals[:, 1], 0], xd[duals[:, 1], 1])
        return np.asarray(-(b - a) / l, dtype=np.float64)

    tau_p = np.zeros(mesh.n_edges)
    tau_f = np.zeros(mesh.n_edges)
    tau_p[interior] = _line_average(p1, p2, normal_grad_p) - diff_cells(case.p)
    tau_f[interior] = _line_average(p1, p2, normal_forcing) - (
        perp_duals(case.psi_f) + diff_cells(case.phi_f)
    )

    trusted = mesh.trusted_dual_mask
    return TruncationDiagnostics(
        tau_omega=DualField(tau_omega, dirichlet=False),
        tau_p=EdgeField(tau_p),
        tau_f=EdgeField(tau_f),
        max_tau_omega=float(np.abs(tau_omega[trusted]).max()) if trusted.any() else 0.0,
        max_tau_p=float(np.abs(tau_p).max()) if tau_p.size else 0.0,
        max_tau_f=float(np.abs(tau_f).max()) if tau_f.size else 0.0,
    )


def structural_violations(
    mesh: StaggeredMesh2D, solution: StokesSolution, tol: float
) -> list[str]:
    """Invariants every solve must satisfy; empty when all hold.

    Checks no-slip (u exactly zero on boundary edges and psi exactly zero at
    boundary duals), exact divergence, the momentum residual against 10 tol
    times the data scale and the energy identity against tol ||omega||_2 ||b||_2.
    """
    violations: list[str] = []
    u = solution.u.values
    slip = boundary_slip(mesh, solution.u)
    if slip != 0.0:
        wall = np.flatnonzero(mesh.boundary_edge_mask)
        worst = int(wall[np.argmax(np.abs(u[wall]))])
        violations.append(f"boundary: |u_e| = {slip:.3e} on boundary edge {worst}")
    wall_psi = solution.psi.values[mesh.dual_is_boundary]
    if wall_psi.size and np.any(wall_psi != 0.0):
        violations.append(f"boundary: max |psi| = {np.abs(wall_psi).max():.3e} at boundary duals")

    flux = np.abs(u) * mesh.edge_length
    scale = np.zeros(mesh.n_cells)
    for side in (0, 1):
        np.add.at(scale, mesh.edge_cells[:, side], flux)
    divergence = np.abs(div(mesh, solution.u).values) * mesh.cell_area
    if divergence.size and divergence.max() > 1e-12 * max(float(scale.max()), 1e-300):
        violations.append(f"divergence: max |div u| A = {divergence.max():.3e}")

    bound = 10.0 * tol * solution.residual_scale
    if solution.momentum_residual_inf > bound:
        violations.append(
            f"momentum: residual {solution.momentum_residual_inf:.3e} exceeds {bound:.3e}"
        )

    rhs_norm = float(np.linalg.norm(mesh.dual_area * solution.forcing.psi_f_h.values))
    energy_bound = 10.0 * tol * float(np.linalg.norm(solution.omega.values)) * rhs_norm
    defect = energy_identity_defect(mesh, solution)
    if defect > energy_bound:
        violations.append(f"energy: defect {defect:.3e} exceeds {energy_bound:.3e}")
    return violations
