"""Discrete fields and mimetic operators on staggered 2D meshes.

Scalars live on primary cells (``CellField``) or dual cells (``DualField``),
vectors are stored by their normal components u_e = u . n_e on edge pairs
(``EdgeField``). The operators are built from the edge tables so that

    curl(grad_cell(phi)) = 0,   div(perp_grad_dual(psi)) = 0,
    2 (grad_cell phi, u) + (phi, div u) = 0,
    2 (perp_grad_dual psi, u) + (psi, curl u) = 0

hold to roundoff, with edge weight 1/2 l_e d_e. ``curl`` is the
counterclockwise circulation density, so a rigid rotation has curl 2 and
curl(perp_grad_dual(psi)) is the discrete Laplacian of psi. Exterior vertices
carry psi = 0.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
import numpy.typing as npt

from src.core.linalg import cg_solve
from src.core.logging import get_logger
from src.core.mesh2d import FloatArray, StaggeredMesh2D

logger = get_logger(__name__)

Function2D = Callable[[FloatArray, FloatArray], FloatArray]

REPRESENTATION_TOL = 1e-10
POINCARE_ITERATIONS = 30


# ============================================================
# Exceptions
# ============================================================


class FieldShapeError(ValueError):
    """Raised when a field does not match the mesh it is used with."""


class RepresentationMismatchError(Exception):
    """Raised when an edge field is not the skew gradient of the supplied streamfunction."""


class FieldParseError(ValueError):
    """Raised when a serialized field cannot be read."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


# ============================================================
# Fields
# ============================================================


@dataclass(frozen=True, eq=False)
class CellField:
    """Values on primary cells, interior cells first."""

    values: FloatArray

    def check(self, mesh: StaggeredMesh2D) -> FloatArray:
        return _checked(self.values, mesh.n_cells, "cell")


@dataclass(frozen=True, eq=False)
class DualField:
    """Values on dual cells; exterior vertices are implicitly zero."""

    values: FloatArray
    dirichlet: bool = True

    def check(self, mesh: StaggeredMesh2D) -> FloatArray:
        return _checked(self.values, mesh.n_v, "dual")


@dataclass(frozen=True, eq=False)
class EdgeField:
    """Normal components u . n_e on edge pairs, interior edges first."""

    values: FloatArray
    interior: bool = False

    def check(self, mesh: StaggeredMesh2D) -> FloatArray:
        return _checked(self.values, mesh.n_edges, "edge")


@dataclass(frozen=True, eq=False)
class ProlongedPair:
    """Streamfunction and discrete vorticity of a divergence-free edge field."""

    psi: DualField
    omega: DualField


class DiscreteForcing(NamedTuple):
    f_h: EdgeField
    psi_f_h: DualField
    phi_f_h: CellField


def _checked(values: FloatArray, expected: int, kind: str) -> FloatArray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.shape != (expected,):
        raise FieldShapeError(f"{kind} field needs {expected} values, got shape {arr.shape}")
    return arr


# ============================================================
# Operators
# ============================================================


def div(mesh: StaggeredMesh2D, u: EdgeField) -> CellField:
    """(1/|A_i|) sum over EC(i) of n_{e,i} u_e l_e."""
    flux = u.check(mesh) * mesh.edge_length
    out = np.zeros(mesh.n_cells)
    for side in (0, 1):
        np.add.at(out, mesh.edge_cells[:, side], mesh.edge_cell_sign[:, side] * flux)
    return CellField(out / mesh.cell_area)


def curl(mesh: StaggeredMesh2D, u: EdgeField) -> DualField:
    """-(1/|A_v|) sum over EV(v) of t_{e,v} u_e d_e.

    Values at boundary duals are computed but only trusted away from the
    boundary; see ``StaggeredMesh2D.trusted_dual_mask``.
    """
    circulation = u.check(mesh) * mesh.dual_edge_length
    out = np.zeros(mesh.n_v)
    for side in (0, 1):
        owner = mesh.edge_duals[:, side]
        real = owner >= 0
        np.add.at(out, owner[real], -mesh.edge_dual_sign[real, side] * circulation[real])
    return DualField(out / mesh.dual_area, dirichlet=False)


def grad_cell(mesh: StaggeredMesh2D, phi: CellField) -> EdgeField:
    """(phi_{i2} - phi_{i1}) / d_e on every edge."""
    values = phi.check(mesh)
    diff = values[mesh.edge_cells[:, 1]] - values[mesh.edge_cells[:, 0]]
    return EdgeField(diff / mesh.dual_edge_length)


def perp_grad_dual(mesh: StaggeredMesh2D, psi: DualField) -> EdgeField:
    """-(psi_{v2} - psi_{v1}) / l_e on every edge, exterior vertices zero.

    Examples:
        >>> from src.core.mesh2d import gen_rect
        >>> m = gen_rect(3, 3)
        >>> bool(np.allclose(div(m, perp_grad_dual(m, DualField(np.arange(4.0)))).values, 0.0))
        True
    """
    padded = np.append(psi.check(mesh), 0.0)
    duals = mesh.edge_duals
    diff = padded[duals[:, 1]] - padded[duals[:, 0]]
    return EdgeField(-diff / mesh.edge_length, interior=psi.dirichlet)


# ============================================================
# Inner products and norms
# ============================================================


def inner_edge(mesh: StaggeredMesh2D, u: EdgeField, v: EdgeField) -> float:
    """Sum of u_e v_e 1/2 l_e d_e over all edge pairs."""
    return float(np.sum(u.check(mesh) * v.check(mesh) * mesh.diamond_area))


def inner_cell(mesh: StaggeredMesh2D, a: CellField, b: CellField) -> float:
    return float(np.sum(a.check(mesh) * b.check(mesh) * mesh.cell_area))


def inner_dual(mesh: StaggeredMesh2D, a: DualField, b: DualField) -> float:
    return float(np.sum(a.check(mesh) * b.check(mesh) * mesh.dual_area))


def edge_l2_norm(
    mesh: StaggeredMesh2D, u: EdgeField, mask: npt.NDArray[np.bool_] | None = None
) -> float:
    """Diamond-weighted L2 norm over ``mask``, interior edges when omitted."""
    keep = mesh.interior_edge_mask if mask is None else mask
    values = u.check(mesh)[keep]
    return float(np.sqrt(np.sum(values**2 * mesh.diamond_area[keep])))


def curl_norm(
    mesh: StaggeredMesh2D, u: EdgeField, mask: npt.NDArray[np.bool_] | None = None
) -> float:
    """|curl u|_0, the norm of the divergence-free edge space.

    With ``mask`` the sum runs over the selected duals only.
    """
    return dual_l2(mesh, curl(mesh, u).values, mask)


def dual_l2(
    mesh: StaggeredMesh2D, values: npt.ArrayLike, mask: npt.NDArray[np.bool_] | None = None
) -> float:
    """Area-weighted L2 norm of dual values, optionally over a subset of duals."""
    arr = np.asarray(values, dtype=np.float64)
    weights = mesh.dual_area
    if mask is not None:
        arr, weights = arr[mask], weights[mask]
    return float(np.sqrt(np.sum(arr**2 * weights)))


def boundary_slip(mesh: StaggeredMesh2D, u: EdgeField) -> float:
    """Largest |u_e| over boundary edges."""
    values = u.check(mesh)[mesh.boundary_edge_mask]
    return float(np.abs(values).max()) if values.size else 0.0


# ============================================================
# Restriction, prolongation and forcing
# ============================================================


def restrict_dual_points(mesh: StaggeredMesh2D, fn: Function2D) -> DualField:
    """Point values at dual centers."""
    x, y = mesh.dual_center[:, 0], mesh.dual_center[:, 1]
    return DualField(np.asarray(fn(x, y), dtype=np.float64))


def restrict_cell_points(mesh: StaggeredMesh2D, fn: Function2D) -> CellField:
    """Point values at primary centers."""
    x, y = mesh.cell_center[:, 0], mesh.cell_center[:, 1]
    return CellField(np.asarray(fn(x, y), dtype=np.float64))


def dual_averages(mesh: StaggeredMesh2D, fn: Function2D) -> DualField:
    """Dual-cell averages by the centroid rule."""
    x, y = mesh.dual_centroid[:, 0], mesh.dual_centroid[:, 1]
    return DualField(np.asarray(fn(x, y), dtype=np.float64))


def cell_averages(mesh: StaggeredMesh2D, fn: Function2D) -> CellField:
    """Averages over primary cells clipped to the domain, by the centroid rule."""
    x, y = mesh.cell_centroid[:, 0], mesh.cell_centroid[:, 1]
    return CellField(np.asarray(fn(x, y), dtype=np.float64))


def restrict_velocity(mesh: StaggeredMesh2D, psi: Function2D) -> EdgeField:
    """R_h u: skew gradient of the sampled streamfunction.

    Boundary duals are set to zero, so R_h u lies in the discrete velocity
    space and vanishes on boundary edges. Near the wall this is only
    consistent to first order; compare on the trusted masks.
    """
    sampled = restrict_dual_points(mesh, psi).values.copy()
    sampled[mesh.dual_is_boundary] = 0.0
    return perp_grad_dual(mesh, DualField(sampled))


def prolong(mesh: StaggeredMesh2D, u: EdgeField, psi: DualField) -> ProlongedPair:
    """Pair (psi, curl u) for an edge field represented by ``psi``.

    Raises:
        RepresentationMismatchError: If u differs from perp_grad_dual(psi).
    """
    values = u.check(mesh)
    expected = perp_grad_dual(mesh, psi).values
    gap = float(np.abs(values - expected).max()) if values.size else 0.0
    if gap > REPRESENTATION_TOL * max(1.0, float(np.abs(expected).max(initial=0.0))):
        raise RepresentationMismatchError(
            f"edge field differs from perp_grad_dual(psi) by {gap:.3e}"
        )
    return ProlongedPair(psi=psi, omega=curl(mesh, u))


def discretize_forcing(
    mesh: StaggeredMesh2D, psi_f: Function2D, phi_f: Function2D
) -> DiscreteForcing:
    """Average the Helmholtz potentials and combine their discrete gradients.

    Returns:
        DiscreteForcing with f_h = perp_grad_dual(psi_f_h) + grad_cell(phi_f_h).
    """
    psi_f_h = dual_averages(mesh, psi_f)
    phi_f_h = cell_averages(mesh, phi_f)
    f_h = perp_grad_dual(mesh, psi_f_h).values + grad_cell(mesh, phi_f_h).values
    return DiscreteForcing(f_h=EdgeField(f_h), psi_f_h=psi_f_h, phi_f_h=phi_f_h)


# ============================================================
# Consistency measures
# ============================================================


def dual_cell_l2_error(mesh: StaggeredMesh2D, psi_h: DualField, psi: Function2D) -> float:
    """L2 distance between the piecewise-constant dual field and ``psi``.

    Each dual cell is split into triangles (center, x_a, x_b) over consecutive
    primary centers and integrated with the edge-midpoint rule.
    """
    values = psi_h.check(mesh)
    owner: list[int] = []
    first: list[int] = []
    second: list[int] = []
    for v, cells in enumerate(mesh.cells_on_dual):
        for k, a in enumerate(cells):
            owner.append(v)
            first.append(int(a))
            second.append(int(cells[(k + 1) % len(cells)]))
    if not owner:
        return 0.0
    tri_owner = np.asarray(owner)
    p0 = mesh.dual_center[tri_owner]
    p1 = mesh.cell_center[np.asarray(first)]
    p2 = mesh.cell_center[np.asarray(second)]
    area = 0.5 * np.abs(
        (p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
        - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0])
    )
    total = np.zeros(tri_owner.size)
    for q in (0.5 * (p0 + p1), 0.5 * (p1 + p2), 0.5 * (p2 + p0)):
        diff = values[tri_owner] - np.asarray(psi(q[:, 0], q[:, 1]), dtype=np.float64)
        total += diff**2
    return float(np.sqrt(np.sum(area * total / 3.0)))


def poincare_constant(
    mesh: StaggeredMesh2D, iterations: int = POINCARE_ITERATIONS, seed: int = 0
) -> float:
    """Largest ratio |u|_edge / |curl u|_0 over divergence-free edge fields.

    With u = perp_grad_dual(psi) the ratio squared is psi'L psi / (2 psi'L A^-1 L psi),
    whose maximum is 1 / (2 lambda_min(A^-1 L)); lambda_min comes from inverse
    power iteration in the A-inner product. The maximum runs over all dual
    values, so it also bounds the ratio on fields that vanish at boundary duals.
    """
    from src.core.stokes2d import assemble_vertex_laplacian

    laplacian = assemble_vertex_laplacian(mesh)
    area = mesh.dual_area
    x = np.random.default_rng(seed).random(mesh.n_v) + 0.5
    mu = 0.0
    for _ in range(iterations):
        y, _ = cg_solve(laplacian, area * x, tol=1e-12)
        mu = float((x * area) @ y / ((x * area) @ x))
        x = y / np.sqrt(y @ (area * y))
    logger.debug("poincare_constant", family=mesh.family, n_v=mesh.n_v, mu=mu)
    return float(np.sqrt(0.5 * mu))


# ============================================================
# Random fields and serialization
# ============================================================


def random_fields(
    mesh: StaggeredMesh2D, rng: np.random.Generator
) -> tuple[CellField, DualField, EdgeField]:
    """Standard normal cell, dual and edge fields."""
    return (
        CellField(rng.standard_normal(mesh.n_cells)),
        DualField(rng.standard_normal(mesh.n_v)),
        EdgeField(rng.standard_normal(mesh.n_edges)),
    )


FieldKind = Literal["cell", "dual", "edge"]


def dump_field(field: CellField | DualField | EdgeField) -> str:
    """``field <kind> <count>`` header followed by one value per line."""
    kind: FieldKind = "edge"
    if isinstance(field, CellField):
        kind = "cell"
    elif isinstance(field, DualField):
        kind = "dual"
    body = "\n".join(f"{v:.17g}" for v in field.values)
    return f"field {kind} {field.values.size}\n{body}\n" if body else f"field {kind} 0\n"


def load_field(text: str) -> CellField | DualField | EdgeField:
    """Parse the format written by :func:`dump_field`.

    Raises:
        FieldParseError: On a bad header, a bad value or a count mismatch.
    """
    lines = text.splitlines()
    if not lines:
        raise FieldParseError("empty input", line=1)
    header = lines[0].split()
    if len(header) != 3 or header[0] != "field" or header[1] not in ("cell", "dual", "edge"):
        raise FieldParseError(f"expected 'field <cell|dual|edge> <count>', got {lines[0]!r}", 1)
    try:
        count = int(header[2])
    except ValueError as e:
        raise FieldParseError(f"bad count {header[2]!r}", line=1) from e
    values: list[float] = []
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            values.append(float(line))
        except ValueError as e:
            raise FieldParseError(f"bad value {line!r}", line=no) from e
    if len(values) != count:
        raise FieldParseError(f"expected {count} values, got {len(values)}", line=len(lines))
    arr = np.asarray(values, dtype=np.float64)
    if header[1] == "cell":
        return CellField(arr)
    if header[1] == "dual":
        return DualField(arr)
    return EdgeField(arr)
