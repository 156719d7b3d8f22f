"""Exact discrete-calculus identities checked on random fields.

Each violation is reported relative to the same expression evaluated with
absolute values, so a value near machine epsilon means the identity holds
to roundoff regardless of the field magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from src.core import elliptic1d
from src.core.linters.gate import MeshGateLinter
from src.core.logging import EventType, log_solver_event
from src.core.mesh1d import CenterPlacement, gen_random
from src.core.mesh2d import FloatArray, StaggeredMesh2D
from src.core.ops2d import (
    CellField,
    DualField,
    EdgeField,
    curl,
    div,
    grad_cell,
    inner_cell,
    inner_dual,
    inner_edge,
    perp_grad_dual,
    random_fields,
)

IDENTITY_TOL = 1e-12
COMPANION_RATIO = 3.0


@dataclass
class IdentityReport:
    """Largest relative violation of every identity over all samples."""

    family: str
    n_cells: int
    samples: int
    violations: dict[str, float] = field(default_factory=dict)
    euler: bool = True
    tolerance: float = IDENTITY_TOL

    @property
    def passed(self) -> bool:
        return self.euler and all(v <= self.tolerance for v in self.violations.values())

    def lines(self) -> list[str]:
        rows = [
            f"{name:<22} {value:.3e} {'OK' if value <= self.tolerance else 'FAIL'}"
            for name, value in self.violations.items()
        ]
        rows.append(f"{'euler':<22} {'OK' if self.euler else 'FAIL'}")
        return rows


def _ratio(value: float, scale: float) -> float:
    return abs(value) / scale if scale > 0.0 else abs(value)


def _abs_div(mesh: StaggeredMesh2D, u: FloatArray) -> FloatArray:
    flux = np.abs(u) * mesh.edge_length
    out = np.zeros(mesh.n_cells)
    for side in (0, 1):
        np.add.at(out, mesh.edge_cells[:, side], flux)
    return np.asarray(out / mesh.cell_area, dtype=np.float64)


def _abs_curl(mesh: StaggeredMesh2D, u: FloatArray) -> FloatArray:
    circ = np.abs(u) * mesh.dual_edge_length
    out = np.zeros(mesh.n_v)
    for side in (0, 1):
        owner = mesh.edge_duals[:, side]
        real = owner >= 0
        np.add.at(out, owner[real], circ[real])
    return np.asarray(out / mesh.dual_area, dtype=np.float64)


def _max_ratio(values: FloatArray, scale: FloatArray) -> float:
    if values.size == 0:
        return 0.0
    return _ratio(float(np.abs(values).max()), float(scale.max()))


def check_fields(
    mesh: StaggeredMesh2D, phi: CellField, psi: DualField, u: EdgeField
) -> dict[str, float]:
    """Relative violations of the four 2D identities for one sample."""
    g = grad_cell(mesh, phi)
    s = perp_grad_dual(mesh, psi)
    du = div(mesh, u)
    cu = curl(mesh, u)

    def abs_edge(a: EdgeField, b: EdgeField) -> float:
        return inner_edge(mesh, EdgeField(np.abs(a.values)), EdgeField(np.abs(b.values)))

    grad_adj = 2.0 * inner_edge(mesh, g, u) + inner_cell(mesh, phi, du)
    grad_scale = 2.0 * abs_edge(g, u) + inner_cell(
        mesh, CellField(np.abs(phi.values)), CellField(np.abs(du.values))
    )
    perp_adj = 2.0 * inner_edge(mesh, s, u) + inner_dual(mesh, psi, cu)
    perp_scale = 2.0 * abs_edge(s, u) + inner_dual(
        mesh, DualField(np.abs(psi.values)), DualField(np.abs(cu.values))
    )
    return {
        "curl_grad": _max_ratio(curl(mesh, g).values, _abs_curl(mesh, g.values)),
        "div_perp_grad": _max_ratio(div(mesh, s).values, _abs_div(mesh, s.values)),
        "adjoint_grad_div": _ratio(grad_adj, grad_scale),
        "adjoint_perp_curl": _ratio(perp_adj, perp_scale),
    }


def integration_by_parts_1d(N: int, rng: np.random.Generator, seed: int) -> float:
    """Relative violation of (grad u, v) + (u, grad v) = 0 on a random 1D mesh."""
    mesh = gen_random(N, COMPANION_RATIO, seed, CenterPlacement.RANDOM)
    u = elliptic1d.random_primary(mesh, rng)
    v = elliptic1d.random_dual(mesh, rng)
    gu = elliptic1d.grad_primal(mesh, u)
    gv = elliptic1d.grad_dual(mesh, v)
    value = elliptic1d.inner(mesh, gu, v) + elliptic1d.inner(mesh, u, gv)
    scale = float(
        np.sum(np.abs(gu.values * v.values) * mesh.h_half)
        + np.sum(np.abs(u.values * gv.values) * mesh.h)
    )
    return _ratio(value, scale)


def run_identity_suite(mesh: StaggeredMesh2D, samples: int = 50, seed: int = 0) -> IdentityReport:
    """Check every exact identity on ``samples`` random fields.

    Examples:
        >>> from src.core.mesh2d import gen_rect
        >>> run_identity_suite(gen_rect(5, 5), samples=3).passed
        True
    """
    rng = np.random.default_rng(seed)
    worst: dict[str, float] = {}
    for k in range(samples):
        phi, psi, u = random_fields(mesh, rng)
        for name, value in check_fields(mesh, phi, psi, u).items():
            worst[name] = max(worst.get(name, 0.0), value)
        ibp = integration_by_parts_1d(max(mesh.n_cells, 4), rng, seed + k)
        worst["ibp_1d"] = max(worst.get("ibp_1d", 0.0), ibp)

    euler = next(c for c in MeshGateLinter.validate(mesh) if c.name == "Euler").passed
    report = IdentityReport(
        family=mesh.family,
        n_cells=mesh.n_cells,
        samples=samples,
        violations=worst,
        euler=euler,
    )
    log_solver_event(
        EventType.IDENTITY_SUITE_COMPLETED,
        family=mesh.family,
        samples=samples,
        passed=report.passed,
        **worst,
    )
    return report
