"""Gate Linter - hard invariants of a staggered mesh.

Every gate check has error severity: a mesh failing one of them cannot be
used by the operators, and loading it raises unless forced.
"""

from __future__ import annotations

from collections.abc import Callable
from typing import TYPE_CHECKING, ClassVar

import numpy as np

from src.core.linters.report import CheckResult

if TYPE_CHECKING:
    from src.core.mesh2d import StaggeredMesh2D


class MeshGateLinter:
    """Immutable topological and geometric rules.

    Pure functions only - no side effects.

    Rules:
        euler: N_c + N_cb + N_v = N_e + N_eb + 1
        orientation: paired +-1 signs agree with n_e and t_e
        orthogonality: primary edge perpendicular to its dual edge
        convexity: each crossing lies strictly inside both segments
        connectivity: EC/EV lists match the edge endpoint tables
        lengths: stored l_e, d_e match the center distances
        areas: stored areas match the recomputed ones and cover the same domain
        positivity: areas and lengths strictly positive
        interior_first: interior edges precede boundary edges
        boundary_loop: boundary cells have exactly two boundary edges, interior cells none
    """

    ORTHOGONALITY_TOL = 1e-10
    AREA_TOL = 1e-10

    CHECKS: ClassVar[tuple[str, ...]] = (
        "euler",
        "orientation",
        "orthogonality",
        "convexity",
        "connectivity",
        "lengths",
        "areas",
        "positivity",
        "interior_first",
        "boundary_loop",
    )

    @classmethod
    def validate(cls, mesh: StaggeredMesh2D) -> list[CheckResult]:
        """Run every gate rule.

        Examples:
            >>> from src.core.mesh2d import gen_rect
            >>> all(c.passed for c in MeshGateLinter.validate(gen_rect(3, 3)))
            True
        """
        rules: dict[str, Callable[[StaggeredMesh2D], CheckResult]] = {
            "euler": cls._euler,
            "orientation": cls._orientation,
            "orthogonality": cls._orthogonality,
            "convexity": cls._convexity,
            "connectivity": cls._connectivity,
            "lengths": cls._lengths,
            "areas": cls._areas,
            "positivity": cls._positivity,
            "interior_first": cls._interior_first,
            "boundary_loop": cls._boundary_loop,
        }
        return [rules[name](mesh) for name in cls.CHECKS]

    @staticmethod
    def _first(bad: np.ndarray, values: np.ndarray, name: str, detail: str) -> CheckResult:
        if not bad.any():
            worst = float(values.max()) if values.size else 0.0
            return CheckResult(name=name, passed=True, magnitude=worst, detail=detail)
        index = int(np.argmax(bad))
        return CheckResult(
            name=name,
            passed=False,
            worst=index,
            magnitude=float(values[index]),
            detail=detail,
        )

    @staticmethod
    def _euler(mesh: StaggeredMesh2D) -> CheckResult:
        lhs = mesh.n_c + mesh.n_cb + mesh.n_v
        rhs = mesh.n_e + mesh.n_eb + 1
        return CheckResult(
            name="Euler", passed=lhs == rhs, magnitude=float(lhs - rhs), detail=f"{lhs}={rhs}"
        )

    @classmethod
    def _orientation(cls, mesh: StaggeredMesh2D) -> CheckResult:
        cs, ds = mesh.edge_cell_sign, mesh.edge_dual_sign
        paired = (np.abs(cs[:, 0]) != 1) | (cs[:, 1] != -cs[:, 0])
        paired |= (np.abs(ds[:, 0]) != 1) | (ds[:, 1] != -ds[:, 0])
        centers = mesh.cell_center
        along_n = np.einsum(
            "ij,ij->i",
            mesh.edge_normal,
            centers[mesh.edge_cells[:, 1]] - centers[mesh.edge_cells[:, 0]],
        )
        verts = mesh.edge_vertices
        along_t = np.einsum("ij,ij->i", mesh.edge_tangent, verts[:, 1] - verts[:, 0])
        bad = paired | (cs[:, 0] * along_n <= 0.0) | (ds[:, 0] * along_t <= 0.0)
        return cls._first(bad, bad.astype(float), "orientation", "edge signs")

    @classmethod
    def _orthogonality(cls, mesh: StaggeredMesh2D) -> CheckResult:
        verts = mesh.edge_vertices
        primary = verts[:, 1] - verts[:, 0]
        centers = mesh.cell_center
        dual = centers[mesh.edge_cells[:, 1]] - centers[mesh.edge_cells[:, 0]]
        n = mesh.edge_normal
        dot = np.abs(np.einsum("ij,ij->i", n, primary)) / np.maximum(mesh.edge_length, 1e-300)
        cross = np.abs(n[:, 0] * dual[:, 1] - n[:, 1] * dual[:, 0]) / np.maximum(
            mesh.dual_edge_length, 1e-300
        )
        unit = np.abs(np.linalg.norm(n, axis=1) - 1.0)
        defect = np.maximum(np.maximum(dot, cross), unit)
        return cls._first(
            defect > cls.ORTHOGONALITY_TOL, defect, "orthogonality", "n_e . (x_v2 - x_v1)"
        )

    @classmethod
    def _convexity(cls, mesh: StaggeredMesh2D) -> CheckResult:
        s, r = mesh.crossing_params[:, 0], mesh.crossing_params[:, 1]
        inside = (s > 0.0) & (s < 1.0) & (r > 0.0) & (r < 1.0)
        bad = ~inside
        margin = np.minimum(np.minimum(s, 1.0 - s), np.minimum(r, 1.0 - r))
        return cls._first(bad, np.nan_to_num(margin, nan=-1.0), "convexity", "edge crossings")

    @staticmethod
    def _connectivity(mesh: StaggeredMesh2D) -> CheckResult:
        n_cells, n_edges = mesh.n_cells, mesh.n_edges
        if len(mesh.edges_on_cell) != n_cells or len(mesh.edges_on_dual) != mesh.n_v:
            return CheckResult(
                name="connectivity", passed=False, detail="adjacency list count mismatch"
            )
        expected_ec: list[list[int]] = [[] for _ in range(n_cells)]
        expected_ev: list[list[int]] = [[] for _ in range(mesh.n_v)]
        for e in range(n_edges):
            for i in mesh.edge_cells[e]:
                expected_ec[int(i)].append(e)
            for v in mesh.edge_duals[e]:
                if v >= 0:
                    expected_ev[int(v)].append(e)
        for i, ec in enumerate(mesh.edges_on_cell):
            if sorted(ec.tolist()) != sorted(expected_ec[i]):
                return CheckResult(name="connectivity", passed=False, worst=i, detail="EC vs CE")
        for v, ev in enumerate(mesh.edges_on_dual):
            if sorted(ev.tolist()) != sorted(expected_ev[v]):
                return CheckResult(name="connectivity", passed=False, worst=v, detail="EV vs VE")
        return CheckResult(name="connectivity", passed=True, detail="EC/CE EV/VE")

    @classmethod
    def _lengths(cls, mesh: StaggeredMesh2D) -> CheckResult:
        centers = mesh.cell_center
        d = np.linalg.norm(
            centers[mesh.edge_cells[:, 1]] - centers[mesh.edge_cells[:, 0]], axis=1
        )
        verts = mesh.edge_vertices
        l = np.linalg.norm(verts[:, 1] - verts[:, 0], axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            defect = np.maximum(
                np.abs(d - mesh.dual_edge_length) / np.abs(mesh.dual_edge_length),
                np.abs(l - mesh.edge_length) / np.abs(mesh.edge_length),
            )
        defect = np.nan_to_num(defect, nan=np.inf)
        return cls._first(defect > cls.AREA_TOL, defect, "lengths", "l_e d_e")

    @classmethod
    def _areas(cls, mesh: StaggeredMesh2D) -> CheckResult:
        scale = mesh.h**2
        cell = np.abs(mesh.cell_area - mesh.clipped_cell_area) / np.maximum(
            np.abs(mesh.cell_area), scale
        )
        dual = np.abs(mesh.dual_area - mesh.shoelace_dual_area) / np.maximum(
            np.abs(mesh.dual_area), scale
        )
        if cell.size and cell.max() > cls.AREA_TOL:
            return cls._first(cell > cls.AREA_TOL, cell, "areas", "primary cell area")
        if dual.size and dual.max() > cls.AREA_TOL:
            return cls._first(dual > cls.AREA_TOL, dual, "areas", "dual cell area")
        total_c, total_v = float(mesh.cell_area.sum()), float(mesh.dual_area.sum())
        cover = abs(total_c - total_v) / max(abs(total_v), 1e-300)
        return CheckResult(
            name="areas",
            passed=cover <= cls.AREA_TOL,
            magnitude=cover,
            detail=f"sum {total_c:.12g}={total_v:.12g}",
        )

    @classmethod
    def _positivity(cls, mesh: StaggeredMesh2D) -> CheckResult:
        for values, what in (
            (mesh.cell_area, "cell area"),
            (mesh.dual_area, "dual area"),
            (mesh.edge_length, "l_e"),
            (mesh.dual_edge_length, "d_e"),
        ):
            bad = ~(values > 0.0)
            if bad.any():
                return cls._first(bad, values, "positivity", what)
        return CheckResult(name="positivity", passed=True, detail="areas lengths")

    @classmethod
    def _interior_first(cls, mesh: StaggeredMesh2D) -> CheckResult:
        exterior = (mesh.edge_duals < 0).sum(axis=1)
        expected = np.where(np.arange(mesh.n_edges) < mesh.n_e, 0, 1)
        bad = exterior != expected
        if mesh.n_edges != mesh.edge_duals.shape[0]:
            return CheckResult(name="interior_first", passed=False, detail="edge count")
        return cls._first(bad, exterior.astype(float), "interior_first", "edge order")

    @classmethod
    def _boundary_loop(cls, mesh: StaggeredMesh2D) -> CheckResult:
        boundary = mesh.boundary_edge_mask
        counts = np.bincount(mesh.edge_cells[boundary].ravel(), minlength=mesh.n_cells)
        expected = np.where(mesh.cell_is_boundary, 2, 0)
        bad = counts != expected
        return cls._first(bad, counts.astype(float), "boundary_loop", "boundary edges per cell")
