"""Unstructured staggered primary/dual polygonal meshes.

Primary cells carry pressure-type unknowns at their centers, dual cells carry
streamfunction and vorticity, and every edge pair couples a primary edge
(length l_e, between two dual centers) with the dual edge crossing it
(length d_e, between two primary centers). The normal n_e points from
cell i1 to cell i2, the tangent t_e = k x n_e from dual v1 to dual v2.

Dual cells all lie inside the domain. A boundary edge pair has a single
real dual; its other end is an exterior vertex, stored as index -1, placed at
the reflection of the real dual across the boundary dual edge, where the
streamfunction vanishes.

Connectivity follows the usual staggered-grid tables:

    EC(i)  edges of primary cell i          CE(e)  cells of edge e
    VC(i)  duals around primary cell i      VE(e)  duals of edge e
    CV(v)  primary centers around dual v    EV(v)  edges of dual v

Cyclic lists are stored counterclockwise.
"""

from __future__ import annotations

import dataclasses
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import numpy.typing as npt
import scipy.sparse as sp

from src.core.linalg import SparseSpd
from src.core.logging import EventType, get_logger, log_error

if TYPE_CHECKING:
    from src.core.linters.report import MeshQualityReport

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]
IntArray = npt.NDArray[np.int64]
Displacement = Callable[[FloatArray, FloatArray], tuple[FloatArray, FloatArray]]

EXTERIOR = -1
FORMAT_VERSION = 1
PERTURBED_MAX_AMPLITUDE = 0.25


# ============================================================
# Exceptions
# ============================================================


class Mesh2DError(Exception):
    """Base class for 2D mesh failures."""


class InvalidCountError(Mesh2DError):
    """Raised when generator counts are below the minimum."""


class MeshParseError(Mesh2DError):
    """Raised when a mesh file is malformed."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class MeshInvariantError(Mesh2DError):
    """Raised when a loaded mesh fails validation."""

    def __init__(self, message: str, report: MeshQualityReport) -> None:
        super().__init__(message)
        self.report = report


class MeshQualityError(Mesh2DError):
    """Raised when a generated mesh loses convexity or quasi-uniformity."""

    def __init__(self, message: str, report: MeshQualityReport) -> None:
        super().__init__(message)
        self.report = report


# ============================================================
# Patch
# ============================================================


@dataclass(frozen=True, eq=False)
class AffinePatch:
    """Parallelogram ``origin + basis @ [0,1]^2`` on which manufactured data is posed.

    The columns of ``basis`` are the two edge vectors.
    """

    origin: FloatArray
    basis: FloatArray

    @classmethod
    def unit_square(cls) -> AffinePatch:
        return cls(origin=np.zeros(2), basis=np.eye(2))

    @classmethod
    def rhombus(
        cls, origin: tuple[float, float] = (0.0, 0.0), side: float = 1.0
    ) -> AffinePatch:
        """Rhombus spanned by side * (1, 0) and side * (1/2, sqrt(3)/2).

        Examples:
            >>> AffinePatch.rhombus(side=2.0).basis[0].tolist()
            [2.0, 1.0]
        """
        return cls(
            origin=np.asarray(origin, dtype=np.float64),
            basis=side * np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]]),
        )

    @property
    def inverse(self) -> FloatArray:
        return np.asarray(np.linalg.inv(self.basis), dtype=np.float64)

    def to_reference(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        inv = self.inverse
        dx = np.asarray(x) - self.origin[0]
        dy = np.asarray(y) - self.origin[1]
        return inv[0, 0] * dx + inv[0, 1] * dy, inv[1, 0] * dx + inv[1, 1] * dy

    def to_physical(self, xi: FloatArray, eta: FloatArray) -> tuple[FloatArray, FloatArray]:
        a = self.basis
        return (
            self.origin[0] + a[0, 0] * np.asarray(xi) + a[0, 1] * np.asarray(eta),
            self.origin[1] + a[1, 0] * np.asarray(xi) + a[1, 1] * np.asarray(eta),
        )


# ============================================================
# Geometry helpers
# ============================================================


def _cross(a: FloatArray, b: FloatArray) -> FloatArray:
    return np.asarray(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0], dtype=np.float64)


def canonical_signs(n_edges: int) -> IntArray:
    """``[+1, -1]`` per edge: +1 for the first cell (dual) of the edge pair.

    The ordering of each pair carries the orientation, so the signs need not
    be stored; the gate checks that the order agrees with the normal and the
    tangent.
    """
    return np.tile(np.array([1, -1], dtype=np.int64), (n_edges, 1))


def _edge_vertices(
    dual_center: FloatArray,
    edge_duals: IntArray,
    edge_normal: FloatArray,
    edge_length: FloatArray,
) -> FloatArray:
    """Endpoints (v1, v2) of every primary edge, exterior vertices reflected."""
    tangent = np.column_stack([-edge_normal[:, 1], edge_normal[:, 0]])
    verts = np.zeros((edge_duals.shape[0], 2, 2))
    v1, v2 = edge_duals[:, 0], edge_duals[:, 1]
    real1, real2 = v1 >= 0, v2 >= 0
    verts[real1, 0] = dual_center[v1[real1]]
    verts[real2, 1] = dual_center[v2[real2]]
    ext1 = ~real1 & real2
    ext2 = real1 & ~real2
    verts[ext1, 0] = verts[ext1, 1] - edge_length[ext1, None] * tangent[ext1]
    verts[ext2, 1] = verts[ext2, 0] + edge_length[ext2, None] * tangent[ext2]
    return verts


def _crossings(
    cell_center: FloatArray, edge_cells: IntArray, verts: FloatArray
) -> tuple[FloatArray, FloatArray]:
    """Intersection of each dual edge with its primary edge and the two line parameters."""
    a = cell_center[edge_cells[:, 0]]
    d = cell_center[edge_cells[:, 1]] - a
    e = verts[:, 1] - verts[:, 0]
    w = verts[:, 0] - a
    denom = _cross(d, e)
    with np.errstate(divide="ignore", invalid="ignore"):
        s = _cross(w, e) / denom
        r = _cross(w, d) / denom
    point = a + s[:, None] * d
    return point, np.column_stack([s, r])


def _clipped_cells(
    n_cells: int,
    cell_center: FloatArray,
    edge_cells: IntArray,
    edge_duals: IntArray,
    verts: FloatArray,
    crossing: FloatArray,
) -> tuple[FloatArray, FloatArray]:
    """Area and centroid of every primary cell restricted to the domain.

    Each edge contributes the triangle (center, v1, v2) to both adjacent
    cells, with exterior vertices replaced by the crossing point.
    """
    q1 = np.where((edge_duals[:, 0] < 0)[:, None], crossing, verts[:, 0])
    q2 = np.where((edge_duals[:, 1] < 0)[:, None], crossing, verts[:, 1])
    area = np.zeros(n_cells)
    moment = np.zeros((n_cells, 2))
    for side, sign in ((0, 1.0), (1, -1.0)):
        owner = edge_cells[:, side]
        c = cell_center[owner]
        tri = sign * 0.5 * _cross(q1 - c, q2 - c)
        np.add.at(area, owner, tri)
        np.add.at(moment, owner, tri[:, None] * (c + q1 + q2) / 3.0)
    centroid = cell_center.copy()
    nonzero = area != 0.0
    centroid[nonzero] = moment[nonzero] / area[nonzero, None]
    return area, centroid


def _polygon(points: FloatArray) -> tuple[float, FloatArray]:
    """Shoelace area and centroid of a counterclockwise polygon."""
    if len(points) < 3:
        return 0.0, points.mean(axis=0) if len(points) else np.zeros(2)
    nxt = np.roll(points, -1, axis=0)
    cross = _cross(points, nxt)
    area = 0.5 * float(cross.sum())
    if area == 0.0:
        return 0.0, points.mean(axis=0)
    centroid = ((points + nxt) * cross[:, None]).sum(axis=0) / (6.0 * area)
    return area, centroid


def _ccw_order(center: FloatArray, points: FloatArray) -> IntArray:
    d = points - center
    return np.argsort(np.arctan2(d[:, 1], d[:, 0]), kind="stable").astype(np.int64)


# ============================================================
# Mesh
# ============================================================


def _derived(init: bool = False) -> Any:
    return field(init=init, repr=False)


@dataclass(frozen=True, eq=False)
class StaggeredMesh2D:
    """Primary/dual mesh pair with edge pairs, orientation and connectivity.

    Primitive fields are stored; everything else is derived on construction,
    so ``dataclasses.replace`` yields a consistent mesh.
    """

    family: str
    h: float
    patch: AffinePatch
    n_c: int
    n_cb: int
    n_v: int
    n_e: int
    n_eb: int
    cell_center: FloatArray
    cell_area: FloatArray
    dual_center: FloatArray
    dual_area: FloatArray
    edge_cells: IntArray
    edge_duals: IntArray
    edge_normal: FloatArray
    edge_length: FloatArray
    dual_edge_length: FloatArray
    edges_on_cell: tuple[IntArray, ...]
    edges_on_dual: tuple[IntArray, ...]
    edge_cell_sign: IntArray
    edge_dual_sign: IntArray

    # Derived
    dual_is_boundary: npt.NDArray[np.bool_] = _derived()
    cells_on_dual: tuple[IntArray, ...] = _derived()
    duals_on_cell: tuple[IntArray, ...] = _derived()
    edge_vertices: FloatArray = _derived()
    crossing: FloatArray = _derived()
    crossing_params: FloatArray = _derived()
    bisection_offset: FloatArray = _derived()
    cell_centroid: FloatArray = _derived()
    clipped_cell_area: FloatArray = _derived()
    dual_centroid: FloatArray = _derived()
    shoelace_dual_area: FloatArray = _derived()

    def __post_init__(self) -> None:
        n_cells = self.cell_center.shape[0]
        verts = _edge_vertices(
            self.dual_center, self.edge_duals, self.edge_normal, self.edge_length
        )
        crossing, params = _crossings(self.cell_center, self.edge_cells, verts)
        mid_dual = 0.5 * (
            self.cell_center[self.edge_cells[:, 0]] + self.cell_center[self.edge_cells[:, 1]]
        )
        mid_primary = 0.5 * (verts[:, 0] + verts[:, 1])
        offset = np.maximum(
            np.linalg.norm(crossing - mid_dual, axis=1),
            np.linalg.norm(crossing - mid_primary, axis=1),
        )
        area, centroid = _clipped_cells(
            n_cells, self.cell_center, self.edge_cells, self.edge_duals, verts, crossing
        )

        boundary_edge = (self.edge_duals < 0).any(axis=1)
        dual_is_boundary = np.array(
            [bool(boundary_edge[ev].any()) for ev in self.edges_on_dual], dtype=bool
        )

        cells_on_dual: list[IntArray] = []
        dual_centroid = np.zeros((self.n_v, 2))
        dual_area = np.zeros(self.n_v)
        for v, ev in enumerate(self.edges_on_dual):
            cells = np.unique(self.edge_cells[ev].ravel())
            cells = cells[_ccw_order(self.dual_center[v], self.cell_center[cells])]
            cells_on_dual.append(cells)
            dual_area[v], dual_centroid[v] = _polygon(self.cell_center[cells])

        duals_on_cell: list[IntArray] = []
        for i, ec in enumerate(self.edges_on_cell):
            duals = np.unique(self.edge_duals[ec].ravel())
            duals = duals[duals >= 0]
            duals = duals[_ccw_order(self.cell_center[i], self.dual_center[duals])]
            duals_on_cell.append(duals)

        setter = object.__setattr__
        setter(self, "dual_is_boundary", dual_is_boundary)
        setter(self, "cells_on_dual", tuple(cells_on_dual))
        setter(self, "duals_on_cell", tuple(duals_on_cell))
        setter(self, "edge_vertices", verts)
        setter(self, "crossing", crossing)
        setter(self, "crossing_params", params)
        setter(self, "bisection_offset", offset)
        setter(self, "cell_centroid", centroid)
        setter(self, "clipped_cell_area", area)
        setter(self, "dual_centroid", dual_centroid)
        setter(self, "shoelace_dual_area", dual_area)

    # --------------------------------------------------------
    # Counts and masks
    # --------------------------------------------------------

    @property
    def n_cells(self) -> int:
        return self.n_c + self.n_cb

    @property
    def n_edges(self) -> int:
        return self.n_e + self.n_eb

    @property
    def edge_tangent(self) -> FloatArray:
        return np.column_stack([-self.edge_normal[:, 1], self.edge_normal[:, 0]])

    @property
    def diamond_area(self) -> FloatArray:
        return 0.5 * self.edge_length * self.dual_edge_length

    @property
    def boundary_edge_mask(self) -> npt.NDArray[np.bool_]:
        return np.asarray((self.edge_duals < 0).any(axis=1))

    @property
    def interior_edge_mask(self) -> npt.NDArray[np.bool_]:
        return ~self.boundary_edge_mask

    @property
    def trusted_dual_mask(self) -> npt.NDArray[np.bool_]:
        """Duals whose curl stencil reaches no boundary dual.

        Restricted velocities vanish at boundary duals, so the discrete curl
        of R_h u is consistent only one ring further in.
        """
        duals = self.edge_duals
        pairs = duals[(duals >= 0).all(axis=1)]
        wall = self.dual_is_boundary[pairs]
        near = np.zeros(self.n_v, dtype=bool)
        near[pairs[wall[:, 1], 0]] = True
        near[pairs[wall[:, 0], 1]] = True
        return np.asarray(~self.dual_is_boundary & ~near)

    @property
    def trusted_edge_mask(self) -> npt.NDArray[np.bool_]:
        """Interior edges whose two duals are both trusted."""
        duals = self.edge_duals
        ok = (duals >= 0).all(axis=1)
        safe = np.where(duals >= 0, duals, 0)
        return np.asarray(ok & self.trusted_dual_mask[safe].all(axis=1))

    @property
    def cell_is_boundary(self) -> npt.NDArray[np.bool_]:
        return np.arange(self.n_cells) >= self.n_c

    @property
    def domain_area(self) -> float:
        return float(self.dual_area.sum())

    @property
    def m_const(self) -> float:
        return float(min(self.edge_length.min(), self.dual_edge_length.min()) / self.h)

    @property
    def M_const(self) -> float:
        return float(max(self.edge_length.max(), self.dual_edge_length.max()) / self.h)

    def exterior_vertices(self) -> FloatArray:
        """Positions of the exterior vertices of boundary edges."""
        mask = self.edge_duals < 0
        return np.asarray(self.edge_vertices[mask])

    def same_geometry(self, other: StaggeredMesh2D) -> bool:
        """Bitwise equality of every primitive array and connectivity list."""
        arrays = (
            "cell_center",
            "cell_area",
            "dual_center",
            "dual_area",
            "edge_cells",
            "edge_duals",
            "edge_normal",
            "edge_length",
            "dual_edge_length",
            "edge_cell_sign",
            "edge_dual_sign",
        )
        if (self.n_c, self.n_cb, self.n_v, self.n_e, self.n_eb) != (
            other.n_c,
            other.n_cb,
            other.n_v,
            other.n_e,
            other.n_eb,
        ):
            return False
        if not all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays):
            return False
        lists = ("edges_on_cell", "edges_on_dual")
        return all(
            len(getattr(self, name)) == len(getattr(other, name))
            and all(
                np.array_equal(x, y)
                for x, y in zip(getattr(self, name), getattr(other, name), strict=True)
            )
            for name in lists
        )

    def info(self) -> dict[str, Any]:
        """Summary figures for reports and the command line."""
        return {
            "family": self.family,
            "n_c": self.n_c,
            "n_cb": self.n_cb,
            "n_v": self.n_v,
            "n_e": self.n_e,
            "n_eb": self.n_eb,
            "h": self.h,
            "m_const": self.m_const,
            "M_const": self.M_const,
            "domain_area": self.domain_area,
            "max_bisection_offset": float(self.bisection_offset.max()),
        }


# ============================================================
# Assembly from dual polygons
# ============================================================


def build_from_duals(
    cell_center: FloatArray,
    dual_center: FloatArray,
    dual_polygons: list[list[int]],
    h: float,
    family: str,
    patch: AffinePatch,
) -> StaggeredMesh2D:
    """Assemble a mesh from primary centers and the cell cycle of every dual.

    Each consecutive pair (a, b) in the counterclockwise cycle of dual v is a
    dual edge; the first visit fixes i1 = a, i2 = b and v2 = v, and the second
    visit (from the neighbouring dual, traversing b -> a) fills in v1. Edges
    visited once are boundary edges whose v1 stays exterior.

    Raises:
        Mesh2DError: If two duals traverse a shared edge in the same direction.
    """
    polygons: list[list[int]] = []
    for v, poly in enumerate(dual_polygons):
        arr = np.asarray(poly, dtype=np.int64)
        order = _ccw_order(dual_center[v], cell_center[arr])
        polygons.append(arr[order].tolist())

    index: dict[tuple[int, int], int] = {}
    i1: list[int] = []
    i2: list[int] = []
    v1: list[int] = []
    v2: list[int] = []
    ev_raw: list[list[int]] = []
    for v, poly in enumerate(polygons):
        ring: list[int] = []
        for k, a in enumerate(poly):
            b = poly[(k + 1) % len(poly)]
            key = (min(a, b), max(a, b))
            e = index.get(key)
            if e is None:
                e = len(i1)
                index[key] = e
                i1.append(a)
                i2.append(b)
                v1.append(EXTERIOR)
                v2.append(v)
            else:
                if i1[e] != b or v1[e] != EXTERIOR:
                    raise Mesh2DError(f"dual {v} traverses edge {key} inconsistently")
                v1[e] = v
            ring.append(e)
        ev_raw.append(ring)

    cells_raw = np.column_stack([i1, i2]).astype(np.int64)
    duals_raw = np.column_stack([v1, v2]).astype(np.int64)
    boundary = (duals_raw < 0).any(axis=1)

    # Interior edges first, then boundary edges
    edge_perm = np.concatenate([np.flatnonzero(~boundary), np.flatnonzero(boundary)])
    edge_new = np.empty_like(edge_perm)
    edge_new[edge_perm] = np.arange(edge_perm.size)

    n_cells = cell_center.shape[0]
    cell_boundary = np.zeros(n_cells, dtype=bool)
    cell_boundary[cells_raw[boundary].ravel()] = True
    cell_perm = np.concatenate([np.flatnonzero(~cell_boundary), np.flatnonzero(cell_boundary)])
    cell_new = np.empty_like(cell_perm)
    cell_new[cell_perm] = np.arange(n_cells)

    centers = cell_center[cell_perm]
    edge_cells = cell_new[cells_raw[edge_perm]]
    edge_duals = duals_raw[edge_perm]
    offsets = centers[edge_cells[:, 1]] - centers[edge_cells[:, 0]]
    d = np.linalg.norm(offsets, axis=1)
    normal = offsets / d[:, None]
    tangent = np.column_stack([-normal[:, 1], normal[:, 0]])

    l = np.zeros(edge_perm.size)
    inner = (edge_duals >= 0).all(axis=1)
    l[inner] = np.linalg.norm(
        dual_center[edge_duals[inner, 1]] - dual_center[edge_duals[inner, 0]], axis=1
    )
    real = np.where(edge_duals[:, 0] >= 0, edge_duals[:, 0], edge_duals[:, 1])
    gap = np.abs(np.einsum("ij,ij->i", dual_center[real] - centers[edge_cells[:, 0]], tangent))
    l[~inner] = 2.0 * gap[~inner]

    edges_on_dual = tuple(np.asarray(edge_new[ring], dtype=np.int64) for ring in ev_raw)

    incident: list[list[int]] = [[] for _ in range(n_cells)]
    for e, (a, b) in enumerate(edge_cells):
        incident[a].append(e)
        incident[b].append(e)
    edges_on_cell: list[IntArray] = []
    for i, edges in enumerate(incident):
        arr = np.asarray(edges, dtype=np.int64)
        others = np.where(edge_cells[arr, 0] == i, edge_cells[arr, 1], edge_cells[arr, 0])
        edges_on_cell.append(arr[_ccw_order(centers[i], centers[others])])

    n_edges = edge_perm.size
    cell_sign = canonical_signs(n_edges)
    dual_sign = canonical_signs(n_edges)

    verts = _edge_vertices(dual_center, edge_duals, normal, l)
    crossing, _ = _crossings(centers, edge_cells, verts)
    cell_area, _ = _clipped_cells(n_cells, centers, edge_cells, edge_duals, verts, crossing)
    dual_area = np.array(
        [_polygon(centers[cell_new[np.asarray(p)]])[0] for p in polygons], dtype=np.float64
    )

    n_eb = int(boundary.sum())
    n_cb = int(cell_boundary.sum())
    mesh = StaggeredMesh2D(
        family=family,
        h=float(h),
        patch=patch,
        n_c=n_cells - n_cb,
        n_cb=n_cb,
        n_v=len(polygons),
        n_e=n_edges - n_eb,
        n_eb=n_eb,
        cell_center=centers,
        cell_area=cell_area,
        dual_center=np.asarray(dual_center, dtype=np.float64),
        dual_area=dual_area,
        edge_cells=edge_cells,
        edge_duals=edge_duals,
        edge_normal=normal,
        edge_length=l,
        dual_edge_length=d,
        edges_on_cell=tuple(edges_on_cell),
        edges_on_dual=edges_on_dual,
        edge_cell_sign=cell_sign,
        edge_dual_sign=dual_sign,
    )
    logger.debug(
        EventType.MESH_GENERATED.value,
        family=family,
        n_cells=n_cells,
        n_v=mesh.n_v,
        n_edges=n_edges,
    )
    return mesh


# ============================================================
# Generators
# ============================================================


def _quad_polygons(nx: int, ny: int) -> list[list[int]]:
    """Corner cells of every dual of an nx-by-ny center grid, row by row."""
    return [
        [k * nx + j, k * nx + j + 1, (k + 1) * nx + j + 1, (k + 1) * nx + j]
        for k in range(ny - 1)
        for j in range(nx - 1)
    ]


def _tensor_mesh(xs: FloatArray, ys: FloatArray, h: float, family: str) -> StaggeredMesh2D:
    gx, gy = np.meshgrid(xs, ys)
    cell_center = np.column_stack([gx.ravel(), gy.ravel()])
    mx = 0.5 * (xs[:-1] + xs[1:])
    my = 0.5 * (ys[:-1] + ys[1:])
    dx, dy = np.meshgrid(mx, my)
    dual_center = np.column_stack([dx.ravel(), dy.ravel()])
    return build_from_duals(
        cell_center,
        dual_center,
        _quad_polygons(xs.size, ys.size),
        h,
        family,
        AffinePatch.unit_square(),
    )


def gen_rect(nx: int, ny: int) -> StaggeredMesh2D:
    """Uniform rectangular mesh of the unit square with boundary centers on the boundary.

    Raises:
        InvalidCountError: If ``nx`` or ``ny`` is below 2.

    Examples:
        >>> m = gen_rect(3, 3)
        >>> (m.n_c, m.n_cb, m.n_v, m.n_e, m.n_eb)
        (1, 8, 4, 4, 8)
    """
    if nx < 2 or ny < 2:
        raise InvalidCountError(f"nx and ny must be >= 2, got ({nx}, {ny})")
    xs = np.arange(nx, dtype=np.float64) / (nx - 1)
    ys = np.arange(ny, dtype=np.float64) / (ny - 1)
    h = max(1.0 / (nx - 1), 1.0 / (ny - 1))
    return _tensor_mesh(xs, ys, h, "rect")


def perturbation_field(seed: int) -> Displacement:
    """Seeded smooth displacement field of the unit square.

    s = sign / k^2 (sin(k pi x) cos(k pi y), -cos(k pi x) sin(k pi y)) with
    k in {1, 2} and the sign drawn from the seed. The normal component
    vanishes on every side and the shear strain d_y s_x + d_x s_y is zero, so
    displaced squares stay rectangles to first order.
    """
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 3))
    scale = float(rng.choice(np.array([-1.0, 1.0]))) / k**2

    def displacement(x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        ax = k * np.pi * np.asarray(x, dtype=np.float64)
        ay = k * np.pi * np.asarray(y, dtype=np.float64)
        return scale * np.sin(ax) * np.cos(ay), -scale * np.cos(ax) * np.sin(ay)

    return displacement


def _orthogonal_duals(
    cell_center: FloatArray, dual_center: FloatArray, polygons: list[list[int]]
) -> FloatArray:
    """Least-norm shift of the dual centers that makes every interior dual edge
    perpendicular to the primary edge joining its two duals.

    The constraints (x_v2 - x_v1) . (c_b - c_a) = 0 are linear in the dual
    centers, so one solve with the Gram matrix of the constraint rows is exact.
    """
    owners: dict[tuple[int, int], list[int]] = {}
    for v, poly in enumerate(polygons):
        for k, a in enumerate(poly):
            b = poly[(k + 1) % len(poly)]
            owners.setdefault((min(a, b), max(a, b)), []).append(v)
    shared = [(cells, duals) for cells, duals in owners.items() if len(duals) == 2]
    if not shared:
        return dual_center
    cells = np.array([c for c, _ in shared], dtype=np.int64)
    duals = np.array([d for _, d in shared], dtype=np.int64)
    w = cell_center[cells[:, 1]] - cell_center[cells[:, 0]]
    m = len(shared)
    cols = np.column_stack(
        [2 * duals[:, 1], 2 * duals[:, 1] + 1, 2 * duals[:, 0], 2 * duals[:, 0] + 1]
    )
    vals = np.column_stack([w[:, 0], w[:, 1], -w[:, 0], -w[:, 1]])
    constraints = sp.csr_matrix(
        (vals.ravel(), (np.repeat(np.arange(m), 4), cols.ravel())),
        shape=(m, dual_center.size),
    )
    flat = dual_center.ravel()
    defect = np.asarray(constraints @ flat, dtype=np.float64)
    if not defect.any():
        return dual_center
    gram = sp.coo_matrix(constraints @ constraints.T)
    solve = SparseSpd.from_triplets(m, gram.row, gram.col, gram.data).factorize()
    shift = -np.asarray(constraints.T @ solve(defect), dtype=np.float64)
    return np.asarray((flat + shift).reshape(-1, 2), dtype=np.float64)


def gen_perturbed(nx: int, ny: int, amplitude: float, seed: int) -> StaggeredMesh2D:
    """Non-uniform orthogonal quadrilateral dual mesh from a smooth seeded displacement.

    Primary centers of the uniform grid move by amplitude * h * s(x, y) with
    s from :func:`perturbation_field`; boundary centers only slide along their
    side. Dual centers start at the mean of their four corners and take the
    least-norm shift that restores exact orthogonality. Because s is smooth and
    free of shear, the shift and the bisection offset decay like h^2.

    Raises:
        InvalidCountError: If ``nx`` or ``ny`` is below 2.
        ValueError: If ``amplitude`` lies outside [0, 0.25).
        MeshQualityError: If the result fails an error-severity check.
    """
    if nx < 2 or ny < 2:
        raise InvalidCountError(f"nx and ny must be >= 2, got ({nx}, {ny})")
    if not 0.0 <= amplitude < PERTURBED_MAX_AMPLITUDE:
        raise ValueError(f"amplitude must lie in [0, {PERTURBED_MAX_AMPLITUDE}), got {amplitude}")
    xs = np.arange(nx, dtype=np.float64) / (nx - 1)
    ys = np.arange(ny, dtype=np.float64) / (ny - 1)
    h = max(1.0 / (nx - 1), 1.0 / (ny - 1))
    gx, gy = np.meshgrid(xs, ys)
    sx, sy = perturbation_field(seed)(gx, gy)
    sx[:, [0, -1]] = 0.0
    sy[[0, -1], :] = 0.0
    cell_center = np.column_stack(
        [(gx + amplitude * h * sx).ravel(), (gy + amplitude * h * sy).ravel()]
    )

    polygons = _quad_polygons(nx, ny)
    corners = np.asarray(polygons, dtype=np.int64)
    bottom = 0.5 * (cell_center[corners[:, 0]] + cell_center[corners[:, 1]])
    top = 0.5 * (cell_center[corners[:, 3]] + cell_center[corners[:, 2]])
    dual_center = _orthogonal_duals(cell_center, 0.5 * (bottom + top), polygons)
    mesh = build_from_duals(
        cell_center, dual_center, polygons, h, "perturbed", AffinePatch.unit_square()
    )

    report = validate(mesh)
    if not report.passed:
        failed = ", ".join(c.name for c in report.failures())
        log_error(EventType.MESH_VALIDATION_FAILED, failed, family="perturbed", seed=seed)
        raise MeshQualityError(f"perturbed mesh failed checks: {failed}", report)
    return mesh


def gen_tri_hex(n: int) -> StaggeredMesh2D:
    """Equilateral triangles with hexagonal duals on a rhombic lattice patch.

    Dual centers are the lattice points a*s*e1 + b*s*e2 with a, b in 1..n-1
    and s = 1/n; primary cells are the triangles touching them. Exterior
    vertices land on the lattice points of the unit rhombus sides.

    The manufactured-data patch is the rhombus between the lattice lines
    a, b = 1/2 and n - 1/2, halfway between the exterior vertices and the
    first row of duals, where a streamfunction that vanishes at boundary
    duals and exterior vertices has its wall. Its area is the total dual area.

    Raises:
        InvalidCountError: If ``n`` is below 2.
    """
    if n < 2:
        raise InvalidCountError(f"n must be >= 2, got {n}")
    s = 1.0 / n

    def point(a: float, b: float) -> tuple[float, float]:
        return (s * (a + 0.5 * b), s * (math.sqrt(3.0) / 2.0) * b)

    patch = AffinePatch.rhombus(origin=point(0.5, 0.5), side=(n - 1) * s)

    triangles: dict[tuple[str, int, int], int] = {}
    centers: list[tuple[float, float]] = []

    def triangle(kind: str, a: int, b: int) -> int:
        key = (kind, a, b)
        if key not in triangles:
            triangles[key] = len(centers)
            shift = 1.0 / 3.0 if kind == "up" else 2.0 / 3.0
            centers.append(point(a + shift, b + shift))
        return triangles[key]

    dual_center: list[tuple[float, float]] = []
    polygons: list[list[int]] = []
    for b in range(1, n):
        for a in range(1, n):
            dual_center.append(point(a, b))
            polygons.append(
                [
                    triangle("up", a, b),
                    triangle("down", a - 1, b),
                    triangle("up", a - 1, b),
                    triangle("down", a - 1, b - 1),
                    triangle("up", a, b - 1),
                    triangle("down", a, b - 1),
                ]
            )

    return build_from_duals(
        np.asarray(centers, dtype=np.float64),
        np.asarray(dual_center, dtype=np.float64),
        polygons,
        s,
        "trihex",
        patch,
    )


# ============================================================
# Validation
# ============================================================


def validate(mesh: StaggeredMesh2D, rules_path: str | Path | None = None) -> MeshQualityReport:
    """Run the gate checks and the configured quality checks."""
    from src.core.linters.gate import MeshGateLinter
    from src.core.linters.quality import MeshQualityLinter
    from src.core.linters.report import MeshQualityReport

    checks = MeshGateLinter.validate(mesh)
    checks += MeshQualityLinter(rules_path).validate(mesh)
    report = MeshQualityReport(checks=checks)
    event = EventType.MESH_VALIDATED if report.passed else EventType.MESH_VALIDATION_FAILED
    logger.debug(event.value, family=mesh.family, failed=[c.name for c in report.failures()])
    return report


# ============================================================
# Serialization
# ============================================================


def _f(value: float) -> str:
    return f"{value:.17g}"


def to_text(mesh: StaggeredMesh2D) -> str:
    """Serialize to the versioned text format. Indices are 0-based."""
    p = mesh.patch
    lines = [
        "# stagfv staggered mesh; 0-based indices, exterior vertex = -1",
        f"mesh2d {FORMAT_VERSION}",
        f"family {mesh.family}",
        f"h {_f(mesh.h)}",
        "patch "
        + " ".join(_f(v) for v in (p.origin[0], p.origin[1], *p.basis[:, 0], *p.basis[:, 1])),
        f"counts {mesh.n_c} {mesh.n_cb} {mesh.n_v} {mesh.n_e} {mesh.n_eb}",
        "cells",
    ]
    lines += [
        f"{_f(x)} {_f(y)} {_f(a)}"
        for (x, y), a in zip(mesh.cell_center, mesh.cell_area, strict=True)
    ]
    lines.append("duals")
    lines += [
        f"{_f(x)} {_f(y)} {_f(a)} {int(b)}"
        for (x, y), a, b in zip(
            mesh.dual_center, mesh.dual_area, mesh.dual_is_boundary, strict=True
        )
    ]
    lines.append("edges")
    for e in range(mesh.n_edges):
        i1, i2 = mesh.edge_cells[e]
        v1, v2 = mesh.edge_duals[e]
        nx, ny = mesh.edge_normal[e]
        lines.append(
            f"{i1} {i2} {v1} {v2} {_f(nx)} {_f(ny)} "
            f"{_f(mesh.edge_length[e])} {_f(mesh.dual_edge_length[e])}"
        )
    lines.append("EC")
    lines += [" ".join(str(v) for v in (len(ec), *ec)) for ec in mesh.edges_on_cell]
    lines.append("EV")
    lines += [" ".join(str(v) for v in (len(ev), *ev)) for ev in mesh.edges_on_dual]
    return "\n".join(lines) + "\n"


class _Reader:
    def __init__(self, text: str) -> None:
        self.lines = [
            (no, line.split("#", 1)[0].split())
            for no, line in enumerate(text.splitlines(), start=1)
        ]
        self.lines = [(no, toks) for no, toks in self.lines if toks]
        self.pos = 0

    def next(self, what: str) -> tuple[int, list[str]]:
        if self.pos >= len(self.lines):
            last = self.lines[-1][0] + 1 if self.lines else 1
            raise MeshParseError(f"unexpected end of file, expected {what}", line=last)
        item = self.lines[self.pos]
        self.pos += 1
        return item

    def keyword(self, word: str, count: int) -> tuple[int, list[str]]:
        no, toks = self.next(f"'{word}'")
        if toks[0] != word or len(toks) != count + 1:
            raise MeshParseError(f"expected '{word}' with {count} values", line=no)
        return no, toks[1:]

    def numbers(self, what: str, count: int, kind: type = float) -> tuple[int, list[Any]]:
        no, toks = self.next(what)
        if len(toks) != count:
            raise MeshParseError(f"{what}: expected {count} values, got {len(toks)}", line=no)
        try:
            return no, [kind(t) for t in toks]
        except ValueError as e:
            raise MeshParseError(f"{what}: {e}", line=no) from e

    def adjacency(self, what: str) -> IntArray:
        no, toks = self.next(what)
        try:
            values = [int(t) for t in toks]
        except ValueError as e:
            raise MeshParseError(f"{what}: {e}", line=no) from e
        if values[0] != len(values) - 1:
            raise MeshParseError(f"{what}: count {values[0]} does not match entries", line=no)
        return np.asarray(values[1:], dtype=np.int64)


def from_text(
    text: str, force: bool = False, rules_path: str | Path | None = None
) -> StaggeredMesh2D:
    """Parse a mesh and validate it.

    Args:
        text: Mesh file content.
        force: Return meshes that fail error-severity checks instead of raising.
        rules_path: Optional quality rule file.

    Raises:
        MeshParseError: On malformed content, with the offending line number.
        MeshInvariantError: If validation fails and ``force`` is false.
    """
    r = _Reader(text)
    no, version = r.keyword("mesh2d", 1)
    if version[0] != str(FORMAT_VERSION):
        raise MeshParseError(f"unsupported version {version[0]}", line=no)
    _, family = r.keyword("family", 1)
    no, h_tok = r.keyword("h", 1)
    try:
        h = float(h_tok[0])
        no, patch_tok = r.keyword("patch", 6)
        pv = [float(t) for t in patch_tok]
    except ValueError as e:
        raise MeshParseError(str(e), line=no) from e
    no, count_tok = r.keyword("counts", 5)
    try:
        n_c, n_cb, n_v, n_e, n_eb = (int(t) for t in count_tok)
    except ValueError as e:
        raise MeshParseError(str(e), line=no) from e
    n_cells, n_edges = n_c + n_cb, n_e + n_eb

    r.keyword("cells", 0)
    cells = np.array([r.numbers("cell", 3)[1] for _ in range(n_cells)]).reshape(n_cells, 3)
    r.keyword("duals", 0)
    duals = np.array([r.numbers("dual", 4)[1] for _ in range(n_v)]).reshape(n_v, 4)
    r.keyword("edges", 0)
    edge_rows: list[list[float]] = []
    for _ in range(n_edges):
        no, toks = r.numbers("edge", 8, str)
        try:
            edge_rows.append([*(int(t) for t in toks[:4]), *(float(t) for t in toks[4:])])
        except ValueError as e:
            raise MeshParseError(f"edge: {e}", line=no) from e
        if not all(-1 <= int(t) < n_v for t in toks[2:4]) or not all(
            0 <= int(t) < n_cells for t in toks[:2]
        ):
            raise MeshParseError("edge: index out of range", line=no)
    edges = np.array(edge_rows).reshape(n_edges, 8)
    r.keyword("EC", 0)
    ec = tuple(r.adjacency("EC list") for _ in range(n_cells))
    r.keyword("EV", 0)
    ev = tuple(r.adjacency("EV list") for _ in range(n_v))
    for lists, bound, what in ((ec, n_edges, "EC"), (ev, n_edges, "EV")):
        for ids in lists:
            if ids.size and (ids.min() < 0 or ids.max() >= bound):
                raise MeshParseError(f"{what}: edge index out of range", line=r.lines[-1][0])

    mesh = StaggeredMesh2D(
        family=family[0],
        h=h,
        patch=AffinePatch(
            origin=np.array(pv[:2]), basis=np.array([[pv[2], pv[4]], [pv[3], pv[5]]])
        ),
        n_c=n_c,
        n_cb=n_cb,
        n_v=n_v,
        n_e=n_e,
        n_eb=n_eb,
        cell_center=cells[:, :2].copy(),
        cell_area=cells[:, 2].copy(),
        dual_center=duals[:, :2].copy(),
        dual_area=duals[:, 2].copy(),
        edge_cells=edges[:, :2].astype(np.int64),
        edge_duals=edges[:, 2:4].astype(np.int64),
        edge_normal=edges[:, 4:6].copy(),
        edge_length=edges[:, 6].copy(),
        dual_edge_length=edges[:, 7].copy(),
        edges_on_cell=ec,
        edges_on_dual=ev,
        edge_cell_sign=canonical_signs(n_edges),
        edge_dual_sign=canonical_signs(n_edges),
    )

    stored_flags = duals[:, 3].astype(bool)
    report = validate(mesh, rules_path)
    if not np.array_equal(stored_flags, mesh.dual_is_boundary):
        report = report.with_failure(
            "dual_boundary_flags",
            "stored is_boundary flags disagree with the edge data",
            int(np.argmax(stored_flags != mesh.dual_is_boundary)),
        )
    if not report.passed and not force:
        failed = ", ".join(c.name for c in report.failures())
        log_error(EventType.MESH_VALIDATION_FAILED, failed, source="load")
        raise MeshInvariantError(f"mesh fails validation: {failed}", report)
    return mesh


def save(mesh: StaggeredMesh2D, path: str | Path) -> None:
    Path(path).write_text(to_text(mesh), encoding="utf-8")
    logger.debug(EventType.MESH_SAVED.value, path=str(path), family=mesh.family)


def load(
    path: str | Path, force: bool = False, rules_path: str | Path | None = None
) -> StaggeredMesh2D:
    mesh = from_text(Path(path).read_text(encoding="utf-8"), force=force, rules_path=rules_path)
    logger.debug(EventType.MESH_LOADED.value, path=str(path), family=mesh.family)
    return mesh


def replace_geometry(mesh: StaggeredMesh2D, **changes: Any) -> StaggeredMesh2D:
    """Copy of ``mesh`` with primitive fields replaced and derived data rebuilt."""
    return dataclasses.replace(mesh, **changes)
