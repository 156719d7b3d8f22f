"""Nonuniform primary/dual interval partitions of [0, 1].

Primary cells K_i = [x_{i-1/2}, x_{i+1/2}] carry centers x_i that need not
be midpoints; dual cells K_{i+1/2} = [x_i, x_{i+1}] use x_0 = 0 and
x_{N+1} = 1 at the ends. Boundary conditions live in the operator module.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import numpy.typing as npt

from src.core.config import get_settings
from src.core.logging import EventType, get_logger

logger = get_logger(__name__)

FloatArray = npt.NDArray[np.float64]

COVERAGE_TOL = 1e-12

# Centre draws contract toward the midpoint on each redraw
_INITIAL_SPREAD = 0.45
_SPREAD_DECAY = 0.7
_MAX_REDRAWS = 200


# ============================================================
# Exceptions
# ============================================================


class Mesh1DError(Exception):
    """Base class for 1D mesh failures."""


class InvalidCountError(Mesh1DError):
    """Raised when a cell count is below the minimum."""


class InvalidRatioError(Mesh1DError):
    """Raised when a ratio bound is below 1 or not finite."""


class MeshParseError(Mesh1DError):
    """Raised when a serialized 1D mesh cannot be read."""

    def __init__(self, message: str, line: int) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


class KindMismatchError(Exception):
    """Raised when a field of the wrong kind or length reaches an operator."""


# ============================================================
# Types
# ============================================================


class CenterPlacement(str, Enum):
    """How cell centers are placed by :func:`gen_random`."""

    MIDPOINT = "midpoint"
    RANDOM = "random"


class GridKind(str, Enum):
    """Which grid a 1D field lives on."""

    PRIMARY = "primary"
    DUAL = "dual"


@dataclass(frozen=True, eq=False)
class Mesh1D:
    """Primary/dual partition of the unit interval.

    Attributes:
        x_face: Face coordinates x_{1/2} .. x_{N+1/2}, length N+1.
        x_center: Center coordinates x_1 .. x_N, length N.
        ratio_bound: Declared quasi-uniformity bound, if any.
    """

    x_face: FloatArray
    x_center: FloatArray
    ratio_bound: float | None = None

    @property
    def N(self) -> int:
        return int(self.x_center.size)

    @property
    def h(self) -> FloatArray:
        """Primary cell lengths h_i."""
        return np.diff(self.x_face)

    @property
    def h_half(self) -> FloatArray:
        """Dual cell lengths h_{i+1/2}, i = 0..N, with x_0 = 0 and x_{N+1} = 1."""
        return np.diff(np.concatenate([[0.0], self.x_center, [1.0]]))

    @property
    def h_max(self) -> float:
        return float(max(self.h.max(), self.h_half.max()))

    def quasi_uniformity(self) -> float:
        """Largest over smallest length among primary cells and interior dual cells.

        The end dual cells are half cells by construction and are left out.
        """
        lengths = np.concatenate([self.h, self.h_half[1:-1]])
        return float(lengths.max() / lengths.min())

    def same_geometry(self, other: Mesh1D) -> bool:
        """Bitwise comparison of the coordinate arrays."""
        return bool(
            np.array_equal(self.x_face, other.x_face)
            and np.array_equal(self.x_center, other.x_center)
        )


@dataclass(frozen=True, eq=False)
class Grid1DField:
    """Values on the primary (length N) or dual (length N+1) grid."""

    kind: GridKind
    values: FloatArray

    @classmethod
    def primary(cls, values: npt.ArrayLike) -> Grid1DField:
        return cls(GridKind.PRIMARY, np.asarray(values, dtype=np.float64))

    @classmethod
    def dual(cls, values: npt.ArrayLike) -> Grid1DField:
        return cls(GridKind.DUAL, np.asarray(values, dtype=np.float64))

    def require(self, mesh: Mesh1D, kind: GridKind) -> FloatArray:
        """Return the values after checking kind and length against ``mesh``."""
        if self.kind is not kind:
            raise KindMismatchError(f"expected {kind.value} field, got {self.kind.value}")
        expected = mesh.N if kind is GridKind.PRIMARY else mesh.N + 1
        if self.values.shape != (expected,):
            raise KindMismatchError(
                f"{kind.value} field needs {expected} values, got {self.values.shape}"
            )
        return self.values


# ============================================================
# Generators
# ============================================================


def gen_uniform(N: int) -> Mesh1D:
    """Uniform mesh with centers at cell midpoints.

    Raises:
        InvalidCountError: If ``N < 2``.

    Examples:
        >>> gen_uniform(2).x_center.tolist()
        [0.25, 0.75]
    """
    if N < 2:
        raise InvalidCountError(f"N must be >= 2, got {N}")
    faces = np.arange(N + 1, dtype=np.float64) / N
    centers = (np.arange(N, dtype=np.float64) + 0.5) / N
    return Mesh1D(x_face=faces, x_center=centers, ratio_bound=1.0)


def gen_random(
    N: int,
    ratio: float,
    seed: int,
    centers: CenterPlacement = CenterPlacement.RANDOM,
) -> Mesh1D:
    """Seeded random mesh whose quasi-uniformity stays within ``ratio``.

    With ``MIDPOINT`` placement interior faces are midpoints of neighbouring
    centers; with ``RANDOM`` placement centers fall strictly inside their cells
    and are redrawn, in a window shrinking toward the cell midpoint, until every
    interior dual length respects the bound.

    Args:
        N: Number of primary cells, at least 2.
        ratio: Declared bound on max/min length, at least 1.
        seed: Seed for ``numpy.random.default_rng``.
        centers: Center placement mode.

    Returns:
        Mesh1D with ``ratio_bound = ratio``.

    Raises:
        InvalidCountError: If ``N < 2``.
        InvalidRatioError: If ``ratio < 1`` or is not finite.
    """
    if N < 2:
        raise InvalidCountError(f"N must be >= 2, got {N}")
    if not math.isfinite(ratio) or ratio < 1.0:
        raise InvalidRatioError(f"ratio must be a finite value >= 1, got {ratio}")
    if ratio == 1.0:
        return gen_uniform(N)

    rng = np.random.default_rng(seed)
    placement = CenterPlacement(centers)
    if placement is CenterPlacement.MIDPOINT:
        mesh = _midpoint_mesh(N, ratio, rng)
    else:
        mesh = _random_center_mesh(N, ratio, rng)

    logger.debug(
        EventType.MESH_GENERATED.value,
        family="random",
        N=N,
        ratio=ratio,
        seed=seed,
        centers=placement.value,
    )
    return mesh


def _midpoint_mesh(N: int, ratio: float, rng: np.random.Generator) -> Mesh1D:
    # Interior dual lengths drawn first; end duals are half of their neighbour
    gaps = rng.uniform(1.0, ratio, size=N - 1)
    half = np.concatenate([[gaps[0] / 2.0], gaps, [gaps[-1] / 2.0]])
    half /= half.sum()
    centers = np.cumsum(half)[:-1]
    faces = np.concatenate([[0.0], 0.5 * (centers[:-1] + centers[1:]), [1.0]])
    return Mesh1D(x_face=faces, x_center=centers, ratio_bound=ratio)


def _random_center_mesh(N: int, ratio: float, rng: np.random.Generator) -> Mesh1D:
    widths = rng.uniform(1.0, ratio, size=N)
    widths /= widths.sum()
    faces = np.concatenate([[0.0], np.cumsum(widths)])
    faces[-1] = 1.0
    h = np.diff(faces)

    theta = 0.5 + rng.uniform(-_INITIAL_SPREAD, _INITIAL_SPREAD, size=N)
    spread = _INITIAL_SPREAD
    for _ in range(_MAX_REDRAWS):
        interior = (1.0 - theta[:-1]) * h[:-1] + theta[1:] * h[1:]
        lengths = np.concatenate([h, interior])
        bad = interior * ratio < lengths.max()
        bad |= interior > ratio * lengths.min()
        if not bad.any():
            break
        spread *= _SPREAD_DECAY
        offending = np.zeros(N, dtype=bool)
        offending[:-1] |= bad
        offending[1:] |= bad
        theta[offending] = 0.5 + rng.uniform(-spread, spread, size=int(offending.sum()))
    else:
        logger.warning(
            EventType.CENTER_REDRAW_EXHAUSTED.value,
            N=N,
            ratio=ratio,
            redraws=_MAX_REDRAWS,
            fallback="midpoint",
        )
        theta[:] = 0.5

    centers = faces[:-1] + theta * h
    return Mesh1D(x_face=faces, x_center=centers, ratio_bound=ratio)


# ============================================================
# Validation
# ============================================================


def validate(mesh: Mesh1D, ratio_bound: float | None = None) -> list[str]:
    """Check every Mesh1D invariant.

    The quasi-uniformity bound is ``ratio_bound`` when given, else the
    mesh's declared bound, else the configured ``ratio``. Loaded meshes
    declare none, so they are checked against the configuration.

    Returns:
        Human-readable violations; empty iff the mesh is valid.

    Examples:
        >>> validate(gen_uniform(4))
        []
    """
    violations: list[str] = []
    faces, centers = mesh.x_face, mesh.x_center

    if faces.size != centers.size + 1:
        violations.append(
            f"shape: {faces.size} faces for {centers.size} centers (expected N+1 faces)"
        )
        return violations

    if faces[0] != 0.0 or faces[-1] != 1.0:
        violations.append(f"endpoints: faces span [{faces[0]!r}, {faces[-1]!r}], expected [0, 1]")

    merged = np.empty(faces.size + centers.size)
    merged[0::2] = faces
    merged[1::2] = centers
    steps = np.diff(merged)
    if np.any(steps <= 0.0):
        first = int(np.argmax(steps <= 0.0))
        violations.append(f"interleaving: point {first + 1} does not exceed point {first}")

    total = float(mesh.h.sum())
    if abs(total - 1.0) > COVERAGE_TOL:
        violations.append(f"coverage: sum of h_i is {total!r}, expected 1")

    if np.any(mesh.h <= 0.0) or np.any(mesh.h_half <= 0.0):
        violations.append("positivity: some h_i or h_{i+1/2} is not positive")

    if not violations:
        bound = ratio_bound if ratio_bound is not None else mesh.ratio_bound
        if bound is None:
            bound = get_settings().ratio
        observed = mesh.quasi_uniformity()
        if observed > bound * (1.0 + COVERAGE_TOL):
            violations.append(
                f"quasi-uniformity: ratio {observed:.6g} exceeds bound {bound:.6g}"
            )

    return violations


# ============================================================
# Serialization
# ============================================================


def _fmt(values: FloatArray) -> str:
    return " ".join(f"{v:.17g}" for v in values)


def to_text(mesh: Mesh1D) -> str:
    """Serialize as ``mesh1d N`` / faces / centers at 17 significant digits."""
    return f"mesh1d {mesh.N}\n{_fmt(mesh.x_face)}\n{_fmt(mesh.x_center)}\n"


def from_text(text: str) -> Mesh1D:
    """Parse the format written by :func:`to_text`.

    Raises:
        MeshParseError: On a malformed header, wrong counts or bad numbers.
    """
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise MeshParseError("empty input", line=1)
    header = lines[0].split()
    if len(header) != 2 or header[0] != "mesh1d":
        raise MeshParseError(f"expected 'mesh1d N', got {lines[0]!r}", line=1)
    try:
        n = int(header[1])
    except ValueError as e:
        raise MeshParseError(f"bad cell count {header[1]!r}", line=1) from e
    if len(lines) < 3:
        raise MeshParseError("missing face or center line", line=len(lines) + 1)

    arrays = []
    for lineno, expected in ((2, n + 1), (3, n)):
        try:
            values = np.array([float(tok) for tok in lines[lineno - 1].split()])
        except ValueError as e:
            raise MeshParseError(str(e), line=lineno) from e
        if values.size != expected:
            raise MeshParseError(f"expected {expected} values, got {values.size}", line=lineno)
        arrays.append(values)
    return Mesh1D(x_face=arrays[0], x_center=arrays[1])


def save(mesh: Mesh1D, path: str | Path) -> None:
    Path(path).write_text(to_text(mesh), encoding="utf-8")


def load(path: str | Path) -> Mesh1D:
    return from_text(Path(path).read_text(encoding="utf-8"))
