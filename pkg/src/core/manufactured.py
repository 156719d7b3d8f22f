"""Manufactured solutions for the 1D and 2D schemes.

2D data is posed on a reference unit square and carried to each mesh's
affine patch, so the same streamfunction vanishes with its gradient on the
boundary of the square and of the rhombus alike. Reference fields are
separable products a(xi) b(eta) given by derivative tables up to third
order; physical derivatives follow from the chain rule with the patch basis.
"""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass
from typing import Literal

import numpy as np

from src.core.mesh2d import AffinePatch, FloatArray

Deriv1D = Callable[[int, FloatArray], FloatArray]
Function1D = Callable[[FloatArray], FloatArray]
Function2D = Callable[[FloatArray, FloatArray], FloatArray]

PI = np.pi


class UnknownCaseError(Exception):
    """Raised when a case name is not registered for the requested dimension."""


# ============================================================
# 1D factors
# ============================================================


def sin2_factor(order: int, t: FloatArray) -> FloatArray:
    """Derivatives of sin^2(pi t)."""
    t = np.asarray(t, dtype=np.float64)
    if order == 0:
        return np.sin(PI * t) ** 2
    if order == 1:
        return PI * np.sin(2 * PI * t)
    if order == 2:
        return 2 * PI**2 * np.cos(2 * PI * t)
    if order == 3:
        return -4 * PI**3 * np.sin(2 * PI * t)
    raise ValueError(f"derivative order {order} not tabulated")


def cos_factor(order: int, t: FloatArray) -> FloatArray:
    """Derivatives of cos(pi t)."""
    t = np.asarray(t, dtype=np.float64)
    table = (np.cos, lambda s: -np.sin(s), lambda s: -np.cos(s), np.sin)
    if not 0 <= order < len(table):
        raise ValueError(f"derivative order {order} not tabulated")
    return np.asarray(PI**order * table[order](PI * t), dtype=np.float64)


def zero_factor(order: int, t: FloatArray) -> FloatArray:
    return np.zeros_like(np.asarray(t, dtype=np.float64))


# ============================================================
# 2D fields
# ============================================================


@dataclass(frozen=True)
class SeparableField:
    """F(xi, eta) = fx(xi) * fy(eta) with tabulated derivatives."""

    fx: Deriv1D
    fy: Deriv1D

    def d(self, i: int, j: int, xi: FloatArray, eta: FloatArray) -> FloatArray:
        return self.fx(i, xi) * self.fy(j, eta)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    """A reference field composed with the inverse of an affine patch map."""

    field: SeparableField
    patch: AffinePatch

    def _ref(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return self.patch.to_reference(x, y)

    def _push(self, gxi: FloatArray, geta: FloatArray) -> tuple[FloatArray, FloatArray]:
        inv = self.patch.inverse
        return inv[0, 0] * gxi + inv[1, 0] * geta, inv[0, 1] * gxi + inv[1, 1] * geta

    @property
    def _metric(self) -> FloatArray:
        inv = self.patch.inverse
        return np.asarray(inv @ inv.T, dtype=np.float64)

    def value(self, x: FloatArray, y: FloatArray) -> FloatArray:
        xi, eta = self._ref(x, y)
        return self.field.d(0, 0, xi, eta)

    def grad(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        xi, eta = self._ref(x, y)
        return self._push(self.field.d(1, 0, xi, eta), self.field.d(0, 1, xi, eta))

    def laplacian(self, x: FloatArray, y: FloatArray) -> FloatArray:
        xi, eta = self._ref(x, y)
        g = self._metric
        f = self.field
        return (
            g[0, 0] * f.d(2, 0, xi, eta)
            + 2.0 * g[0, 1] * f.d(1, 1, xi, eta)
            + g[1, 1] * f.d(0, 2, xi, eta)
        )

    def grad_laplacian(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        xi, eta = self._ref(x, y)
        g = self._metric
        f = self.field
        dxi = g[0, 0] * f.d(3, 0, xi, eta) + 2.0 * g[0, 1] * f.d(2, 1, xi, eta) + g[1, 1] * f.d(
            1, 2, xi, eta
        )
        deta = g[0, 0] * f.d(2, 1, xi, eta) + 2.0 * g[0, 1] * f.d(1, 2, xi, eta) + g[1, 1] * f.d(
            0, 3, xi, eta
        )
        return self._push(dxi, deta)


@dataclass(frozen=True, eq=False)
class PhysicalCase2D:
    """Exact Stokes solution on one patch: u = perp grad psi, omega = lap psi.

    The forcing f = -perp grad omega + grad p is supplied through its
    Helmholtz potentials psi_f = -omega and phi_f = p.
    """

    name: str
    stream: PhysicalField
    pressure: PhysicalField

    def psi(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return self.stream.value(x, y)

    def velocity(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        gx, gy = self.stream.grad(x, y)
        return -gy, gx

    def omega(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return self.stream.laplacian(x, y)

    def grad_omega(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return self.stream.grad_laplacian(x, y)

    def p(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return self.pressure.value(x, y)

    def grad_p(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return self.pressure.grad(x, y)

    def psi_f(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return -self.omega(x, y)

    def grad_psi_f(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        gx, gy = self.grad_omega(x, y)
        return -gx, -gy

    def phi_f(self, x: FloatArray, y: FloatArray) -> FloatArray:
        return self.p(x, y)

    def grad_phi_f(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        return self.grad_p(x, y)

    def forcing(self, x: FloatArray, y: FloatArray) -> tuple[FloatArray, FloatArray]:
        """-Laplacian(u) + grad p with Laplacian(u) = perp grad Laplacian(psi)."""
        lx, ly = self.stream.grad_laplacian(x, y)
        px, py = self.grad_p(x, y)
        return ly + px, -lx + py

    def helmholtz_defect(self, x: FloatArray, y: FloatArray) -> float:
        """max |f - (perp grad psi_f + grad phi_f)| at the given points."""
        fx, fy = self.forcing(x, y)
        sx, sy = self.grad_psi_f(x, y)
        px, py = self.grad_phi_f(x, y)
        return float(max(np.abs(fx - (-sy + px)).max(), np.abs(fy - (sx + py)).max()))


@dataclass(frozen=True)
class ManufacturedCase2D:
    """Reference-square streamfunction and pressure."""

    name: str
    psi: SeparableField
    p: SeparableField
    regularity: str
    dimension: Literal[2] = 2

    def on_patch(self, patch: AffinePatch) -> PhysicalCase2D:
        return PhysicalCase2D(
            name=self.name,
            stream=PhysicalField(self.psi, patch),
            pressure=PhysicalField(self.p, patch),
        )


@dataclass(frozen=True)
class ManufacturedCase1D:
    """Exact solution of -u'' = f with homogeneous Dirichlet data."""

    name: str
    u: Function1D
    u_x: Function1D
    f: Function1D
    regularity: str
    dimension: Literal[1] = 1


# ============================================================
# Registry
# ============================================================


CASES_1D: dict[str, ManufacturedCase1D] = {
    "sinpi": ManufacturedCase1D(
        name="sinpi",
        u=lambda x: np.sin(PI * x),
        u_x=lambda x: PI * np.cos(PI * x),
        f=lambda x: PI**2 * np.sin(PI * x),
        regularity="C-infinity",
    ),
    "quadratic": ManufacturedCase1D(
        name="quadratic",
        u=lambda x: x * (1.0 - x),
        u_x=lambda x: 1.0 - 2.0 * x,
        f=lambda x: np.full_like(np.asarray(x, dtype=np.float64), 2.0),
        regularity="polynomial",
    ),
    "zero": ManufacturedCase1D(
        name="zero",
        u=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        u_x=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        f=lambda x: np.zeros_like(np.asarray(x, dtype=np.float64)),
        regularity="polynomial",
    ),
}

CASES_2D: dict[str, ManufacturedCase2D] = {
    "sin2": ManufacturedCase2D(
        name="sin2",
        psi=SeparableField(sin2_factor, sin2_factor),
        p=SeparableField(cos_factor, cos_factor),
        regularity="C-infinity; psi and grad psi vanish on the patch boundary",
    ),
    "zero": ManufacturedCase2D(
        name="zero",
        psi=SeparableField(zero_factor, zero_factor),
        p=SeparableField(zero_factor, zero_factor),
        regularity="polynomial",
    ),
}


def get_case(name: str, dimension: int) -> ManufacturedCase1D | ManufacturedCase2D:
    """Look up a registered case.

    Raises:
        UnknownCaseError: If ``name`` is not registered for ``dimension``.

    Examples:
        >>> get_case("sinpi", 1).name
        'sinpi'
    """
    registry: dict[str, ManufacturedCase1D] | dict[str, ManufacturedCase2D]
    registry = CASES_1D if dimension == 1 else CASES_2D
    if name not in registry:
        raise UnknownCaseError(
            f"unknown {dimension}D case {name!r}; available: {sorted(registry)}"
        )
    return registry[name]
