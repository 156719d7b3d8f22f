"""Unit tests for the manufactured solutions."""

from __future__ import annotations

import numpy as np
import pytest

from src.core.manufactured import (
    CASES_1D,
    CASES_2D,
    ManufacturedCase1D,
    ManufacturedCase2D,
    UnknownCaseError,
    cos_factor,
    get_case,
    sin2_factor,
)
from src.core.mesh2d import AffinePatch

PATCHES = {"square": AffinePatch.unit_square(), "rhombus": AffinePatch.rhombus()}


def _boundary_points(patch: AffinePatch, count: int = 41) -> tuple[np.ndarray, np.ndarray]:
    t = np.linspace(0.0, 1.0, count)
    xi = np.concatenate([t, t, np.zeros_like(t), np.ones_like(t)])
    eta = np.concatenate([np.zeros_like(t), np.ones_like(t), t, t])
    return patch.to_physical(xi, eta)


def _interior_points(patch: AffinePatch, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    xi, eta = rng.uniform(0.05, 0.95, (2, 200))
    return patch.to_physical(xi, eta)


# ============================================================
# Registry
# ============================================================


class TestRegistry:
    """Tests for case lookup."""

    def test_lookup_by_dimension(self) -> None:
        assert isinstance(get_case("sinpi", 1), ManufacturedCase1D)
        assert isinstance(get_case("sin2", 2), ManufacturedCase2D)

    def test_unknown_case_lists_choices(self) -> None:
        with pytest.raises(UnknownCaseError, match="available"):
            get_case("sin2", 1)

    def test_factor_order_limit(self) -> None:
        with pytest.raises(ValueError, match="order 4"):
            sin2_factor(4, np.zeros(1))
        with pytest.raises(ValueError):
            cos_factor(4, np.zeros(1))


# ============================================================
# 1D cases
# ============================================================


class TestCases1D:
    """-u'' = f with homogeneous Dirichlet data."""

    @pytest.mark.parametrize("name", sorted(CASES_1D))
    def test_boundary_values(self, name: str) -> None:
        u = CASES_1D[name].u
        np.testing.assert_allclose(u(np.array([0.0, 1.0])), 0.0, atol=1e-15)

    @pytest.mark.parametrize("name", sorted(CASES_1D))
    def test_equation_holds(self, name: str) -> None:
        case = CASES_1D[name]
        x = np.linspace(0.1, 0.9, 9)
        step = 1e-4
        second = (case.u(x + step) - 2 * case.u(x) + case.u(x - step)) / step**2
        np.testing.assert_allclose(-second, case.f(x), atol=1e-5)
        slope = (case.u(x + step) - case.u(x - step)) / (2 * step)
        np.testing.assert_allclose(slope, case.u_x(x), atol=1e-6)


# ============================================================
# 2D cases
# ============================================================


class TestCases2D:
    """Stokes data on both patches."""

    @pytest.mark.parametrize("patch", sorted(PATCHES))
    def test_streamfunction_clamped_on_boundary(self, patch: str) -> None:
        """psi and grad psi vanish on the patch boundary."""
        case = CASES_2D["sin2"].on_patch(PATCHES[patch])
        x, y = _boundary_points(PATCHES[patch])
        np.testing.assert_allclose(case.psi(x, y), 0.0, atol=1e-14)
        gx, gy = case.stream.grad(x, y)
        np.testing.assert_allclose(gx, 0.0, atol=1e-12)
        np.testing.assert_allclose(gy, 0.0, atol=1e-12)

    @pytest.mark.parametrize("patch", sorted(PATCHES))
    def test_helmholtz_split_of_forcing(self, patch: str, rng: np.random.Generator) -> None:
        case = CASES_2D["sin2"].on_patch(PATCHES[patch])
        x, y = _interior_points(PATCHES[patch], rng)
        assert case.helmholtz_defect(x, y) <= 1e-10

    @pytest.mark.parametrize("patch", sorted(PATCHES))
    def test_vorticity_is_laplacian(self, patch: str, rng: np.random.Generator) -> None:
        """omega matches a five-point Laplacian of psi."""
        case = CASES_2D["sin2"].on_patch(PATCHES[patch])
        x, y = _interior_points(PATCHES[patch], rng)
        step = 1e-4
        lap = (
            case.psi(x + step, y)
            + case.psi(x - step, y)
            + case.psi(x, y + step)
            + case.psi(x, y - step)
            - 4 * case.psi(x, y)
        ) / step**2
        np.testing.assert_allclose(lap, case.omega(x, y), atol=1e-3)

    def test_velocity_divergence_free(self, rng: np.random.Generator) -> None:
        case = CASES_2D["sin2"].on_patch(PATCHES["rhombus"])
        x, y = _interior_points(PATCHES["rhombus"], rng)
        step = 1e-6
        ux_r, _ = case.velocity(x + step, y)
        ux_l, _ = case.velocity(x - step, y)
        _, uy_t = case.velocity(x, y + step)
        _, uy_b = case.velocity(x, y - step)
        divergence = (ux_r - ux_l + uy_t - uy_b) / (2 * step)
        np.testing.assert_allclose(divergence, 0.0, atol=1e-6)

    def test_pressure_gradient(self, rng: np.random.Generator) -> None:
        case = CASES_2D["sin2"].on_patch(PATCHES["rhombus"])
        x, y = _interior_points(PATCHES["rhombus"], rng)
        step = 1e-6
        gx, gy = case.grad_p(x, y)
        dpx = (case.p(x + step, y) - case.p(x - step, y)) / (2 * step)
        dpy = (case.p(x, y + step) - case.p(x, y - step)) / (2 * step)
        np.testing.assert_allclose(dpx, gx, atol=1e-6)
        np.testing.assert_allclose(dpy, gy, atol=1e-6)

    def test_patch_maps_invert(self) -> None:
        patch = PATCHES["rhombus"]
        xi, eta = np.array([0.2, 0.7]), np.array([0.9, 0.1])
        back = patch.to_reference(*patch.to_physical(xi, eta))
        np.testing.assert_allclose(back[0], xi)
        np.testing.assert_allclose(back[1], eta)
