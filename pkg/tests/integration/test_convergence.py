"""Integration tests for full convergence studies.

Runs the manufactured-solution studies end to end and checks the observed
orders of accuracy:
- 1D: first order on random meshes, second order with midpoint centers
- 2D: at least first order on perturbed meshes, second order on rect and trihex
- Truncation terms: tau_p and tau_f second order, tau_omega first order
"""

from __future__ import annotations

import numpy as np
import pytest

from src.core.harness import make_mesh_2d, run_1d_study, run_2d_study
from src.core.identities import run_identity_suite
from src.core.manufactured import CASES_2D
from src.core.ops2d import div
from src.core.stokes2d import solve_stokes, structural_violations

pytestmark = [pytest.mark.integration, pytest.mark.slow]

LEVELS_1D = [16, 32, 64, 128, 256, 512]
LEVELS_2D = [9, 17, 33, 65]

# ============================================================
# 1D elliptic problem
# ============================================================


class TestConvergence1D:
    """u = sin(pi x) with homogeneous Dirichlet data."""

    def test_random_centers_first_order(self) -> None:
        report = run_1d_study("sinpi", "random", LEVELS_1D, ratio=3.0, seed=7)
        assert report.rates["err_l2"] >= 0.9
        assert report.rates["err_h1"] >= 0.9

    def test_flux_truncation_decays_off_midpoint(self) -> None:
        report = run_1d_study("sinpi", "random", [16, 32, 64], ratio=3.0, seed=7)
        assert report.rates["tau_f"] >= 0.9

    def test_midpoint_centers_second_order(self) -> None:
        report = run_1d_study("sinpi", "midpoint", LEVELS_1D, ratio=3.0, seed=7)
        assert report.rates["err_l2"] >= 1.9
        assert report.rates["err_h1"] >= 1.9

    def test_cg_matches_direct(self) -> None:
        direct = run_1d_study("sinpi", "random", [16, 32, 64])
        iterative = run_1d_study("sinpi", "random", [16, 32, 64], solver="cg")
        for a, b in zip(direct.levels, iterative.levels, strict=True):
            assert a.err_l2 == pytest.approx(b.err_l2, rel=1e-6)


# ============================================================
# 2D Stokes problem
# ============================================================


class TestConvergence2D:
    """psi = sin^2(pi x) sin^2(pi y), p = cos(pi x) cos(pi y)."""

    def test_perturbed_first_order(self) -> None:
        report = run_2d_study("sin2", "perturbed", LEVELS_2D, amplitude=0.1, seed=3, workers=2)
        assert report.rates["err_l2"] >= 0.9
        assert report.rates["err_h1"] >= 0.9

    @pytest.mark.parametrize("family", ["rect", "trihex"])
    def test_special_meshes_second_order(self, family: str) -> None:
        report = run_2d_study("sin2", family, LEVELS_2D, workers=2)
        assert report.rates["err_l2"] >= 1.8
        assert report.rates["err_h1"] >= 1.8

    def test_truncation_decomposition(self) -> None:
        report = run_2d_study("sin2", "perturbed", [17, 33, 65], amplitude=0.1, seed=3)
        assert report.rates["tau_p"] >= 1.8
        assert report.rates["tau_f"] >= 1.8
        assert report.rates["tau_omega"] >= 0.9


# ============================================================
# Structural invariants and exact identities
# ============================================================


@pytest.mark.parametrize("family", ["rect", "perturbed", "trihex"])
class TestStructure:
    """Properties that hold to round-off on every mesh."""

    @pytest.mark.parametrize("n", [8, 16])
    def test_identity_suite(self, family: str, n: int) -> None:
        report = run_identity_suite(make_mesh_2d(family, n, seed=3), samples=50, seed=n)
        assert report.euler
        assert report.passed, "\n".join(report.lines())

    def test_stokes_invariants(self, family: str) -> None:
        mesh = make_mesh_2d(family, 33, seed=3)
        exact = CASES_2D["sin2"].on_patch(mesh.patch)
        solution = solve_stokes(mesh, exact.psi_f, exact.phi_f, tol=1e-12)
        assert structural_violations(mesh, solution, 1e-12) == []
        assert np.abs(div(mesh, solution.u).values).max() < 1e-9
        assert np.abs(solution.u.values[mesh.boundary_edge_mask]).max() == 0.0
        assert np.abs(solution.psi.values[mesh.dual_is_boundary]).max() == 0.0
