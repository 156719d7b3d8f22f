"""Unit tests for the staggered 2D operators."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.core.mesh2d import StaggeredMesh2D, gen_perturbed, gen_rect
from src.core.ops2d import (
    CellField,
    DualField,
    EdgeField,
    FieldParseError,
    FieldShapeError,
    RepresentationMismatchError,
    boundary_slip,
    curl,
    curl_norm,
    discretize_forcing,
    div,
    dual_cell_l2_error,
    dump_field,
    edge_l2_norm,
    grad_cell,
    inner_cell,
    inner_dual,
    inner_edge,
    load_field,
    perp_grad_dual,
    poincare_constant,
    prolong,
    random_fields,
    restrict_cell_points,
    restrict_dual_points,
    restrict_velocity,
)


def _scale(*arrays: np.ndarray) -> float:
    return float(np.prod([np.abs(a).max() for a in arrays]))


# ============================================================
# Compatibility identities
# ============================================================


class TestIdentities:
    """Structural identities on every mesh family."""

    def test_div_of_perp_grad_vanishes(
        self, any_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        psi = DualField(rng.standard_normal(any_mesh.n_v))
        d = div(any_mesh, perp_grad_dual(any_mesh, psi)).values
        assert np.abs(d).max() <= 1e-10 * np.abs(psi.values).max() / any_mesh.h**2

    def test_curl_of_grad_vanishes(
        self, any_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        phi = CellField(rng.standard_normal(any_mesh.n_cells))
        w = curl(any_mesh, grad_cell(any_mesh, phi)).values
        assert np.abs(w).max() <= 1e-10 * np.abs(phi.values).max() / any_mesh.h**2

    def test_gradient_adjoint_to_divergence(
        self, any_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        phi, _, u = random_fields(any_mesh, rng)
        total = 2.0 * inner_edge(any_mesh, grad_cell(any_mesh, phi), u) + inner_cell(
            any_mesh, phi, div(any_mesh, u)
        )
        assert abs(total) <= 1e-12 * any_mesh.n_edges * _scale(phi.values, u.values)

    def test_perp_gradient_adjoint_to_curl(
        self, any_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        _, psi, u = random_fields(any_mesh, rng)
        total = 2.0 * inner_edge(any_mesh, perp_grad_dual(any_mesh, psi), u) + inner_dual(
            any_mesh, psi, curl(any_mesh, u)
        )
        assert abs(total) <= 1e-12 * any_mesh.n_edges * _scale(psi.values, u.values)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), n=st.integers(4, 12))
    def test_adjointness_on_random_perturbed_meshes(self, seed: int, n: int) -> None:
        mesh = gen_perturbed(n, n, 0.2, seed)
        rng = np.random.default_rng(seed)
        phi, psi, u = random_fields(mesh, rng)
        grad_side = 2.0 * inner_edge(mesh, grad_cell(mesh, phi), u)
        assert abs(grad_side + inner_cell(mesh, phi, div(mesh, u))) <= 1e-11 * mesh.n_edges * (
            _scale(phi.values, u.values)
        )
        perp_side = 2.0 * inner_edge(mesh, perp_grad_dual(mesh, psi), u)
        assert abs(perp_side + inner_dual(mesh, psi, curl(mesh, u))) <= 1e-11 * mesh.n_edges * (
            _scale(psi.values, u.values)
        )


# ============================================================
# Exactness
# ============================================================


class TestExactness:
    """Operators reproduce low-order polynomials."""

    def test_grad_of_linear_is_exact(self, any_mesh: StaggeredMesh2D) -> None:
        phi = restrict_cell_points(any_mesh, lambda x, y: 2.0 * x - 3.0 * y)
        expected = any_mesh.edge_normal @ np.array([2.0, -3.0])
        np.testing.assert_allclose(grad_cell(any_mesh, phi).values, expected, atol=1e-10)

    def test_perp_grad_of_linear_exact_on_interior_edges(self, any_mesh: StaggeredMesh2D) -> None:
        """Exterior vertices carry zero, so only interior edges see the linear field."""
        psi = restrict_dual_points(any_mesh, lambda x, y: 1.0 + x + 2.0 * y)
        u = perp_grad_dual(any_mesh, psi).values
        expected = -(any_mesh.edge_tangent @ np.array([1.0, 2.0]))
        interior = any_mesh.interior_edge_mask
        np.testing.assert_allclose(u[interior], expected[interior], atol=1e-10)
        assert not np.allclose(u[~interior], expected[~interior])

    @pytest.mark.parametrize("family", ["rect", "trihex"])
    def test_rigid_rotation_has_curl_two(self, family: str, request: pytest.FixtureRequest) -> None:
        """Counterclockwise rotation (-y, x) has vorticity +2 away from the boundary."""
        mesh = request.getfixturevalue(f"{family}_mesh")
        u = restrict_velocity(mesh, lambda x, y: 0.5 * (x**2 + y**2))
        w = curl(mesh, u).values[mesh.trusted_dual_mask]
        assert w.size > 0
        np.testing.assert_allclose(w, 2.0, rtol=1e-9)

    def test_grad_of_constant_vanishes(self, any_mesh: StaggeredMesh2D) -> None:
        g = grad_cell(any_mesh, CellField(np.full(any_mesh.n_cells, 4.0)))
        assert not g.values.any()


# ============================================================
# Norms and restriction
# ============================================================


class TestNorms:
    """Tests for norms, slip and forcing."""

    def test_diamonds_tile_domain(self, any_mesh: StaggeredMesh2D) -> None:
        """Interior diamonds plus boundary half-diamonds cover the domain."""
        ones = EdgeField(np.ones(any_mesh.n_edges))
        interior = any_mesh.interior_edge_mask
        inside = any_mesh.diamond_area[interior].sum()
        assert edge_l2_norm(any_mesh, ones) ** 2 == pytest.approx(inside)
        covered = inside + 0.5 * any_mesh.diamond_area[~interior].sum()
        assert covered == pytest.approx(any_mesh.domain_area, rel=1e-12)

    def test_boundary_slip(self, rect3: StaggeredMesh2D) -> None:
        values = np.zeros(rect3.n_edges)
        values[rect3.n_e + 2] = -0.75
        assert boundary_slip(rect3, EdgeField(values)) == 0.75

    def test_curl_norm_of_gradient_is_zero(
        self, rect_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        phi = CellField(rng.standard_normal(rect_mesh.n_cells))
        assert curl_norm(rect_mesh, grad_cell(rect_mesh, phi)) == pytest.approx(0.0, abs=1e-8)

    def test_forcing_combines_potentials(self, rect_mesh: StaggeredMesh2D) -> None:
        forcing = discretize_forcing(
            rect_mesh, lambda x, y: np.sin(np.pi * x) * y, lambda x, y: x * y
        )
        expected = (
            perp_grad_dual(rect_mesh, forcing.psi_f_h).values
            + grad_cell(rect_mesh, forcing.phi_f_h).values
        )
        np.testing.assert_allclose(forcing.f_h.values, expected)

    def test_dual_cell_error_of_constant(self, rect_mesh: StaggeredMesh2D) -> None:
        psi_h = DualField(np.full(rect_mesh.n_v, 3.0))
        assert dual_cell_l2_error(rect_mesh, psi_h, lambda x, y: 3.0 + 0.0 * x) == pytest.approx(
            0.0, abs=1e-14
        )

    def test_masked_norms(self, rect_mesh: StaggeredMesh2D) -> None:
        """A mask restricts the sum to the selected edges or duals."""
        ones = EdgeField(np.ones(rect_mesh.n_edges))
        trusted = rect_mesh.trusted_edge_mask
        assert edge_l2_norm(rect_mesh, ones, trusted) ** 2 == pytest.approx(
            rect_mesh.diamond_area[trusted].sum()
        )
        assert edge_l2_norm(rect_mesh, ones, np.zeros(rect_mesh.n_edges, dtype=bool)) == 0.0

    def test_masked_curl_norm(self, rect_mesh: StaggeredMesh2D) -> None:
        u = restrict_velocity(rect_mesh, lambda x, y: 0.5 * (x**2 + y**2))
        trusted = rect_mesh.trusted_dual_mask
        expected = 2.0 * np.sqrt(rect_mesh.dual_area[trusted].sum())
        assert curl_norm(rect_mesh, u, trusted) == pytest.approx(expected, rel=1e-9)
        assert curl_norm(rect_mesh, u) > curl_norm(rect_mesh, u, trusted)

    def test_restricted_velocity_vanishes_on_wall(self, any_mesh: StaggeredMesh2D) -> None:
        """Boundary duals are cleared before the skew gradient."""
        u = restrict_velocity(any_mesh, lambda x, y: 1.0 + x * y)
        assert boundary_slip(any_mesh, u) == 0.0
        assert np.abs(u.values[any_mesh.interior_edge_mask]).max() > 0.0

    def test_shape_checked(self, rect3: StaggeredMesh2D) -> None:
        with pytest.raises(FieldShapeError, match="edge field needs 12"):
            div(rect3, EdgeField(np.zeros(5)))


# ============================================================
# Prolongation and Poincare
# ============================================================


class TestProlong:
    """Tests for the (psi, omega) pair of an edge field."""

    def test_pair_of_represented_field(
        self, rect_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        psi = DualField(rng.standard_normal(rect_mesh.n_v))
        u = perp_grad_dual(rect_mesh, psi)
        pair = prolong(rect_mesh, u, psi)
        assert pair.psi is psi
        np.testing.assert_allclose(pair.omega.values, curl(rect_mesh, u).values)

    def test_mismatch_rejected(
        self, rect_mesh: StaggeredMesh2D, rng: np.random.Generator
    ) -> None:
        psi = DualField(rng.standard_normal(rect_mesh.n_v))
        with pytest.raises(RepresentationMismatchError):
            prolong(rect_mesh, EdgeField(rng.standard_normal(rect_mesh.n_edges)), psi)

    def test_poincare_bound(self, rect_mesh: StaggeredMesh2D, rng: np.random.Generator) -> None:
        """|u| <= C |curl u| for divergence-free u, with C of order 1/(2 pi)."""
        c = poincare_constant(rect_mesh)
        assert 0.05 < c < 0.5
        for _ in range(50):
            u = perp_grad_dual(rect_mesh, DualField(rng.standard_normal(rect_mesh.n_v)))
            norm = np.sqrt(inner_edge(rect_mesh, u, u))
            assert norm <= c * curl_norm(rect_mesh, u) * (1.0 + 1e-6)


# ============================================================
# Serialization
# ============================================================


class TestFieldText:
    """Tests for the field dump format."""

    def test_dump_and_load(self, rng: np.random.Generator) -> None:
        field = DualField(rng.standard_normal(7))
        text = dump_field(field)
        assert text.splitlines()[0] == "field dual 7"
        loaded = load_field(text)
        assert isinstance(loaded, DualField)
        np.testing.assert_array_equal(loaded.values, field.values)

    def test_kind_preserved(self) -> None:
        assert isinstance(load_field(dump_field(CellField(np.ones(2)))), CellField)
        assert isinstance(load_field(dump_field(EdgeField(np.ones(2)))), EdgeField)

    @pytest.mark.parametrize(
        ("text", "line"),
        [
            ("", 1),
            ("vector dual 2\n1\n2\n", 1),
            ("field dual two\n1\n2\n", 1),
            ("field cell 2\n1\nabc\n", 3),
            ("field edge 3\n1\n2\n", 3),
        ],
    )
    def test_parse_errors(self, text: str, line: int) -> None:
        with pytest.raises(FieldParseError) as info:
            load_field(text)
        assert info.value.line == line


def test_rect3_has_no_trusted_duals() -> None:
    """Every dual of the smallest mesh touches the boundary."""
    assert not gen_rect(3, 3).trusted_dual_mask.any()


def test_trusted_duals_keep_clear_of_the_wall(any_mesh: StaggeredMesh2D) -> None:
    """No trusted dual shares an edge with a boundary dual."""
    duals = any_mesh.edge_duals
    trusted = any_mesh.trusted_dual_mask
    wall = any_mesh.dual_is_boundary
    real = (duals >= 0).all(axis=1)
    a, b = duals[real, 0], duals[real, 1]
    assert not (trusted[a] & wall[b]).any()
    assert not (trusted[b] & wall[a]).any()
    assert not (trusted & wall).any()
    assert trusted.any()
