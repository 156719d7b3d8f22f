"""Unit tests for 1D primary/dual meshes."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from structlog.testing import capture_logs

from src.core import mesh1d
from src.core.config import get_settings
from src.core.logging import EventType
from src.core.mesh1d import (
    CenterPlacement,
    Grid1DField,
    GridKind,
    InvalidCountError,
    InvalidRatioError,
    KindMismatchError,
    Mesh1D,
    MeshParseError,
    from_text,
    gen_random,
    gen_uniform,
    load,
    save,
    to_text,
    validate,
)

# ============================================================
# Generators
# ============================================================


class TestGenUniform:
    """Tests for gen_uniform."""

    def test_two_cells(self) -> None:
        mesh = gen_uniform(2)
        assert mesh.x_face.tolist() == [0.0, 0.5, 1.0]
        assert mesh.x_center.tolist() == [0.25, 0.75]

    def test_lengths(self) -> None:
        """Primary cells have length 1/N, end dual cells half of that."""
        mesh = gen_uniform(8)
        np.testing.assert_allclose(mesh.h, 1.0 / 8)
        np.testing.assert_allclose(mesh.h_half[[0, -1]], 1.0 / 16)
        np.testing.assert_allclose(mesh.h_half[1:-1], 1.0 / 8)
        assert mesh.quasi_uniformity() == pytest.approx(1.0)
        assert validate(mesh) == []

    def test_rejects_single_cell(self) -> None:
        with pytest.raises(InvalidCountError):
            gen_uniform(1)


class TestGenRandom:
    """Tests for gen_random."""

    @pytest.mark.parametrize("placement", list(CenterPlacement))
    def test_respects_ratio(self, placement: CenterPlacement) -> None:
        """Generated meshes validate against their declared ratio."""
        mesh = gen_random(64, 3.0, 7, placement)
        assert validate(mesh) == []
        assert mesh.quasi_uniformity() <= 3.0 * (1.0 + 1e-12)
        assert mesh.ratio_bound == 3.0

    def test_same_seed_same_mesh(self) -> None:
        """Generation is deterministic in the seed."""
        a = gen_random(32, 2.5, 11)
        b = gen_random(32, 2.5, 11)
        assert a.same_geometry(b)
        assert not a.same_geometry(gen_random(32, 2.5, 12))

    def test_midpoint_faces(self) -> None:
        """Interior faces bisect neighbouring centers."""
        mesh = gen_random(20, 3.0, 5, CenterPlacement.MIDPOINT)
        mids = 0.5 * (mesh.x_center[:-1] + mesh.x_center[1:])
        np.testing.assert_allclose(mesh.x_face[1:-1], mids, rtol=0, atol=1e-15)

    def test_ratio_one_is_uniform(self) -> None:
        assert gen_random(10, 1.0, 3).same_geometry(gen_uniform(10))

    @pytest.mark.parametrize("ratio", [0.5, float("inf"), float("nan")])
    def test_rejects_bad_ratio(self, ratio: float) -> None:
        with pytest.raises(InvalidRatioError):
            gen_random(10, ratio, 0)

    def test_rejects_small_count(self) -> None:
        with pytest.raises(InvalidCountError):
            gen_random(1, 2.0, 0)

    def test_exhausted_redraws_fall_back_to_midpoints(
        self, monkeypatch: pytest.MonkeyPatch
    ) -> None:
        """Running out of redraws centers every cell and logs a warning."""
        monkeypatch.setattr(mesh1d, "_MAX_REDRAWS", 0)
        with capture_logs() as logs:
            mesh = gen_random(16, 3.0, 7)
        mids = 0.5 * (mesh.x_face[:-1] + mesh.x_face[1:])
        np.testing.assert_allclose(mesh.x_center, mids, rtol=0, atol=1e-15)
        events = [e for e in logs if e["event"] == EventType.CENTER_REDRAW_EXHAUSTED.value]
        assert len(events) == 1
        assert events[0]["log_level"] == "warning"
        assert events[0]["N"] == 16
        assert events[0]["redraws"] == 0

    def test_successful_draw_logs_no_warning(self) -> None:
        with capture_logs() as logs:
            gen_random(16, 3.0, 7)
        assert all(e["log_level"] != "warning" for e in logs)

    @settings(max_examples=30, deadline=None)
    @given(
        N=st.integers(2, 200),
        ratio=st.floats(1.0, 10.0),
        seed=st.integers(0, 2**32 - 1),
    )
    def test_random_meshes_always_valid(self, N: int, ratio: float, seed: int) -> None:
        """Every seed yields an interleaved partition within the bound."""
        assert validate(gen_random(N, ratio, seed)) == []


# ============================================================
# Validation
# ============================================================


class TestValidate:
    """Tests for the invariant checker."""

    def test_detects_center_outside_cell(self) -> None:
        mesh = Mesh1D(x_face=np.array([0.0, 0.5, 1.0]), x_center=np.array([0.6, 0.75]))
        assert any(v.startswith("interleaving") for v in validate(mesh))

    def test_detects_endpoints(self) -> None:
        mesh = Mesh1D(x_face=np.array([0.1, 0.5, 1.0]), x_center=np.array([0.25, 0.75]))
        assert any(v.startswith("endpoints") for v in validate(mesh))

    def test_detects_ratio_violation(self) -> None:
        faces = np.array([0.0, 0.1, 1.0])
        mesh = Mesh1D(x_face=faces, x_center=np.array([0.05, 0.55]), ratio_bound=2.0)
        assert any(v.startswith("quasi-uniformity") for v in validate(mesh))

    def test_detects_shape(self) -> None:
        mesh = Mesh1D(x_face=np.array([0.0, 1.0]), x_center=np.array([0.25, 0.75]))
        assert validate(mesh)[0].startswith("shape")

    def test_loaded_mesh_uses_configured_ratio(self, tmp_path: Path) -> None:
        """A file carries no bound, so the configured ratio applies."""
        faces = np.array([0.0, 0.1, 1.0])
        path = tmp_path / "skewed.txt"
        save(Mesh1D(x_face=faces, x_center=np.array([0.05, 0.55])), path)
        mesh = load(path)
        assert mesh.ratio_bound is None
        assert get_settings().ratio == 3.0
        assert any(v.startswith("quasi-uniformity") for v in validate(mesh))

    def test_explicit_bound_overrides(self) -> None:
        faces = np.array([0.0, 0.1, 1.0])
        mesh = Mesh1D(x_face=faces, x_center=np.array([0.05, 0.55]), ratio_bound=2.0)
        assert validate(mesh, ratio_bound=100.0) == []

    def test_loaded_random_mesh_within_configured_ratio(self, tmp_path: Path) -> None:
        path = tmp_path / "random.txt"
        save(gen_random(32, 3.0, 7), path)
        assert validate(load(path)) == []


# ============================================================
# Fields
# ============================================================


class TestGrid1DField:
    """Tests for kind and length checks."""

    def test_require_returns_values(self, uniform_mesh: Mesh1D) -> None:
        field = Grid1DField.dual(np.zeros(uniform_mesh.N + 1))
        assert field.require(uniform_mesh, GridKind.DUAL).shape == (uniform_mesh.N + 1,)

    def test_wrong_kind(self, uniform_mesh: Mesh1D) -> None:
        with pytest.raises(KindMismatchError, match="expected primary"):
            Grid1DField.dual(np.zeros(uniform_mesh.N + 1)).require(uniform_mesh, GridKind.PRIMARY)

    def test_wrong_length(self, uniform_mesh: Mesh1D) -> None:
        with pytest.raises(KindMismatchError, match="values"):
            Grid1DField.primary(np.zeros(3)).require(uniform_mesh, GridKind.PRIMARY)


# ============================================================
# Serialization
# ============================================================


class TestSerialization:
    """Tests for the text format."""

    def test_text_is_bitwise_faithful(self, random_mesh: Mesh1D) -> None:
        """17 significant digits reproduce every coordinate exactly."""
        assert from_text(to_text(random_mesh)).same_geometry(random_mesh)

    def test_save_load(self, random_mesh: Mesh1D, tmp_path: Path) -> None:
        path = tmp_path / "mesh.txt"
        save(random_mesh, path)
        assert load(path).same_geometry(random_mesh)

    def test_header(self) -> None:
        assert to_text(gen_uniform(2)).splitlines()[0] == "mesh1d 2"

    @pytest.mark.parametrize(
        ("text", "line"),
        [
            ("", 1),
            ("mesh 2\n0 0.5 1\n0.25 0.75\n", 1),
            ("mesh1d x\n0 0.5 1\n0.25 0.75\n", 1),
            ("mesh1d 2\n0 0.5\n0.25 0.75\n", 2),
            ("mesh1d 2\n0 0.5 1\n0.25 abc\n", 3),
            ("mesh1d 2\n0 0.5 1\n", 3),
        ],
    )
    def test_parse_errors_carry_line(self, text: str, line: int) -> None:
        with pytest.raises(MeshParseError) as info:
            from_text(text)
        assert info.value.line == line
