"""Pytest configuration and fixtures."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

# Repository root on the path so tests import ``src.core``
ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from src.core.config import get_settings  # noqa: E402
from src.core.logging import configure_logging  # noqa: E402
from src.core.mesh1d import CenterPlacement, Mesh1D, gen_random, gen_uniform  # noqa: E402
from src.core.mesh2d import (  # noqa: E402
    StaggeredMesh2D,
    gen_perturbed,
    gen_rect,
    gen_tri_hex,
)

# ============================================================
# Environment
# ============================================================


@pytest.fixture(autouse=True)
def isolated_settings(monkeypatch: pytest.MonkeyPatch, tmp_path: Path):
    """Keep environment overrides, cached settings and log sinks out of every test."""
    monkeypatch.delenv("STAGFV_CONFIG", raising=False)
    configure_logging(json_logs=False, log_level="WARNING")
    monkeypatch.setenv("STAGFV_OUT", str(tmp_path / "out"))
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


# ============================================================
# 1D meshes
# ============================================================


@pytest.fixture
def uniform_mesh() -> Mesh1D:
    return gen_uniform(16)


@pytest.fixture
def random_mesh() -> Mesh1D:
    """Ratio-3 random mesh with centers off the midpoints."""
    return gen_random(32, 3.0, 7, CenterPlacement.RANDOM)


@pytest.fixture
def midpoint_mesh() -> Mesh1D:
    return gen_random(32, 3.0, 7, CenterPlacement.MIDPOINT)


# ============================================================
# 2D meshes
# ============================================================


@pytest.fixture
def rect3() -> StaggeredMesh2D:
    """Smallest rectangular mesh: 9 cells, 4 duals, 12 edges."""
    return gen_rect(3, 3)


@pytest.fixture
def rect_mesh() -> StaggeredMesh2D:
    return gen_rect(9, 9)


@pytest.fixture
def perturbed_mesh() -> StaggeredMesh2D:
    return gen_perturbed(9, 9, 0.1, 3)


@pytest.fixture
def trihex_mesh() -> StaggeredMesh2D:
    return gen_tri_hex(8)


@pytest.fixture(params=["rect", "perturbed", "trihex"])
def any_mesh(request: pytest.FixtureRequest) -> StaggeredMesh2D:
    """Each 2D family at a small size."""
    if request.param == "rect":
        return gen_rect(8, 8)
    if request.param == "perturbed":
        return gen_perturbed(8, 8, 0.1, 3)
    return gen_tri_hex(7)
