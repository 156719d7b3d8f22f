"""Performance tests for stagfv.

Wall time is reported by every study but never part of acceptance; these
tests only guard against gross regressions:
- 1D study over N = 16..512: < 5s
- 2D study over n = 9..65: < 60s per mesh family
"""

from __future__ import annotations

import statistics
import time

import pytest

from src.core.harness import make_mesh_2d, run_1d_study, run_2d_study
from src.core.identities import run_identity_suite
from src.core.linters.gate import MeshGateLinter

pytestmark = pytest.mark.slow


class TestStudyLatency:
    """Budgets for full convergence studies."""

    @pytest.mark.parametrize("family", ["random", "midpoint"])
    def test_1d_study(self, family: str) -> None:
        start = time.perf_counter()
        run_1d_study("sinpi", family, [16, 32, 64, 128, 256, 512])
        elapsed = time.perf_counter() - start
        print(f"\n1D {family}: {elapsed:.2f}s")
        assert elapsed < 5.0

    @pytest.mark.parametrize("family", ["rect", "perturbed", "trihex"])
    def test_2d_study(self, family: str) -> None:
        start = time.perf_counter()
        report = run_2d_study("sin2", family, [9, 17, 33, 65], seed=3)
        elapsed = time.perf_counter() - start
        iterations = [r.cg_iters for r in report.levels]
        print(f"\n2D {family}: {elapsed:.2f}s, CG iterations {iterations}")
        assert elapsed < 60.0


class TestMeshLatency:
    """Mesh validation and identity checks stay cheap."""

    def test_gate_validation(self) -> None:
        mesh = make_mesh_2d("perturbed", 65, seed=3)
        latencies = []
        for _ in range(5):
            start = time.perf_counter()
            MeshGateLinter.validate(mesh)
            latencies.append(time.perf_counter() - start)
        median = statistics.median(latencies)
        print(f"\nGate validation (n=65): median {median * 1000:.1f}ms")
        assert median < 2.0

    def test_identity_suite(self) -> None:
        mesh = make_mesh_2d("trihex", 16)
        start = time.perf_counter()
        report = run_identity_suite(mesh, samples=50)
        elapsed = time.perf_counter() - start
        print(f"\nIdentity suite (trihex 16, 50 samples): {elapsed:.2f}s")
        assert report.passed
        assert elapsed < 30.0
