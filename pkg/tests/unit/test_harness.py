"""Unit tests for convergence studies and report writers."""

from __future__ import annotations

import json
import math
from pathlib import Path

import pytest

from src.core import harness
from src.core.harness import (
    DegenerateRateError,
    fit_rate,
    make_mesh_1d,
    make_mesh_2d,
    run_1d_study,
    run_2d_study,
    run_consistency_study,
    to_frame,
    write_csv,
    write_gnuplot,
    write_json,
)
from src.core.manufactured import UnknownCaseError
from src.core.schemas import CSV_COLUMNS, ConvergenceReport, StudyInvariantError

# ============================================================
# Rate fitting
# ============================================================


class TestFitRate:
    """Tests for the least-squares slope."""

    def test_exact_second_order(self) -> None:
        assert fit_rate([(0.1, 1e-2), (0.05, 2.5e-3), (0.025, 6.25e-4)]) == 2.0

    def test_first_order_with_constant(self) -> None:
        pairs = [(h, 7.0 * h) for h in (0.2, 0.1, 0.05, 0.025)]
        assert fit_rate(pairs) == pytest.approx(1.0, abs=1e-12)

    def test_zero_error_is_infinite(self) -> None:
        assert fit_rate([(0.1, 1e-2), (0.05, 0.0), (0.025, 1e-4)]) == math.inf

    @pytest.mark.parametrize(
        "pairs",
        [
            [(0.1, 1.0), (0.05, 0.5)],
            [(0.1, 1.0), (0.0, 0.5), (0.025, 0.2)],
            [(0.1, 1.0), (0.05, -0.5), (0.025, 0.2)],
            [(0.1, 1.0), (0.05, math.nan), (0.025, 0.2)],
            [(0.1, 1.0), (0.1, 0.5), (0.1, 0.2)],
        ],
        ids=["too-few", "zero-h", "negative-error", "nan", "one-h"],
    )
    def test_degenerate_input(self, pairs: list[tuple[float, float]]) -> None:
        with pytest.raises(DegenerateRateError):
            fit_rate(pairs)


# ============================================================
# Mesh families
# ============================================================


class TestMeshFamilies:
    """Tests for family dispatch."""

    def test_1d_families(self) -> None:
        assert make_mesh_1d("uniform", 8).quasi_uniformity() == pytest.approx(1.0)
        assert make_mesh_1d("random", 8, ratio=2.0, seed=1).ratio_bound == 2.0
        assert make_mesh_1d("midpoint", 8).N == 8

    def test_2d_families_share_h(self) -> None:
        """Level n means h = 1/(n - 1) in every family."""
        for family in ("rect", "perturbed", "trihex"):
            mesh = make_mesh_2d(family, 9)
            assert mesh.family == family
            assert mesh.h == pytest.approx(1.0 / 8)

    def test_unknown_family(self) -> None:
        with pytest.raises(ValueError, match="available"):
            make_mesh_1d("chebyshev", 8)
        with pytest.raises(ValueError, match="available"):
            make_mesh_2d("hexagons", 9)


# ============================================================
# Studies
# ============================================================


class TestStudies:
    """Small studies through the public entry points."""

    def test_1d_uniform_sine(self) -> None:
        report = run_1d_study("sinpi", "uniform", [32, 8, 16])
        assert [r.h for r in report.levels] == [1 / 8, 1 / 16, 1 / 32]
        assert [r.n_dof for r in report.levels] == [8, 16, 32]
        assert report.seed is None
        assert report.rates["err_l2"] > 1.5
        assert set(report.rates) == {"err_l2", "err_h1", "tau_f"}
        assert report.levels[0].tau_p is None

    def test_1d_cg_path_counts_iterations(self) -> None:
        report = run_1d_study("sinpi", "random", [8, 16, 32], solver="cg")
        assert report.seed == 7
        assert all(r.cg_iters > 0 for r in report.levels)
        assert report.parameters["solver"] == "cg"

    def test_zero_case_rates_infinite(self) -> None:
        report = run_1d_study("zero", "random", [8, 16, 32])
        assert report.rates["err_l2"] == math.inf
        assert "err_l2" not in report.constants

    def test_unknown_case(self) -> None:
        with pytest.raises(UnknownCaseError):
            run_1d_study("sin2", "uniform", [8, 16, 32])

    def test_2d_rect(self) -> None:
        report = run_2d_study("sin2", "rect", [9, 17, 33])
        assert report.seed is None
        assert report.rates["err_l2"] > 1.5
        assert all(r.momentum_residual is not None for r in report.levels)
        assert all(r.tau_omega is not None for r in report.levels)

    def test_workers_do_not_change_results(self) -> None:
        serial = run_2d_study("sin2", "perturbed", [5, 9, 17], seed=3)
        threaded = run_2d_study("sin2", "perturbed", [5, 9, 17], seed=3, workers=3)
        assert [r.err_l2 for r in serial.levels] == [r.err_l2 for r in threaded.levels]
        assert serial.rates == threaded.rates
        assert serial.seed == 3

    def test_structural_violation_aborts(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setattr(harness, "structural_violations", lambda *a: ["energy: broken"])
        with pytest.raises(StudyInvariantError, match="energy: broken"):
            run_2d_study("sin2", "rect", [5, 9, 17])

    def test_consistency_study(self) -> None:
        report = run_consistency_study("sin2", "rect", [9, 17, 33])
        assert len(report.records) == 3
        assert report.monotone
        assert report.rates["psi_error"] > 0.8


# ============================================================
# Writers
# ============================================================


@pytest.fixture
def small_report() -> ConvergenceReport:
    return run_1d_study("sinpi", "random", [8, 16, 32])


class TestWriters:
    """Tests for CSV, gnuplot and JSON output."""

    def test_csv_layout(self, small_report: ConvergenceReport, tmp_path: Path) -> None:
        text = write_csv(small_report, tmp_path / "study.csv").read_text(encoding="utf-8")
        lines = text.splitlines()
        assert lines[0] == ",".join(CSV_COLUMNS)
        assert lines[1].startswith("0,0.125,8,")
        assert lines[1].endswith(",")
        assert lines[4] == "# case=sinpi family=random dimension=1"
        assert any(line.startswith("# rate err_l2 ") for line in lines)

    def test_csv_is_reproducible(self, tmp_path: Path) -> None:
        """Two runs without timings give byte-identical files."""
        a = write_csv(run_1d_study("sinpi", "random", [8, 16, 32]), tmp_path / "a.csv")
        b = write_csv(run_1d_study("sinpi", "random", [8, 16, 32]), tmp_path / "b.csv")
        assert a.read_bytes() == b.read_bytes()

    def test_timings_included_on_request(self, small_report: ConvergenceReport) -> None:
        assert to_frame(small_report)["seconds"].isna().all()
        assert to_frame(small_report, include_timings=True)["seconds"].notna().all()

    def test_gnuplot_files(self, small_report: ConvergenceReport, tmp_path: Path) -> None:
        written = write_gnuplot(small_report, tmp_path, "study")
        assert [p.name for p in written] == [
            "study_err_l2.dat",
            "study_err_h1.dat",
            "study_tau_f.dat",
        ]
        rows = written[0].read_text(encoding="utf-8").splitlines()
        assert rows[0] == "# h err_l2"
        assert len(rows) == 4
        assert float(rows[1].split()[0]) == 0.125

    def test_json(self, small_report: ConvergenceReport, tmp_path: Path) -> None:
        data = json.loads(write_json(small_report, tmp_path / "nested" / "r.json").read_text())
        assert data["case"] == "sinpi"
        assert len(data["levels"]) == 3
        assert data["levels"][0]["seconds"] >= 0.0
