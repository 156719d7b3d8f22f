"""Report schemas for convergence and consistency studies.

Reports are pydantic models so they validate on construction and round-trip
through JSON. Infinite rates (zero errors) serialize as JSON ``Infinity``.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

SCHEMA_VERSION = "v1"

# CSV column order of a study table
CSV_COLUMNS = (
    "level",
    "h",
    "n_dof",
    "err_l2",
    "err_h1",
    "tau_p",
    "tau_f",
    "tau_omega",
    "cg_iters",
    "seconds",
)


# ============================================================
# Exceptions
# ============================================================


class StudyInvariantError(Exception):
    """Raised when a study violates a structural invariant of the scheme."""


# ============================================================
# Convergence studies
# ============================================================


class LevelRecord(BaseModel):
    """Errors and diagnostics for one refinement level."""

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    level: int = Field(..., ge=0, description="Level index, coarsest first")
    h: float = Field(..., gt=0.0, description="Nominal mesh size")
    n_dof: int = Field(..., ge=0, description="Unknowns of the linear system")
    err_l2: float = Field(..., ge=0.0, description="L2-type error")
    err_h1: float = Field(..., ge=0.0, description="H1-type (1D) or curl (2D) error")
    tau_p: float | None = Field(None, description="Max pressure truncation error")
    tau_f: float | None = Field(None, description="Max flux or forcing truncation error")
    tau_omega: float | None = Field(None, description="Max curl truncation error")
    cg_iters: int = Field(0, ge=0, description="CG iterations; 0 for the direct path")
    seconds: float = Field(0.0, ge=0.0, description="Wall time of the solve")
    boundary_slip: float | None = Field(None, description="Max |u_e| on boundary edges")
    momentum_residual: float | None = Field(None, description="Max edgewise momentum residual")


class ConvergenceReport(BaseModel):
    """Per-level records with least-squares rates.

    ``constants`` holds error / h**rate at the finest level, for information.
    """

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    schema_version: str = Field(default=SCHEMA_VERSION, frozen=True)
    dimension: Literal[1, 2]
    case: str
    mesh_family: str
    seed: int | None = None
    parameters: dict[str, float | int | str] = Field(default_factory=dict)
    levels: list[LevelRecord]
    rates: dict[str, float] = Field(default_factory=dict)
    constants: dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _levels_refine(self) -> ConvergenceReport:
        hs = [record.h for record in self.levels]
        if any(b >= a for a, b in zip(hs, hs[1:], strict=False)):
            raise ValueError(f"levels must be strictly decreasing in h, got {hs}")
        return self


# ============================================================
# Consistency studies
# ============================================================


class ConsistencyRecord(BaseModel):
    """Restriction errors of the exact solution on one level."""

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    level: int = Field(..., ge=0)
    h: float = Field(..., gt=0.0)
    psi_error: float = Field(..., ge=0.0, description="|psi restricted - psi|_0 over dual cells")
    omega_error: float = Field(..., ge=0.0, description="|curl R_h u - R_h omega|_0, trusted duals")


class ConsistencyReport(BaseModel):
    """Restriction consistency across levels with fitted rates."""

    model_config = ConfigDict(extra="forbid", ser_json_inf_nan="constants")

    schema_version: str = Field(default=SCHEMA_VERSION, frozen=True)
    dimension: Literal[1, 2]
    case: str
    mesh_family: str
    records: list[ConsistencyRecord]
    rates: dict[str, float] = Field(default_factory=dict)

    @property
    def monotone(self) -> bool:
        """True when both errors decrease strictly from level to level."""
        pairs = list(zip(self.records, self.records[1:], strict=False))
        return all(b.psi_error < a.psi_error and b.omega_error < a.omega_error for a, b in pairs)
