"""Validated run description for the command line."""

from __future__ import annotations

from enum import Enum
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.harness import FAMILIES_1D, FAMILIES_2D

FILE_PREFIX = "file:"

# =============================================================================
# Enums
# =============================================================================


class Command(str, Enum):
    """Top-level subcommands."""

    MESH = "mesh"
    SOLVE1D = "solve1d"
    SOLVE2D = "solve2d"
    CONVERGE = "converge"
    IDENTITIES = "identities"


class ExitCode(int, Enum):
    """Process exit status."""

    OK = 0
    VALIDATION_FAILED = 1
    SOLVER_FAILED = 2
    USAGE = 64


# =============================================================================
# Run configuration
# =============================================================================


class RunConfig(BaseModel):
    """One command-line invocation after merging config defaults and flags."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Command
    action: str | None = Field(None, description="mesh gen|check|info, converge 1d|2d")
    path: Path | None = Field(None, description="Mesh file for mesh check/info/gen")
    mesh: str | None = Field(None, description="Family name or file:<path>")
    n: int | None = Field(None, ge=2)
    nx: int | None = Field(None, ge=2)
    ny: int | None = Field(None, ge=2)
    ratio: float = Field(..., ge=1.0)
    amplitude: float = Field(..., ge=0.0, lt=0.25)
    seed: int
    levels: list[int] = Field(..., min_length=3)
    tol: float = Field(..., gt=0.0, lt=1.0)
    out: Path
    case: str | None = None
    force: bool = False
    workers: int = Field(1, ge=1)
    timings: bool = False
    solver: Literal["direct", "cg"] = "direct"
    samples: int = Field(50, ge=1)
    consistency: bool = False
    quality_rules: Path | None = None

    @property
    def mesh_file(self) -> Path | None:
        if self.mesh is not None and self.mesh.startswith(FILE_PREFIX):
            return Path(self.mesh[len(FILE_PREFIX) :])
        return None

    @property
    def family(self) -> str | None:
        return None if self.mesh is None or self.mesh_file is not None else self.mesh

    @property
    def dimension(self) -> int:
        if self.command is Command.SOLVE1D or self.action == "1d":
            return 1
        if self.command is Command.MESH:
            return 1 if self.family in FAMILIES_1D else 2
        return 2

    @model_validator(mode="after")
    def _check_command(self) -> RunConfig:
        if self.command is Command.MESH:
            if self.action not in ("gen", "check", "info"):
                raise ValueError(f"mesh action must be gen, check or info, got {self.action!r}")
            if self.action in ("check", "info") and self.path is None:
                raise ValueError(f"mesh {self.action} needs a mesh file")
            if self.action == "gen" and self.family not in FAMILIES_1D + FAMILIES_2D:
                raise ValueError(f"mesh gen needs --mesh with a family name, got {self.mesh!r}")
            return self

        if self.command is Command.CONVERGE and self.action not in ("1d", "2d"):
            raise ValueError(f"converge needs 1d or 2d, got {self.action!r}")
        if self.mesh is None:
            raise ValueError(f"{self.command.value} needs --mesh")
        if self.mesh_file is not None:
            if self.command is Command.CONVERGE:
                raise ValueError("converge builds its own meshes; file meshes are not accepted")
            return self

        allowed = FAMILIES_1D if self.dimension == 1 else FAMILIES_2D
        if self.mesh not in allowed:
            raise ValueError(
                f"mesh family {self.mesh!r} is not valid for {self.command.value}; "
                f"choose from {list(allowed)}"
            )
        return self
