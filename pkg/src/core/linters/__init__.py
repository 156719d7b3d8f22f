"""Mesh validation: hard gate checks and configurable quality rules."""

from src.core.linters.gate import MeshGateLinter
from src.core.linters.quality import MeshQualityLinter
from src.core.linters.report import CheckResult, MeshQualityReport

__all__ = ["CheckResult", "MeshGateLinter", "MeshQualityLinter", "MeshQualityReport"]
