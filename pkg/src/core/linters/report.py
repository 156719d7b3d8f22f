"""Per-check results shared by the mesh gate and quality linters."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

Severity = Literal["error", "warning"]


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one mesh check.

    ``worst`` is the index of the first (or worst) offending element and
    ``magnitude`` the measured value the check compared against its threshold.
    """

    name: str
    passed: bool
    severity: Severity = "error"
    worst: int | None = None
    magnitude: float = 0.0
    detail: str = ""

    def describe(self) -> str:
        status = "OK" if self.passed else ("FAIL" if self.severity == "error" else "WARN")
        where = f" (element {self.worst})" if not self.passed and self.worst is not None else ""
        return f"{self.name} {self.detail} {status}{where}".replace("  ", " ")


@dataclass
class MeshQualityReport:
    """All check results for one mesh; passes iff no error-severity check fails."""

    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not any(not c.passed and c.severity == "error" for c in self.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed and c.severity == "error"]

    def warnings(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed and c.severity == "warning"]

    def get(self, name: str) -> CheckResult:
        for check in self.checks:
            if check.name == name:
                return check
        raise KeyError(name)

    def with_failure(self, name: str, detail: str, worst: int | None = None) -> MeshQualityReport:
        return MeshQualityReport(
            checks=[*self.checks, CheckResult(name=name, passed=False, worst=worst, detail=detail)]
        )
