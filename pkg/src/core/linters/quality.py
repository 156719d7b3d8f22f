"""Quality Linter - configurable resolution rules for a staggered mesh.

Thresholds live in YAML so studies can tighten or relax them without code
changes. Each rule carries its own severity: ``error`` rules make the mesh
report fail, ``warning`` rules are reported only.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import yaml

from src.core.config import get_settings
from src.core.linters.report import CheckResult, Severity
from src.core.logging import get_logger

if TYPE_CHECKING:
    from src.core.mesh2d import StaggeredMesh2D

logger = get_logger(__name__)

# Used when the rule file is absent
DEFAULT_RULES: list[dict[str, Any]] = [
    {
        "id": "Q1",
        "name": "quasi_uniformity",
        "description": "All l_e and d_e within [m_min h, M_max h]",
        "condition": "quasi_uniformity",
        "severity": "error",
        "params": {"m_min": 0.25, "M_max": 4.0},
    },
    {
        "id": "Q2",
        "name": "near_bisection",
        "description": "Crossing within C h^2 of both edge midpoints",
        "condition": "near_bisection",
        "severity": "warning",
        "params": {"C": 2.0},
    },
]


@dataclass
class QualityRule:
    """A single quality validation rule."""

    id: str
    name: str
    description: str
    condition: str
    severity: Severity
    params: dict[str, Any]


class MeshQualityLinter:
    """Configurable resolution rules.

    Supported Conditions:
        - quasi_uniformity: m_min h <= l_e, d_e <= M_max h for every edge pair
        - near_bisection: bisection offset <= C h^2 for every edge pair
    """

    def __init__(self, config_path: str | Path | None = None) -> None:
        """Initialize the linter.

        Args:
            config_path: YAML rule file; the configured default when omitted.

        Examples:
            >>> linter = MeshQualityLinter()
            >>> [r.name for r in linter.rules]
            ['quasi_uniformity', 'near_bisection']
        """
        path = Path(config_path) if config_path is not None else get_settings().quality_rules
        self.rules = self._load_rules(path)

    @staticmethod
    def _load_rules(path: Path) -> list[QualityRule]:
        if path.exists():
            with path.open(encoding="utf-8") as f:
                raw = (yaml.safe_load(f) or {}).get("rules", [])
        else:
            logger.debug("quality_rules_missing_using_defaults", path=str(path))
            raw = DEFAULT_RULES
        return [
            QualityRule(
                id=str(rule["id"]),
                name=rule["name"],
                description=rule.get("description", ""),
                condition=rule["condition"],
                severity=rule.get("severity", "warning"),
                params=dict(rule.get("params", {})),
            )
            for rule in raw
        ]

    def validate(self, mesh: StaggeredMesh2D) -> list[CheckResult]:
        """Evaluate every configured rule against ``mesh``."""
        results = []
        for rule in self.rules:
            if rule.condition == "quasi_uniformity":
                results.append(self._check_quasi_uniformity(rule, mesh))
            elif rule.condition == "near_bisection":
                results.append(self._check_near_bisection(rule, mesh))
            else:
                logger.warning("unknown_quality_condition", rule=rule.id, condition=rule.condition)
        return results

    @staticmethod
    def _check_quasi_uniformity(rule: QualityRule, mesh: StaggeredMesh2D) -> CheckResult:
        m_min = float(rule.params.get("m_min", 0.25))
        m_max = float(rule.params.get("M_max", 4.0))
        ratio = np.minimum(mesh.edge_length, mesh.dual_edge_length) / mesh.h
        high = np.maximum(mesh.edge_length, mesh.dual_edge_length) / mesh.h
        bad = (ratio < m_min) | (high > m_max)
        detail = f"m={mesh.m_const:.4g} M={mesh.M_const:.4g} in [{m_min:g}, {m_max:g}]"
        if not bad.any():
            return CheckResult(
                name=rule.name,
                passed=True,
                severity=rule.severity,
                magnitude=mesh.M_const,
                detail=detail,
            )
        worst = int(np.argmax(bad))
        return CheckResult(
            name=rule.name,
            passed=False,
            severity=rule.severity,
            worst=worst,
            magnitude=float(ratio[worst] if ratio[worst] < m_min else high[worst]),
            detail=detail,
        )

    @staticmethod
    def _check_near_bisection(rule: QualityRule, mesh: StaggeredMesh2D) -> CheckResult:
        c = float(rule.params.get("C", 2.0))
        scaled = mesh.bisection_offset / mesh.h**2
        worst = int(np.argmax(scaled)) if scaled.size else None
        magnitude = float(scaled.max()) if scaled.size else 0.0
        passed = magnitude <= c
        return CheckResult(
            name=rule.name,
            passed=passed,
            severity=rule.severity,
            worst=None if passed else worst,
            magnitude=magnitude,
            detail=f"max offset/h^2={magnitude:.4g} <= {c:g}",
        )
