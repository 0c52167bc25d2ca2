"""Find minimal dependency changes that remove license incompatibilities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from ..detector import CompatibilityLabel, Detection, detect
from ..index import PackageIndex
from ..licensing import CompatibilityMatrix
from ..model import ReleaseId
from ..resolver import DependencyGraph, resolve
from .problem import (ABSENT, DEFAULT_UNIVERSE_CAP, Clause, CostModel, DependencyImplication,
                      Domain, LicenseExclusion, MigrationRule, RootFreedom, RootPin,
                      SolutionExclusion, SolverProblem, build_constraints, build_problem,
                      build_vars, compatible_licenses, direct_dependencies, license_warnings,
                      load_migrations)
from .report import render_json, render_report, render_text
from .solver import (DEFAULT_TIMEOUT_SECS, ChangeLicense, Migrate, Pin, RemediationAction,
                     RemediationPlan, Remove, diff_to_actions, migration_pairs, plan_cost,
                     resulting_graph, solve_top_n)


@dataclass
class RemediationResult:
    release: ReleaseId
    baseline: DependencyGraph
    detection: Detection
    licenses: list[str] = field(default_factory=list)
    plans: list[RemediationPlan] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def needed(self) -> bool:
        return self.detection.label is CompatibilityLabel.INCOMPATIBLE

    def render(self, format: str = "text", provenance: Optional[dict] = None) -> str:
        depths = {n.name: d for n, d in self.baseline.depths().items()}
        return render_report(self.release, self.licenses, self.plans, format,
                             warnings=self.warnings, provenance=provenance,
                             baseline_depths=depths)


def remediate(index: PackageIndex, root: ReleaseId, matrix: CompatibilityMatrix,
              migrations: Iterable[MigrationRule] = (), *, n: int = 5, m: int = 3,
              cost_model: Optional[CostModel] = None, t: Optional[int] = None,
              env: Optional[Mapping[str, str]] = None, extras: Iterable[str] = (),
              timeout_secs: Optional[float] = DEFAULT_TIMEOUT_SECS,
              cap: int = DEFAULT_UNIVERSE_CAP) -> RemediationResult:
    """Resolve, detect and, when needed, search for license and dependency fixes.

    Raises NoSolution or SolverTimeout from the search.
    """
    extras = tuple(extras)
    baseline = resolve(index, root, t, env, extras)
    detection = detect(baseline, matrix)
    result = RemediationResult(baseline.root, baseline, detection,
                               warnings=license_warnings(baseline, matrix))
    if not result.needed:
        return result
    result.licenses = compatible_licenses(baseline, matrix, index.license_popularity, m)
    problem = build_problem(index, baseline, matrix, migrations, cost_model,
                            t=t, env=env, extras=extras, cap=cap)
    result.plans = solve_top_n(problem, n, timeout_secs)
    return result


__all__ = [
    "ABSENT", "ChangeLicense", "Clause", "CostModel", "DependencyImplication", "Domain",
    "LicenseExclusion", "Migrate", "MigrationRule", "Pin", "RemediationAction",
    "RemediationPlan", "RemediationResult", "Remove", "RootFreedom", "RootPin",
    "SolutionExclusion", "SolverProblem", "build_constraints", "build_problem", "build_vars",
    "compatible_licenses", "diff_to_actions", "direct_dependencies", "license_warnings",
    "load_migrations", "migration_pairs", "plan_cost", "remediate", "render_json",
    "render_report", "render_text", "resulting_graph", "solve_top_n",
]
