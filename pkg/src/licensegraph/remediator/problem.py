"""Finite-domain encoding of a remediation problem.

Every package in the reachable universe becomes one integer variable. A
package with k releases uses slots -k..-1 (oldest..latest) and 0 for absent.
"""

from __future__ import annotations

import json
import logging
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Union

from ..errors import ConfigError, IoFailure, OutOfMatrix, UniverseTooLarge
from ..index import PackageIndex, ReleaseRecord, releases_at
from ..licensing import CompatibilityMatrix, LicenseInfo
from ..model import ReleaseId, Requirement, VersionKey, normalize_name
from ..resolver import DependencyGraph

log = logging.getLogger(__name__)

ABSENT = 0
DEFAULT_UNIVERSE_CAP = 2000


@dataclass(frozen=True, order=True)
class MigrationRule:
    source: str
    target: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "source", normalize_name(self.source))
        object.__setattr__(self, "target", normalize_name(self.target))
        if self.source == self.target:
            raise ValueError(f"migration rule maps {self.source} onto itself")


def load_migrations(path: Union[str, os.PathLike]) -> tuple[MigrationRule, ...]:
    """Read JSON lines of {"source": ..., "target": ...}."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read migrations {path}: {exc}") from exc
    rules = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rules.append(MigrationRule(obj["source"], obj["target"]))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}:{line_no}: bad migration rule: {exc}") from exc
    return tuple(sorted(set(rules)))


@dataclass(frozen=True)
class CostModel:
    c_migration: int = 10
    c_removal: int = 100

    def __post_init__(self) -> None:
        if self.c_migration < 0 or self.c_removal < 0:
            raise ConfigError("costs must be non-negative")
        for warning in self.lint():
            log.warning(warning)

    def lint(self) -> list[str]:
        if self.c_removal < self.c_migration:
            return [f"c_removal ({self.c_removal}) is below c_migration ({self.c_migration}); "
                    "migrations will never be preferred over removals"]
        return []


@dataclass(frozen=True)
class Domain:
    """The releases a package may take, oldest first."""

    name: str
    records: tuple[ReleaseRecord, ...]

    @property
    def k(self) -> int:
        return len(self.records)

    @property
    def slots(self) -> range:
        return range(-self.k, 0)

    def slot_of(self, version: VersionKey) -> int:
        for i, r in enumerate(self.records):
            if r.version == version:
                return i - self.k
        raise KeyError(f"{self.name} has no release {version}")

    def record_at(self, slot: int) -> Optional[ReleaseRecord]:
        if slot == ABSENT:
            return None
        return self.records[slot + self.k]

    def version_at(self, slot: int) -> Optional[VersionKey]:
        record = self.record_at(slot)
        return record.version if record else None

    def matching_slots(self, req: Requirement) -> tuple[int, ...]:
        return tuple(i - self.k for i, r in enumerate(self.records) if req.matches(r.version))


Assignment = Mapping[str, int]


def version_text(v: VersionKey) -> str:
    return v.raw or str(v)


# ---------------------------------------------------------------------------
# Clauses. Each knows how to check itself against a concrete assignment.

@dataclass(frozen=True)
class DependencyImplication:
    """(pkg = slot) implies, for every requirement, dep in allowed slots."""

    pkg: str
    slot: int
    requirements: tuple[tuple[str, tuple[int, ...]], ...]

    def holds(self, a: Assignment) -> bool:
        if a[self.pkg] != self.slot:
            return True
        return all(a[dep] in allowed for dep, allowed in self.requirements)


@dataclass(frozen=True)
class RootFreedom:
    """A root-level package may be absent or take any of its releases."""

    pkg: str
    slots: tuple[int, ...]

    def holds(self, a: Assignment) -> bool:
        return a[self.pkg] == ABSENT or a[self.pkg] in self.slots


@dataclass(frozen=True)
class LicenseExclusion:
    pkg: str
    slot: int
    license: str

    def holds(self, a: Assignment) -> bool:
        return a[self.pkg] != self.slot


@dataclass(frozen=True)
class RootPin:
    pkg: str
    slot: int

    def holds(self, a: Assignment) -> bool:
        return a[self.pkg] == self.slot


@dataclass(frozen=True)
class SolutionExclusion:
    """At least one of these previously changed packages must be absent."""

    packages: tuple[str, ...]

    def holds(self, a: Assignment) -> bool:
        return any(a[p] == ABSENT for p in self.packages)


Clause = Union[DependencyImplication, RootFreedom, LicenseExclusion, RootPin, SolutionExclusion]


@dataclass
class SolverProblem:
    root: ReleaseId
    vars: dict[str, Domain]
    clauses: list[Clause]
    cost_model: CostModel
    baseline: DependencyGraph
    migrations: tuple[MigrationRule, ...] = ()
    direct: tuple[str, ...] = ()
    env: Optional[Mapping[str, str]] = None
    extras: tuple[str, ...] = ()
    _baseline_assignment: dict[str, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for clause in self.clauses:
            for name in _clause_packages(clause):
                if name not in self.vars:
                    raise ValueError(f"clause {clause} references unknown package {name}")
        present = {n.name: n.version for n in self.baseline.nodes}
        self._baseline_assignment = {
            name: dom.slot_of(present[name]) if name in present else ABSENT
            for name, dom in self.vars.items()
        }

    @property
    def baseline_assignment(self) -> dict[str, int]:
        return dict(self._baseline_assignment)

    def applicable_migrations(self) -> tuple[MigrationRule, ...]:
        """Rules usable as a pair: source in the baseline, target not."""
        base = self._baseline_assignment
        return tuple(r for r in self.migrations
                     if r.source in self.direct and r.target in self.vars
                     and base.get(r.source, ABSENT) != ABSENT and base[r.target] == ABSENT)

    def violated(self, a: Assignment) -> list[Clause]:
        return [c for c in self.clauses if not c.holds(a)]


def _clause_packages(clause: Clause) -> Iterable[str]:
    if isinstance(clause, DependencyImplication):
        yield clause.pkg
        for dep, _ in clause.requirements:
            yield dep
    elif isinstance(clause, SolutionExclusion):
        yield from clause.packages
    else:
        yield clause.pkg


# ---------------------------------------------------------------------------

def _active(record: ReleaseRecord, env, extras=()) -> list[Requirement]:
    return [r for r in record.requires_dist if r.is_active(env, extras)]


def direct_dependencies(index: PackageIndex, root: ReleaseId, env=None,
                        extras: Iterable[str] = ()) -> tuple[str, ...]:
    record = index.record(root)
    names = []
    for req in _active(record, env, tuple(extras)):
        if req.name in index and req.name not in names and req.name != root.name:
            names.append(req.name)
    return tuple(names)


def build_vars(index: PackageIndex, root: ReleaseId, migrations: Iterable[MigrationRule] = (),
               *, t: Optional[int] = None, env=None, extras: Iterable[str] = (),
               cap: int = DEFAULT_UNIVERSE_CAP) -> dict[str, Domain]:
    """Saturate the package universe reachable from the root and migration targets."""
    direct = direct_dependencies(index, root, env, extras)
    seeds = list(direct)
    for rule in migrations:
        if rule.source in direct and rule.target in index and rule.target not in seeds:
            seeds.append(rule.target)

    universe: dict[str, Domain] = {root.name: Domain(root.name, tuple(releases_at(index, root.name, t)))}
    queue = deque()
    for name in seeds:
        if name not in universe:
            universe[name] = Domain(name, tuple(releases_at(index, name, t)))
            queue.append(name)
    while queue:
        name = queue.popleft()
        for record in universe[name].records:
            for req in _active(record, env):
                if req.name in universe or req.name not in index:
                    continue
                universe[req.name] = Domain(req.name, tuple(releases_at(index, req.name, t)))
                if len(universe) > cap:
                    raise UniverseTooLarge(len(universe), cap)
                queue.append(req.name)
    if len(universe) > cap:
        raise UniverseTooLarge(len(universe), cap)
    return universe


def excluded(license: LicenseInfo, root_license: LicenseInfo, matrix: CompatibilityMatrix) -> bool:
    """True when a known license may not be used under the root's license."""
    if not license.known or not root_license.known:
        return False
    try:
        return matrix.pair_incompatible(license.spdx, root_license.spdx)
    except OutOfMatrix:
        return False


def build_constraints(index: PackageIndex, root: ReleaseId, vars: Mapping[str, Domain],
                      matrix: CompatibilityMatrix, migrations: Iterable[MigrationRule] = (),
                      *, env=None, extras: Iterable[str] = ()) -> list[Clause]:
    root_record = index.record(root)
    root_license = root_record.license
    root_domain = vars[root.name]
    clauses: list[Clause] = [RootPin(root.name, root_domain.slot_of(root.version))]

    direct = direct_dependencies(index, root, env, extras)
    free = list(direct)
    for rule in migrations:
        if rule.source in direct and rule.target in vars and rule.target not in free:
            free.append(rule.target)
    for name in free:
        clauses.append(RootFreedom(name, tuple(vars[name].slots)))

    for name, dom in vars.items():
        if name == root.name:
            continue
        for slot in dom.slots:
            record = dom.record_at(slot)
            reqs = []
            for req in _active(record, env):
                if req.name in vars:
                    reqs.append((req.name, vars[req.name].matching_slots(req)))
            if reqs:
                clauses.append(DependencyImplication(name, slot, tuple(reqs)))
            if excluded(record.license, root_license, matrix):
                clauses.append(LicenseExclusion(name, slot, record.license.spdx))
    return clauses


def build_problem(index: PackageIndex, baseline: DependencyGraph, matrix: CompatibilityMatrix,
                  migrations: Iterable[MigrationRule] = (), cost_model: Optional[CostModel] = None,
                  *, t: Optional[int] = None, env=None, extras: Iterable[str] = (),
                  cap: int = DEFAULT_UNIVERSE_CAP) -> SolverProblem:
    migrations = tuple(migrations)
    extras = tuple(extras)
    root = baseline.root
    vars = build_vars(index, root, migrations, t=t, env=env, extras=extras, cap=cap)
    clauses = build_constraints(index, root, vars, matrix, migrations, env=env, extras=extras)
    return SolverProblem(root, vars, clauses, cost_model or CostModel(), baseline, migrations,
                         direct_dependencies(index, root, env, extras), env, extras)


def compatible_licenses(g: DependencyGraph, matrix: CompatibilityMatrix,
                        popularity: Mapping[str, int], m_limit: int = 3) -> list[str]:
    """Licenses the root could switch to without conflicting with any dependency."""
    dep_licenses = set()
    for node in g.dependencies:
        info = g.license_of(node)
        if info.known and info.spdx in matrix:
            dep_licenses.add(matrix.lookup(info.spdx))
    candidates = [l for l in matrix.licenses
                  if not any(matrix.pair_incompatible(d, l) for d in dep_licenses)]
    candidates.sort(key=lambda l: (-popularity.get(l, 0), l))
    return candidates[:max(m_limit, 0)]


def license_warnings(g: DependencyGraph, matrix: CompatibilityMatrix) -> list[str]:
    warnings = []
    for node in g.dependencies:
        info = g.license_of(node)
        if not info.known:
            warnings.append(f"{node.name} {version_text(node.version)} has an unrecognized license and was not checked")
        elif info.spdx not in matrix:
            warnings.append(f"{node.name} {version_text(node.version)} uses {info.spdx}, which the matrix does not cover")
    return warnings
