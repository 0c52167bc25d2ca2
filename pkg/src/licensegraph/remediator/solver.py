"""Minimal-cost remediation search and conversion of solutions into actions."""

from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Optional, Union

import numpy as np
import z3
from scipy.optimize import linear_sum_assignment

from ..errors import InconsistentSolution, NoSolution, SolverTimeout
from ..model import ReleaseId, VersionKey
from ..resolver import CONFLICT_IGNORED, UNSATISFIABLE, DependencyGraph, Unresolved
from .problem import (ABSENT, Assignment, DependencyImplication, LicenseExclusion, RootFreedom,
                      RootPin, SolutionExclusion, SolverProblem, version_text)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_SECS = 300.0


# ---------------------------------------------------------------------------
# Actions

@dataclass(frozen=True)
class ChangeLicense:
    targets: tuple[str, ...]

    @property
    def package(self) -> Optional[str]:
        return None

    def describe(self) -> str:
        return f"Change project license to {join_alternatives(self.targets)}"


@dataclass(frozen=True)
class Migrate:
    source: str
    target: str
    to_version: VersionKey

    @property
    def package(self) -> str:
        return self.source

    def describe(self) -> str:
        return f"Migrate {self.source} to {self.target}"


@dataclass(frozen=True)
class Remove:
    pkg: str

    @property
    def package(self) -> str:
        return self.pkg

    def describe(self) -> str:
        return f"Remove {self.pkg}"


@dataclass(frozen=True)
class Pin:
    pkg: str
    version: VersionKey

    @property
    def package(self) -> str:
        return self.pkg

    def describe(self) -> str:
        return f"Pin {self.pkg} to {version_text(self.version)}"


RemediationAction = Union[ChangeLicense, Migrate, Remove, Pin]
_KIND_ORDER = {Migrate: 0, Remove: 1, Pin: 2}


def join_alternatives(items) -> str:
    items = list(items)
    if len(items) <= 2:
        return " or ".join(items)
    return ", ".join(items[:-1]) + ", or " + items[-1]


@dataclass(frozen=True)
class RemediationPlan:
    actions: tuple[RemediationAction, ...]
    total_cost: int
    resulting_graph: DependencyGraph
    assignment: Mapping[str, int] = field(default_factory=dict, repr=False)

    @property
    def changed(self) -> tuple[str, ...]:
        names = []
        for a in self.actions:
            names.append(a.package)
            if isinstance(a, Migrate):
                names.append(a.target)
        return tuple(sorted(names))


# ---------------------------------------------------------------------------
# Cost

def migration_pairs(problem: SolverProblem, a: Assignment) -> list[tuple[str, str]]:
    """The cheapest way to explain removed packages as migrations.

    Pairs a removed baseline source with an added target; each package joins
    at most one pair, and only pairs that save cost are kept.
    """
    base = problem.baseline_assignment
    cm = problem.cost_model
    rules = [r for r in problem.applicable_migrations()
             if a[r.source] == ABSENT and a[r.target] != ABSENT]
    if not rules:
        return []
    sources = sorted({r.source for r in rules})
    targets = sorted({r.target for r in rules})
    savings = np.zeros((len(sources), len(targets)), dtype=np.int64)
    for r in rules:
        saving = cm.c_removal + abs(a[r.target] - base[r.target]) - cm.c_migration
        savings[sources.index(r.source), targets.index(r.target)] = max(saving, 0)
    rows, cols = linear_sum_assignment(savings, maximize=True)
    return sorted((sources[i], targets[j]) for i, j in zip(rows, cols) if savings[i, j] > 0)


def plan_cost(problem: SolverProblem, a: Assignment) -> int:
    """Objective value of an assignment against the baseline."""
    base = problem.baseline_assignment
    cm = problem.cost_model
    pairs = migration_pairs(problem, a)
    paired = {s for s, _ in pairs} | {t for _, t in pairs}
    cost = cm.c_migration * len(pairs)
    for name in problem.vars:
        if name == problem.root.name or name in paired or a[name] == base[name]:
            continue
        if a[name] == ABSENT:
            cost += cm.c_removal
        else:
            cost += abs(a[name] - base[name])
    return cost


# ---------------------------------------------------------------------------
# Encoding

def _encode(problem: SolverProblem) -> tuple[z3.Optimize, dict[str, z3.ArithRef]]:
    opt = z3.Optimize()
    xs = {name: z3.Int(f"x[{name}]") for name in problem.vars}
    for name, dom in problem.vars.items():
        opt.add(xs[name] >= -dom.k, xs[name] <= 0)

    for clause in problem.clauses:
        opt.add(clause_to_z3(clause, xs))

    base = problem.baseline_assignment
    cm = problem.cost_model
    rules = problem.applicable_migrations()
    ms = {r: z3.Bool(f"m[{r.source}->{r.target}]") for r in rules}
    by_source: dict[str, list] = {}
    by_target: dict[str, list] = {}
    for r, m in ms.items():
        opt.add(z3.Implies(m, xs[r.source] == ABSENT), z3.Implies(m, xs[r.target] != ABSENT))
        by_source.setdefault(r.source, []).append(m)
        by_target.setdefault(r.target, []).append(m)
        if cm.c_migration:
            opt.add_soft(z3.Not(m), cm.c_migration, id="cost")
    for group in list(by_source.values()) + list(by_target.values()):
        if len(group) > 1:
            opt.add(z3.AtMost(*group, 1))

    for name, dom in problem.vars.items():
        if name == problem.root.name:
            continue
        x = xs[name]
        b = base[name]
        if b != ABSENT:
            for s in dom.slots:
                if s != b:
                    opt.add_soft(x != s, abs(s - b), id="cost")
            if cm.c_removal:
                matched = z3.Or(*by_source[name]) if name in by_source else z3.BoolVal(False)
                opt.add_soft(z3.Or(x != ABSENT, matched), cm.c_removal, id="cost")
        else:
            matched = z3.Or(*by_target[name]) if name in by_target else z3.BoolVal(False)
            for s in dom.slots:
                opt.add_soft(z3.Or(x != s, matched), abs(s), id="cost")
            if name in by_target:
                # a migration target costs the same at any version; prefer the latest
                for s in dom.slots:
                    if s != -1:
                        opt.add_soft(x != s, abs(s), id="tiebreak")
    return opt, xs


def clause_to_z3(clause, xs: Mapping[str, z3.ArithRef]) -> z3.BoolRef:
    if isinstance(clause, DependencyImplication):
        parts = [z3.Or(*[xs[dep] == s for s in allowed]) if allowed else z3.BoolVal(False)
                 for dep, allowed in clause.requirements]
        return z3.Implies(xs[clause.pkg] == clause.slot, z3.And(*parts))
    if isinstance(clause, RootFreedom):
        return z3.Or(xs[clause.pkg] == ABSENT, *[xs[clause.pkg] == s for s in clause.slots])
    if isinstance(clause, LicenseExclusion):
        return xs[clause.pkg] != clause.slot
    if isinstance(clause, RootPin):
        return xs[clause.pkg] == clause.slot
    if isinstance(clause, SolutionExclusion):
        if not clause.packages:
            return z3.BoolVal(False)
        return z3.Or(*[xs[p] == ABSENT for p in clause.packages])
    raise TypeError(f"unknown clause {clause!r}")


# ---------------------------------------------------------------------------
# Solutions to plans

def diff_to_actions(problem: SolverProblem, a: Assignment) -> list[RemediationAction]:
    """Translate an assignment into ordered Migrate/Remove/Pin actions."""
    violated = problem.violated(a)
    if violated:
        raise InconsistentSolution(f"assignment violates {violated[0]}")
    base = problem.baseline_assignment
    pairs = dict(migration_pairs(problem, a))
    targets = set(pairs.values())
    actions: list[RemediationAction] = []
    for name, dom in problem.vars.items():
        if name == problem.root.name or a[name] == base[name] or name in targets:
            continue
        if name in pairs:
            target = pairs[name]
            actions.append(Migrate(name, target, problem.vars[target].version_at(a[target])))
        elif a[name] == ABSENT:
            actions.append(Remove(name))
        else:
            actions.append(Pin(name, dom.version_at(a[name])))

    depths = {n.name: d for n, d in problem.baseline.depths().items()}
    direct = set(problem.direct)

    def key(action):
        pkg = action.package
        return (pkg not in direct, depths.get(pkg, len(problem.vars) + 1),
                _KIND_ORDER[type(action)], pkg)

    return sorted(actions, key=key)


def root_level_packages(problem: SolverProblem) -> tuple[str, ...]:
    names = list(problem.direct)
    for rule in problem.migrations:
        if rule.source in problem.direct and rule.target in problem.vars and rule.target not in names:
            names.append(rule.target)
    return tuple(names)


def resulting_graph(problem: SolverProblem, a: Assignment) -> DependencyGraph:
    """Re-resolve the root over the chosen versions, keeping only reachable nodes."""
    def node_of(name: str) -> Optional[ReleaseId]:
        if name not in problem.vars or a[name] == ABSENT:
            return None
        return problem.vars[name].record_at(a[name]).id

    root_id = node_of(problem.root.name)
    records = {}
    for name, dom in problem.vars.items():
        if a[name] != ABSENT:
            record = dom.record_at(a[name])
            records[record.id] = record
    order = [root_id]
    seen = {root_id}
    edges: dict[ReleaseId, list[ReleaseId]] = {}
    unresolved: list[Unresolved] = []
    queue = deque([root_id])
    while queue:
        node = queue.popleft()
        out = edges.setdefault(node, [])
        is_root = node == root_id
        for req in records[node].requires_dist:
            if not req.is_active(problem.env, problem.extras if is_root else ()):
                continue
            if req.name not in problem.vars:
                unresolved.append(Unresolved(node, req, UNSATISFIABLE))
                continue
            target = node_of(req.name)
            if target is None:
                continue
            if target not in out:
                out.append(target)
            if not req.matches(target.version, allow_prerelease=True):
                unresolved.append(Unresolved(node, req, CONFLICT_IGNORED))
            if target not in seen:
                seen.add(target)
                order.append(target)
                queue.append(target)
        if is_root:
            # adopted migration targets hang off the root
            for name in root_level_packages(problem):
                target = node_of(name)
                if target is not None and target not in out:
                    out.append(target)
                    if target not in seen:
                        seen.add(target)
                        order.append(target)
                        queue.append(target)
    return DependencyGraph(
        root=root_id,
        nodes=tuple(order),
        edges={n: tuple(edges.get(n, ())) for n in order},
        resolved_at=problem.baseline.resolved_at,
        unresolved=tuple(unresolved),
        licenses={n: records[n].license for n in order},
    )


def make_plan(problem: SolverProblem, a: Assignment) -> RemediationPlan:
    a = dict(a)
    return RemediationPlan(tuple(diff_to_actions(problem, a)), plan_cost(problem, a),
                           resulting_graph(problem, a), a)


def exclusion_for(problem: SolverProblem, a: Assignment) -> SolutionExclusion:
    """Force later solutions to drop at least one package this one changed to a release."""
    base = problem.baseline_assignment
    changed = sorted(n for n in problem.vars
                     if n != problem.root.name and a[n] != base[n] and a[n] != ABSENT)
    return SolutionExclusion(tuple(changed))


def solve_top_n(problem: SolverProblem, n: int = 5,
                timeout_secs: Optional[float] = DEFAULT_TIMEOUT_SECS) -> list[RemediationPlan]:
    """Up to ``n`` minimal-cost plans, each excluding the earlier ones.

    Ties between equal-cost optima are settled by the solver, which is
    deterministic for a fixed encoding.
    """
    opt, xs = _encode(problem)
    if timeout_secs:
        opt.set("timeout", max(int(timeout_secs * 1000), 1))
    plans: list[RemediationPlan] = []
    while len(plans) < n:
        started = time.monotonic()
        result = opt.check()
        log.debug("solver iteration %d: %s in %.2fs", len(plans) + 1, result,
                  time.monotonic() - started)
        if result == z3.unsat:
            break
        if result == z3.unknown:
            raise SolverTimeout(f"solver gave up after {timeout_secs}s: {opt.reason_unknown()}",
                                plans)
        model = opt.model()
        a = {name: model.eval(x, model_completion=True).as_long() for name, x in xs.items()}
        plans.append(make_plan(problem, a))
        opt.add(clause_to_z3(exclusion_for(problem, a), xs))
    if not plans:
        raise NoSolution(f"no assignment for {problem.root} satisfies the constraints")
    # discovery order: costs never decrease because each round only adds constraints
    return plans
