from __future__ import annotations

import json
import random

import pytest

from licensegraph.detector import CompatibilityLabel, detect
from licensegraph.errors import ConfigError, InconsistentSolution, NoSolution, UniverseTooLarge
from licensegraph.index import build_index, record_from_json
from licensegraph.licensing import load_matrix
from licensegraph.model import ReleaseId, parse_version
from licensegraph.remediator import (ABSENT, CostModel, DependencyImplication, LicenseExclusion,
                                     Migrate, MigrationRule, Pin, RemediationPlan, Remove,
                                     RootFreedom, RootPin, SolverProblem, build_constraints,
                                     build_problem, build_vars, compatible_licenses,
                                     diff_to_actions, load_migrations, plan_cost, remediate,
                                     render_json, render_text, solve_top_n)
from licensegraph.resolver import resolve

from conftest import FIXTURES
import oracles


def row(name, version, spdx="MIT", requires=(), when=0):
    return {"name": name, "version": version, "upload_time": when, "requires_dist": list(requires),
            "license": None, "classifiers": [], "spdx": spdx}


def index_of(rows):
    return build_index([record_from_json(r) for r in rows])


def rid(text):
    return ReleaseId.parse(text)


@pytest.fixture(scope="module")
def fiftyone_migrations():
    return load_migrations(FIXTURES / "migrations.jsonl")


# ---------------------------------------------------------------------------
# Inputs

def test_migration_rules(tmp_path):
    assert MigrationRule("NDJSON", "JsonLines") == MigrationRule("ndjson", "jsonlines")
    with pytest.raises(ValueError):
        MigrationRule("a", "A")
    path = tmp_path / "m.jsonl"
    path.write_text('{"source": "b", "target": "c"}\n\n{"source": "a", "target": "c"}\n'
                    '{"source": "b", "target": "c"}\n')
    assert load_migrations(path) == (MigrationRule("a", "c"), MigrationRule("b", "c"))
    path.write_text('{"source": "b"}\n')
    with pytest.raises(ConfigError):
        load_migrations(path)


def test_cost_model_lint():
    assert CostModel().lint() == []
    assert CostModel(c_migration=50, c_removal=10).lint()
    with pytest.raises(ConfigError):
        CostModel(c_migration=-1)


def test_compatible_licenses_examples(matrix, fiftyone_index, fiftyone_root):
    g = resolve(fiftyone_index, fiftyone_root)
    popularity = fiftyone_index.license_popularity
    assert compatible_licenses(g, matrix, popularity, 3) == \
        ["GPL-3.0-only", "GPL-3.0-or-later", "AGPL-3.0-only"]
    assert compatible_licenses(g, matrix, popularity, 0) == []
    # a GPL-2.0-only dependency rules out Apache-2.0 and GPL-3.0 for the root
    index = index_of([row("app", "1.0", "Apache-2.0", ["old"]), row("old", "1.0", "GPL-2.0-only")])
    licenses = compatible_licenses(resolve(index, rid("app==1.0")), matrix, {}, 20)
    assert "Apache-2.0" not in licenses and "GPL-3.0-only" not in licenses
    assert licenses == ["GPL-2.0-only", "GPL-2.0-or-later"]
    # no dependencies: every license qualifies
    alone = index_of([row("app", "1.0")])
    assert len(compatible_licenses(resolve(alone, rid("app==1.0")), matrix, {}, 99)) == \
        len(matrix.licenses)


def test_build_vars_examples():
    alone = index_of([row("app", "1.0")])
    assert list(build_vars(alone, rid("app==1.0"))) == ["app"]
    chain = index_of([row("a", "1.0", requires=["b"]), row("b", "1.0", requires=["c"]),
                      row("b", "2.0"), row("c", "1.0"), row("unrelated", "1.0")])
    universe = build_vars(chain, rid("a==1.0"))
    # c is only reachable through the older b, it still belongs to the universe
    assert list(universe) == ["a", "b", "c"]
    assert [str(r.version) for r in universe["b"].records] == ["1.0", "2.0"]
    with_target = index_of([row("a", "1.0", requires=["b"]), row("b", "1.0"), row("z", "1.0")])
    universe = build_vars(with_target, rid("a==1.0"), [MigrationRule("b", "z")])
    assert list(universe) == ["a", "b", "z"]
    # rules whose source is not a direct dependency are ignored
    assert list(build_vars(with_target, rid("a==1.0"), [MigrationRule("q", "z")])) == ["a", "b"]


def test_build_vars_respects_cutoff_and_cap():
    index = index_of([row("a", "1.0", requires=["b"]), row("b", "1.0", when=0),
                      row("b", "2.0", when=100)])
    assert len(build_vars(index, rid("a==1.0"), t=50)["b"].records) == 1
    wide = index_of([row("root", "1.0", requires=[f"d{i}" for i in range(10)])] +
                    [row(f"d{i}", "1.0") for i in range(10)])
    with pytest.raises(UniverseTooLarge) as err:
        build_vars(wide, rid("root==1.0"), cap=5)
    assert err.value.cap == 5


def test_build_constraints_examples(matrix):
    index = index_of([row("app", "1.0", "MIT", ["lib", "gone"]),
                      row("lib", "1.0", "MIT", ["dep>=2"]), row("lib", "2.0", "GPL-3.0-only"),
                      row("dep", "1.0"), row("dep", "2.0"), row("dep", "3.0")])
    root = rid("app==1.0")
    universe = build_vars(index, root)
    clauses = build_constraints(index, root, universe, matrix)
    assert RootPin("app", -1) in clauses
    assert RootFreedom("lib", (-2, -1)) in clauses
    assert DependencyImplication("lib", -2, (("dep", (-2, -1)),)) in clauses
    assert LicenseExclusion("lib", -1, "GPL-3.0-only") in clauses
    assert not any(isinstance(c, LicenseExclusion) and c.pkg == "dep" for c in clauses)
    # requirements on packages outside the index do not produce clauses
    assert all("gone" not in str(c) for c in clauses)


def test_problem_rejects_unknown_packages(fiftyone_index, fiftyone_root):
    g = resolve(fiftyone_index, fiftyone_root)
    vars = build_vars(fiftyone_index, fiftyone_root)
    with pytest.raises(ValueError):
        SolverProblem(fiftyone_root, vars, [RootFreedom("nope", (-1,))], CostModel(), g)


# ---------------------------------------------------------------------------
# Fiftyone example

def fiftyone_problem(index, root, matrix, migrations=()):
    return build_problem(index, resolve(index, root), matrix, migrations)


def test_fiftyone_without_migrations(fiftyone_index, fiftyone_root, matrix):
    result = remediate(fiftyone_index, fiftyone_root, matrix, n=5)
    assert result.needed
    costs = [p.total_cost for p in result.plans]
    assert costs == sorted(costs) and costs[0] == 212
    first = [a.describe() for a in result.plans[0].actions]
    assert first[0] == "Remove ndjson"
    assert "Remove patool" in first
    for plan in result.plans:
        assert detect(plan.resulting_graph, matrix).label is not CompatibilityLabel.INCOMPATIBLE


def test_fiftyone_with_migrations(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations):
    result = remediate(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations, n=5)
    costs = [p.total_cost for p in result.plans]
    assert costs[0] == 122 and costs == sorted(costs)
    assert result.plans[0].actions[0] == Migrate("ndjson", "jsonlines", parse_version("3.1.0"))
    graph_names = [n.name for n in result.plans[0].resulting_graph.nodes]
    assert "jsonlines" in graph_names and "ndjson" not in graph_names
    assert result.licenses == ["GPL-3.0-only", "GPL-3.0-or-later", "AGPL-3.0-only"]


def test_compatible_release_needs_nothing(mit_index, matrix):
    result = remediate(mit_index, rid("app==1.0"), matrix)
    assert not result.needed and result.plans == [] and result.licenses == []


def test_baseline_is_a_fixed_point(mit_index, matrix):
    root = rid("app==1.0")
    g = resolve(mit_index, root)
    problem = build_problem(mit_index, g, matrix)
    (plan,) = solve_top_n(problem, n=1)
    assert plan.total_cost == 0 and plan.actions == ()
    assert plan.resulting_graph.nodes == g.nodes


def test_cost_audit_on_fiftyone(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations):
    problem = fiftyone_problem(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations)
    cm = problem.cost_model
    for plan in solve_top_n(problem, n=5):
        expected = 0
        for action in plan.actions:
            if isinstance(action, Migrate):
                expected += cm.c_migration
            elif isinstance(action, Remove):
                expected += cm.c_removal
            else:
                name = action.pkg
                expected += abs(plan.assignment[name] - problem.baseline_assignment[name])
        assert plan.total_cost == expected == plan_cost(problem, plan.assignment)


def test_diff_to_actions_examples(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations):
    problem = fiftyone_problem(fiftyone_index, fiftyone_root, matrix, fiftyone_migrations)
    base = problem.baseline_assignment
    a = dict(base)
    a.update({"ndjson": ABSENT, "jsonlines": -1, "voxel51-eta": ABSENT, "patool": ABSENT,
              "h11": -2})
    actions = diff_to_actions(problem, a)
    assert [a.describe() for a in actions] == [
        "Migrate ndjson to jsonlines", "Remove voxel51-eta", "Pin h11 to 0.11.0", "Remove patool"]
    with pytest.raises(InconsistentSolution):
        diff_to_actions(problem, base)


def test_no_solution_when_root_itself_is_excluded(fiftyone_index, fiftyone_root):
    g = resolve(fiftyone_index, fiftyone_root)
    vars = build_vars(fiftyone_index, fiftyone_root)
    clauses = [RootPin("fiftyone", -1), LicenseExclusion("fiftyone", -1, "Apache-2.0")]
    with pytest.raises(NoSolution):
        solve_top_n(SolverProblem(fiftyone_root, vars, clauses, CostModel(), g), n=3)


def test_stricter_matrix_never_lowers_cost(tmp_path, fiftyone_index, fiftyone_root, matrix):
    doc = matrix.to_dict()
    loose_path = tmp_path / "loose.json"
    strict_path = tmp_path / "strict.json"
    loose_path.write_text(json.dumps(doc))
    doc = dict(doc, incompatible=list(doc["incompatible"]) + [["MIT", "Apache-2.0"]])
    strict_path.write_text(json.dumps(doc))
    loose = solve_top_n(fiftyone_problem(fiftyone_index, fiftyone_root, load_matrix(loose_path)), 1)
    strict = solve_top_n(fiftyone_problem(fiftyone_index, fiftyone_root, load_matrix(strict_path)), 1)
    assert strict[0].total_cost >= loose[0].total_cost


# ---------------------------------------------------------------------------
# Rendering

def plan_of(*actions, cost=0, graph=None):
    return RemediationPlan(tuple(actions), cost, graph)


def test_render_nothing_found():
    assert render_text(rid("x==1.0"), [], []) == "No remediation found for x 1.0.\n"


def test_render_three_action_plan(fiftyone_index, fiftyone_root):
    g = resolve(fiftyone_index, fiftyone_root)
    plan = plan_of(Migrate("ndjson", "jsonlines", parse_version("3.1.0")), Remove("patool"),
                   Pin("h11", parse_version("0.11.0")), cost=111, graph=g)
    text = render_text(fiftyone_root, ["GPL-3.0-only", "AGPL-3.0-only"], [plan],
                       provenance={"index sha256": "abc"})
    assert text == (
        "Possible Remediations for fiftyone 0.18.0:\n"
        "1. Change project license to GPL-3.0-only or AGPL-3.0-only;\n"
        "2. Or make the following dependency changes:\n"
        "    a) Migrate ndjson to jsonlines;\n"
        "    b) Remove patool;\n"
        "    c) Pin h11 to 0.11.0.\n"
        "\n"
        "-- index sha256 abc\n")
    doc = json.loads(render_json(fiftyone_root, [], [plan], baseline_depths={"ndjson": 1}))
    assert doc["plans"][0]["cost"] == 111
    assert doc["plans"][0]["actions"][0] == {"kind": "migrate", "package": "ndjson",
                                             "target": "jsonlines", "version": "3.1.0", "depth": 1}
    assert doc["plans"][0]["actions"][2] == {"kind": "pin", "package": "h11", "version": "0.11.0",
                                             "depth": None}


def test_render_single_action_plans_inline(fiftyone_index, fiftyone_root):
    g = resolve(fiftyone_index, fiftyone_root)
    plans = [plan_of(Remove("ndjson"), graph=g), plan_of(Remove("patool"), graph=g)]
    text = render_text(fiftyone_root, [], plans, warnings=["w1"])
    assert text.splitlines() == ["Possible Remediations for fiftyone 0.18.0:",
                                 "1. Remove ndjson;", "2. Remove patool.", "", "Warnings:", "  - w1"]


# ---------------------------------------------------------------------------
# Random problems against exhaustive search

def oracle_matrix(tmp_path, problem):
    categories = {"MIT": "permissive", "Apache-2.0": "permissive", "GPL-3.0-only": "strong",
                  "LGPL-2.1-only": "weak", "GPL-2.0-only": "strong"}
    path = tmp_path / "matrix.json"
    path.write_text(json.dumps({"licenses": oracles.LICENSES, "categories": categories,
                                "incompatible": sorted(map(list, problem.incompatible))}))
    return load_matrix(path)


def as_oracle_assignment(problem, a):
    return {name: a[name] for name in problem.universe}


@pytest.mark.parametrize("seed", range(80))
def test_top_n_matches_exhaustive_search(tmp_path, seed):
    rng = random.Random(seed)
    problem = oracles.prepare(oracles.random_remediation_problem(rng, 6, 4))
    matrix = oracle_matrix(tmp_path, problem)
    index = index_of(problem.rows)
    root = rid(f"{problem.root[0]}=={problem.root[1]}")
    baseline = resolve(index, root)
    rules = [MigrationRule(s, t) for s, t in problem.migrations]
    cost_model = CostModel(problem.c_migration, problem.c_removal)
    solver_problem = build_problem(index, baseline, matrix, rules, cost_model)

    assert list(solver_problem.vars) == problem.universe
    assert solver_problem.baseline_assignment == problem.baseline

    n = 3
    try:
        plans = solve_top_n(solver_problem, n=n, timeout_secs=60)
    except NoSolution:
        plans = []
    previous = []
    for plan in plans:
        a = as_oracle_assignment(problem, plan.assignment)
        assert oracles.feasible(problem, a)
        assert all(oracles.exclusion_holds(problem, p, a) for p in previous)
        assert plan.total_cost == oracles.optimum(problem, previous) == oracles.cost(problem, a)
        label = detect(plan.resulting_graph, matrix).label
        assert label is not CompatibilityLabel.INCOMPATIBLE
        previous.append(a)
    if len(plans) < n:
        # the search stopped because nothing else is left
        assert oracles.optimum(problem, previous) is None
    costs = [p.total_cost for p in plans]
    assert costs == sorted(costs)


def test_random_problems_are_not_trivial():
    problems = [oracles.prepare(oracles.random_remediation_problem(random.Random(seed), 6, 4))
                for seed in range(80)]
    assert sum(len(p.universe) >= 4 for p in problems) >= 30
    assert sum(not oracles.feasible(p, dict(p.baseline)) for p in problems) >= 30
    assert sum(any(s in p.direct and p.baseline[s] != 0 and t in p.universe and p.baseline[t] == 0
                   for s, t in p.migrations) for p in problems) >= 10
