"""Incompatibility detection on resolved graphs and ecosystem-wide statistics."""

from __future__ import annotations

import enum
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Iterable, Mapping, Optional

from .errors import OutOfMatrix
from .index import PackageIndex, ReleaseRecord
from .licensing import (Compatibility, CompatibilityMatrix, LicenseCategory, LicenseInfo,
                        categorize, is_incompatible)
from .model import ReleaseId
from .resolver import DependencyGraph, resolve


class CompatibilityLabel(str, enum.Enum):
    COMPATIBLE = "Compatible"
    INCOMPATIBLE = "Incompatible"
    UNKNOWN = "Unknown"


@dataclass(frozen=True)
class IncompatibilityFinding:
    dependency: ReleaseId
    dep_license: LicenseInfo
    depth: int
    in_degree: int
    out_degree: int
    witness_path: tuple[ReleaseId, ...]

    def to_json(self) -> dict:
        return {
            "dependency": str(self.dependency),
            "license": str(self.dep_license),
            "depth": self.depth,
            "in_degree": self.in_degree,
            "out_degree": self.out_degree,
            "path": [str(n) for n in self.witness_path],
        }


@dataclass(frozen=True)
class Detection:
    label: CompatibilityLabel
    findings: tuple[IncompatibilityFinding, ...] = ()
    unknown: tuple[ReleaseId, ...] = ()
    diagnostics: tuple[str, ...] = ()

    def __iter__(self):
        # allows ``label, findings = detect(...)``
        return iter((self.label, self.findings))

    def to_json(self) -> dict:
        return {"label": self.label.value,
                "findings": [f.to_json() for f in self.findings],
                "unknown": [str(n) for n in self.unknown],
                "diagnostics": list(self.diagnostics)}


def detect(g: DependencyGraph, matrix: CompatibilityMatrix,
           index: Optional[PackageIndex] = None) -> Detection:
    """Check every dependency's license against the root's license."""

    def license_of(node: ReleaseId) -> LicenseInfo:
        if node in g.licenses or index is None:
            return g.license_of(node)
        record = index.record(node)
        return record.license if record else LicenseInfo()

    root_license = license_of(g.root)
    diagnostics: list[str] = []
    if root_license.known and root_license.spdx not in matrix:
        diagnostics.append(f"root license {root_license.spdx} is outside the matrix")
        root_license = LicenseInfo()
    if not root_license.known:
        return Detection(CompatibilityLabel.UNKNOWN, (), (g.root,), tuple(diagnostics))

    paths = g.shortest_paths()
    in_degree: Counter = Counter()
    for src in g.nodes:
        for dst in set(g.edges.get(src, ())):
            in_degree[dst] += 1

    findings = []
    unknown = []
    for node in g.dependencies:
        dep_license = license_of(node)
        try:
            verdict = is_incompatible(dep_license, root_license, matrix)
        except OutOfMatrix as exc:
            diagnostics.append(f"{node}: {exc}")
            verdict = Compatibility.UNKNOWN
        if verdict is Compatibility.UNKNOWN:
            unknown.append(node)
        elif verdict is Compatibility.INCOMPATIBLE:
            path = paths[node]
            findings.append(IncompatibilityFinding(
                node, dep_license, len(path) - 1, in_degree[node],
                len(g.edges.get(node, ())), path))

    if findings:
        label = CompatibilityLabel.INCOMPATIBLE
    elif unknown:
        label = CompatibilityLabel.UNKNOWN
    else:
        label = CompatibilityLabel.COMPATIBLE
    return Detection(label, tuple(findings), tuple(unknown), tuple(diagnostics))


# ---------------------------------------------------------------------------
# Ecosystem statistics

@dataclass(frozen=True)
class ChangeEvent:
    package: str
    from_release: ReleaseId
    to_release: ReleaseId
    from_license: str
    to_license: str
    direction: str  # "more permissive" | "less permissive" | "same level" | "unknown"


def _year(ms: int) -> int:
    return datetime.fromtimestamp(ms / 1000, tz=timezone.utc).year


def sample_latest_per_year(releases: Iterable[ReleaseRecord]) -> list[ReleaseRecord]:
    """The last upload of each calendar year (UTC)."""
    latest: dict[int, ReleaseRecord] = {}
    for r in releases:
        year = _year(r.upload_time)
        best = latest.get(year)
        if best is None or (r.upload_time, r.version) > (best.upload_time, best.version):
            latest[year] = r
    return [latest[y] for y in sorted(latest)]


def change_direction(old: LicenseCategory, new: LicenseCategory) -> str:
    if LicenseCategory.UNKNOWN in (old, new):
        return "unknown"
    if new < old:
        return "more permissive"
    if new > old:
        return "less permissive"
    return "same level"


def _category(info: LicenseInfo, matrix: CompatibilityMatrix) -> LicenseCategory:
    try:
        return categorize(info, matrix)
    except OutOfMatrix:
        return LicenseCategory.UNKNOWN


def licensing_changes(releases: Iterable[ReleaseRecord],
                      matrix: CompatibilityMatrix) -> list[ChangeEvent]:
    """Consecutive releases (version order) whose license differs."""
    events = []
    previous: Optional[ReleaseRecord] = None
    for r in releases:
        if previous is not None and previous.license != r.license:
            events.append(ChangeEvent(
                r.name, previous.id, r.id, str(previous.license), str(r.license),
                change_direction(_category(previous.license, matrix), _category(r.license, matrix))))
        previous = r
    return events


def cumulative_distribution(values: Iterable[int], max_threshold: int = 5) -> dict[int, float]:
    """Percentage of values <= k for k = 0..max_threshold."""
    values = list(values)
    if not values:
        return {k: 0.0 for k in range(max_threshold + 1)}
    return {k: 100.0 * sum(1 for v in values if v <= k) / len(values)
            for k in range(max_threshold + 1)}


LABEL_ORDER = (CompatibilityLabel.COMPATIBLE, CompatibilityLabel.INCOMPATIBLE,
               CompatibilityLabel.UNKNOWN)
CATEGORY_ORDER = (LicenseCategory.PERMISSIVE, LicenseCategory.WEAK_COPYLEFT,
                  LicenseCategory.STRONG_COPYLEFT, LicenseCategory.UNKNOWN)
DIRECTIONS = ("more permissive", "less permissive", "same level", "unknown")
METRICS = ("depth", "in_degree", "out_degree")


@dataclass
class StatsReport:
    label_counts: dict[str, int]
    category_by_year: dict[int, dict[str, int]]
    change_events: list[ChangeEvent]
    changes_per_package: dict[str, int]
    findings: list[IncompatibilityFinding]
    max_threshold: int = 5
    analyzed: list[tuple[ReleaseId, str]] = field(default_factory=list)

    @property
    def population(self) -> int:
        return sum(self.label_counts.values())

    def label_percentages(self) -> dict[str, float]:
        total = self.population
        return {k: (100.0 * v / total if total else 0.0) for k, v in self.label_counts.items()}

    def category_totals(self) -> dict[str, int]:
        totals: Counter = Counter()
        for counts in self.category_by_year.values():
            totals.update(counts)
        return {c.label: totals.get(c.label, 0) for c in CATEGORY_ORDER}

    def direction_counts(self) -> dict[str, int]:
        counts = Counter(e.direction for e in self.change_events)
        return {d: counts.get(d, 0) for d in DIRECTIONS}

    def packages_by_change_count(self) -> dict[str, int]:
        per = self.changes_per_package
        return {"one": sum(1 for v in per.values() if v == 1),
                "two_or_more": sum(1 for v in per.values() if v >= 2)}

    def cdfs(self) -> dict[str, dict[int, float]]:
        return {m: cumulative_distribution([getattr(f, m) for f in self.findings], self.max_threshold)
                for m in METRICS}

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "labels": {k: {"count": v, "percentage": round(self.label_percentages()[k], 2)}
                       for k, v in self.label_counts.items()},
            "categories_by_year": {str(y): c for y, c in sorted(self.category_by_year.items())},
            "category_totals": self.category_totals(),
            "licensing_changes": {
                "events": len(self.change_events),
                "directions": self.direction_counts(),
                "packages": self.packages_by_change_count(),
            },
            "findings": len(self.findings),
            "cdf": {m: {str(k): round(v, 2) for k, v in d.items()} for m, d in self.cdfs().items()},
        }

    def to_text(self) -> str:
        lines = ["Compatibility labels"]
        pct = self.label_percentages()
        rows = [("Label", "Count", "Percentage")]
        rows += [(k, f"{v:,}", f"{pct[k]:.2f}%") for k, v in self.label_counts.items()]
        rows.append(("Total", f"{self.population:,}", "100.00%" if self.population else "0.00%"))
        lines += format_table(rows, right=(1, 2))

        lines += ["", "License categories by year"]
        rows = [("Year",) + tuple(c.label for c in CATEGORY_ORDER)]
        for year, counts in sorted(self.category_by_year.items()):
            rows.append((str(year),) + tuple(str(counts.get(c.label, 0)) for c in CATEGORY_ORDER))
        lines += format_table(rows, right=tuple(range(1, 5)))

        lines += ["", "Licensing changes"]
        rows = [("Direction", "Count")] + [(d, str(n)) for d, n in self.direction_counts().items()]
        by_count = self.packages_by_change_count()
        rows += [("packages with 1 change", str(by_count["one"])),
                 ("packages with 2+ changes", str(by_count["two_or_more"]))]
        lines += format_table(rows, right=(1,))

        lines += ["", f"Cumulative distribution over {len(self.findings)} incompatible dependencies"]
        header = ("Metric",) + ("=0",) + tuple(f"<={k}" for k in range(1, self.max_threshold + 1))
        rows = [header]
        for metric, dist in self.cdfs().items():
            rows.append((metric,) + tuple(f"{dist[k]:.1f}%" for k in range(self.max_threshold + 1)))
        lines += format_table(rows, right=tuple(range(1, self.max_threshold + 2)))
        return "\n".join(lines) + "\n"


def format_table(rows: list[tuple[str, ...]], right: tuple[int, ...] = ()) -> list[str]:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for n, row in enumerate(rows):
        cells = [cell.rjust(w) if i in right else cell.ljust(w)
                 for i, (cell, w) in enumerate(zip(row, widths))]
        out.append("  ".join(cells).rstrip())
        if n == 0:
            out.append("  ".join("-" * w for w in widths))
    return out


def _analyze(index: PackageIndex, matrix: CompatibilityMatrix, record: ReleaseRecord,
             env: Optional[Mapping[str, str]]) -> Detection:
    graph = resolve(index, record.id, record.upload_time, env)
    return detect(graph, matrix)


def ecosystem_stats(index: PackageIndex, matrix: CompatibilityMatrix, sampling: bool = True,
                    *, env: Optional[Mapping[str, str]] = None, require_dependencies: bool = True,
                    max_threshold: int = 5, workers: int = 1) -> StatsReport:
    """Label shares, yearly category mix, licensing changes and metric CDFs.

    With ``sampling`` only the latest release of each package in each year is
    analyzed; licensing changes always look at every release.
    """
    category_by_year: dict[int, Counter] = defaultdict(Counter)
    targets: list[ReleaseRecord] = []
    events: list[ChangeEvent] = []
    per_package: dict[str, int] = {}
    for name in index.names():
        releases = index.releases(name)
        chosen = sample_latest_per_year(releases) if sampling else list(releases)
        for r in chosen:
            category_by_year[_year(r.upload_time)][_category(r.license, matrix).label] += 1
            if not require_dependencies or any(req.is_active(env) for req in r.requires_dist):
                targets.append(r)
        package_events = licensing_changes(releases, matrix)
        events.extend(package_events)
        if package_events:
            per_package[name] = len(package_events)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: _analyze(index, matrix, r, env), targets))
    else:
        results = [_analyze(index, matrix, r, env) for r in targets]

    labels: Counter = Counter()
    findings: list[IncompatibilityFinding] = []
    analyzed = []
    for record, result in zip(targets, results):
        labels[result.label.value] += 1
        findings.extend(result.findings)
        analyzed.append((record.id, result.label.value))

    return StatsReport(
        label_counts={l.value: labels.get(l.value, 0) for l in LABEL_ORDER},
        category_by_year={y: dict(c) for y, c in sorted(category_by_year.items())},
        change_events=events,
        changes_per_package=per_package,
        findings=findings,
        max_threshold=max_threshold,
        analyzed=analyzed,
    )
