"""License identification and compatibility queries.

Raw release metadata goes through a fixed pipeline: classifier tags, an exact
``license`` field lookup learned from classifier-tagged releases, looser
keyword rules, an optional external detector, and finally Unrecognizable.
"""

from __future__ import annotations

import enum
import functools
import json
import logging
import re
import shlex
import subprocess
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Iterable, Mapping, Optional, Protocol

from .errors import IoFailure, OutOfMatrix, SchemaViolation

log = logging.getLogger(__name__)

UNRECOGNIZABLE = "Unrecognizable"

# Deprecated SPDX spellings seen in metadata.
_DEPRECATED_IDS = {
    "gpl-1.0": "GPL-1.0-only", "gpl-1.0+": "GPL-1.0-or-later",
    "gpl-2.0": "GPL-2.0-only", "gpl-2.0+": "GPL-2.0-or-later",
    "gpl-3.0": "GPL-3.0-only", "gpl-3.0+": "GPL-3.0-or-later",
    "lgpl-2.0": "LGPL-2.0-only", "lgpl-2.0+": "LGPL-2.0-or-later",
    "lgpl-2.1": "LGPL-2.1-only", "lgpl-2.1+": "LGPL-2.1-or-later",
    "lgpl-3.0": "LGPL-3.0-only", "lgpl-3.0+": "LGPL-3.0-or-later",
    "agpl-1.0": "AGPL-1.0-only", "agpl-3.0": "AGPL-3.0-only",
    "agpl-3.0+": "AGPL-3.0-or-later", "gfdl-1.3": "GFDL-1.3-only",
}


class Step(str, enum.Enum):
    """Which stage of the pipeline produced a LicenseInfo."""

    SPDX = "spdx"
    CLASSIFIER = "classifier"
    FIELD = "field"
    KEYWORD = "keyword"
    DETECTOR = "detector"
    NONE = "unrecognizable"


@dataclass(frozen=True)
class LicenseInfo:
    """Either a known SPDX id or Unrecognizable (``spdx is None``)."""

    spdx: Optional[str] = None
    step: Step = field(default=Step.NONE, compare=False)
    diagnostic: Optional[str] = field(default=None, compare=False)

    @property
    def known(self) -> bool:
        return self.spdx is not None

    def __str__(self) -> str:
        return self.spdx or UNRECOGNIZABLE

    @classmethod
    def from_text(cls, text: Optional[str]) -> "LicenseInfo":
        if not text or text == UNRECOGNIZABLE:
            return cls()
        return cls(canonical_spdx(text), Step.SPDX)


UNKNOWN_LICENSE = LicenseInfo()


class LicenseCategory(enum.IntEnum):
    """Ordered by permissiveness; Unknown sorts last and is never compared."""

    PERMISSIVE = 0
    WEAK_COPYLEFT = 1
    STRONG_COPYLEFT = 2
    UNKNOWN = 3

    @property
    def label(self) -> str:
        return {0: "Permissive", 1: "Weak Copyleft", 2: "Strong Copyleft", 3: "Unknown"}[self.value]


_CATEGORY_CODES = {"permissive": LicenseCategory.PERMISSIVE,
                   "weak": LicenseCategory.WEAK_COPYLEFT,
                   "strong": LicenseCategory.STRONG_COPYLEFT}


class Compatibility(str, enum.Enum):
    COMPATIBLE = "Compatible"
    INCOMPATIBLE = "Incompatible"
    UNKNOWN = "Unknown"


def canonical_spdx(raw: str) -> str:
    """Map deprecated ids such as ``GPL-2.0+`` to their ``-or-later`` forms."""
    text = raw.strip()
    return _DEPRECATED_IDS.get(text.lower(), text)


def _read_json(path: Optional[Path], default_name: str) -> dict:
    try:
        if path is None:
            text = resources.files("licensegraph.data").joinpath(default_name).read_text("utf-8")
        else:
            text = Path(path).read_text("utf-8")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(exc.lineno, f"invalid JSON in {path or default_name}: {exc.msg}") from exc


# ---------------------------------------------------------------------------
# Compatibility matrix


@dataclass(frozen=True)
class CompatibilityMatrix:
    licenses: frozenset[str]
    incompatible_pairs: frozenset[tuple[str, str]]
    categories: Mapping[str, LicenseCategory]
    version: str = "unversioned"
    _by_lower: Mapping[str, str] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        for a, b in self.incompatible_pairs:
            if a not in self.licenses or b not in self.licenses:
                raise ValueError(f"pair ({a}, {b}) references a license outside the matrix")
        missing = self.licenses - set(self.categories)
        if missing:
            raise ValueError(f"no category for {sorted(missing)}")
        object.__setattr__(self, "_by_lower", {l.lower(): l for l in self.licenses})

    def lookup(self, spdx: str) -> str:
        """Return the matrix spelling of ``spdx`` or raise OutOfMatrix."""
        found = self._by_lower.get(canonical_spdx(spdx).lower())
        if found is None:
            raise OutOfMatrix(spdx)
        return found

    def __contains__(self, spdx: str) -> bool:
        return canonical_spdx(spdx).lower() in self._by_lower

    def pair_incompatible(self, dep: str, root: str) -> bool:
        return (self.lookup(dep), self.lookup(root)) in self.incompatible_pairs

    def with_pairs(self, pairs: Iterable[tuple[str, str]]) -> "CompatibilityMatrix":
        return CompatibilityMatrix(self.licenses, self.incompatible_pairs | frozenset(pairs),
                                   self.categories, self.version + "+extra")

    def to_dict(self) -> dict:
        names = {v: k for k, v in _CATEGORY_CODES.items()}
        return {
            "licenses": sorted(self.licenses),
            "categories": {l: names[c] for l, c in sorted(self.categories.items())},
            "incompatible": [list(p) for p in sorted(self.incompatible_pairs)],
        }


def load_matrix(path: Optional[Path] = None) -> CompatibilityMatrix:
    """Load a matrix file, or the curated default when ``path`` is None."""
    doc = _read_json(path, "matrix.json")
    try:
        licenses = frozenset(canonical_spdx(l) for l in doc["licenses"])
        categories = {canonical_spdx(l): _CATEGORY_CODES[c] for l, c in doc["categories"].items()}
        pairs = frozenset((canonical_spdx(a), canonical_spdx(b)) for a, b in doc["incompatible"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(0, f"bad matrix file: {exc!r}") from exc
    version = doc.get("_meta", {}).get("version") or doc.get("version") or "unversioned"
    try:
        matrix = CompatibilityMatrix(licenses, pairs, categories, version)
    except ValueError as exc:
        raise SchemaViolation(0, str(exc)) from exc
    bad = lint_self_compatibility(matrix)
    if bad:
        raise SchemaViolation(0, f"licenses marked incompatible with themselves: {bad}")
    return matrix


def is_incompatible(dep_license: LicenseInfo, root_license: LicenseInfo,
                    m: CompatibilityMatrix) -> Compatibility:
    """Label the edge ``dep -> root``. Raises OutOfMatrix for ids outside the matrix."""
    if not dep_license.known or not root_license.known:
        return Compatibility.UNKNOWN
    if m.pair_incompatible(dep_license.spdx, root_license.spdx):
        return Compatibility.INCOMPATIBLE
    return Compatibility.COMPATIBLE


def categorize(l: LicenseInfo, m: CompatibilityMatrix) -> LicenseCategory:
    if not l.known:
        return LicenseCategory.UNKNOWN
    return m.categories[m.lookup(l.spdx)]


def lint_self_compatibility(m: CompatibilityMatrix) -> list[str]:
    return sorted(a for a, b in m.incompatible_pairs if a == b)


def lint_permissive_source(m: CompatibilityMatrix) -> list[tuple[str, str]]:
    """Pairs where a permissive license is incompatible with some other license.

    A permissive dependency can normally be relicensed under anything, so every
    hit deserves a documented reason (e.g. Apache-2.0's patent terms vs GPL-2.0-only).
    """
    return sorted((a, b) for a, b in m.incompatible_pairs
                  if m.categories[a] is LicenseCategory.PERMISSIVE)


# ---------------------------------------------------------------------------
# Normalization tables

@dataclass(frozen=True)
class KeywordRule:
    spdx: str
    name_keywords: tuple[str, ...]
    version_keywords: tuple[str, ...] = ()
    must_have: tuple[str, ...] = ()
    must_not_have: tuple[str, ...] = ()

    def score(self, text: str) -> int:
        """Number of matched keywords, or 0 when the rule does not fire."""
        names = sum(_keyword_in(k, text) for k in self.name_keywords)
        if not names:
            return 0
        versions = sum(_keyword_in(k, text) for k in self.version_keywords)
        if self.version_keywords and not versions:
            return 0
        for entry in self.must_have:
            if not any(_keyword_in(alt, text) for alt in entry.split("|")):
                return 0
        if any(_keyword_in(k, text) for k in self.must_not_have):
            return 0
        return names + versions + len(self.must_have)


def _normalize_field_text(raw: str) -> str:
    text = raw.lower()
    text = re.sub(r"\bversion\b", " ", text)
    text = re.sub(r"(?<=[a-z])v?(?=\d)", " ", text)  # gplv3 -> gpl 3
    text = re.sub(r"\bv(?=\d)", "", text)
    text = re.sub(r"[^a-z0-9.+\-]+", " ", text)
    return " " + re.sub(r"\s+", " ", text).strip() + " "



@functools.lru_cache(maxsize=4096)
def _keyword_pattern(keyword: str) -> re.Pattern:
    kw = keyword.lower().strip()
    if re.fullmatch(r"[a-z0-9. ]+", kw):
        return re.compile(r"(?<![a-z0-9])" + re.escape(kw) + r"(?![a-z0-9])")
    return re.compile(re.escape(kw))


def _keyword_in(keyword: str, text: str) -> bool:
    return _keyword_pattern(keyword).search(text) is not None


@dataclass(frozen=True)
class NormalizationTables:
    classifier_to_spdx: Mapping[str, str]
    field_to_spdx: Mapping[str, str] = field(default_factory=dict)
    keyword_rules: tuple[KeywordRule, ...] = ()

    def with_field_mapping(self, mapping: Mapping[str, str]) -> "NormalizationTables":
        return NormalizationTables(self.classifier_to_spdx, dict(mapping), self.keyword_rules)

    def match_keywords(self, raw: str) -> Optional[str]:
        """Best-scoring keyword rule for a license field, ties broken by id."""
        text = _normalize_field_text(raw)
        best: Optional[tuple[int, str]] = None
        for rule in self.keyword_rules:
            score = rule.score(text)
            if score and (best is None or (-score, rule.spdx) < (-best[0], best[1])):
                best = (score, rule.spdx)
        return best[1] if best else None

    def classifier_ids(self, classifiers: Iterable[str]) -> list[str]:
        """Distinct SPDX ids named by license classifiers, in first-seen order."""
        ids: list[str] = []
        for c in classifiers:
            spdx = self.classifier_to_spdx.get(c.strip())
            if spdx is not None and spdx not in ids:
                ids.append(spdx)
        return ids


def load_keyword_rules(path: Optional[Path] = None) -> tuple[KeywordRule, ...]:
    doc = _read_json(path, "keywords.json")
    table = doc.get("licenses", doc)
    rules = []
    for spdx, entry in sorted(table.items()):
        if spdx.startswith("_"):
            continue
        rules.append(KeywordRule(
            spdx=canonical_spdx(spdx),
            name_keywords=tuple(entry.get("name_keywords", ())),
            version_keywords=tuple(entry.get("version_keywords", ())),
            must_have=tuple(entry.get("must_have", ())),
            must_not_have=tuple(entry.get("must_not_have", ())),
        ))
    return tuple(rules)


def load_classifier_table(path: Optional[Path] = None) -> dict[str, str]:
    doc = _read_json(path, "classifiers.json")
    return {k: canonical_spdx(v) for k, v in doc.get("classifiers", doc).items()
            if not k.startswith("_")}


def load_tables(keywords_path: Optional[Path] = None,
                classifiers_path: Optional[Path] = None) -> NormalizationTables:
    return NormalizationTables(load_classifier_table(classifiers_path), {},
                               load_keyword_rules(keywords_path))


def build_field_mapping(records: Iterable, tables: NormalizationTables) -> dict[str, str]:
    """Map each raw ``license`` field value to its most frequent classifier-derived id.

    Only releases carrying exactly one classifier license count as evidence.
    Ties go to the lexicographically smaller id.
    """
    counts: dict[str, Counter] = defaultdict(Counter)
    for record in records:
        value = (record.license_field or "").strip()
        if not value:
            continue
        ids = tables.classifier_ids(record.classifiers)
        if len(ids) == 1:
            counts[value][ids[0]] += 1
    return {value: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
            for value, c in counts.items()}


# ---------------------------------------------------------------------------
# External detectors

class LicenseDetector(Protocol):
    """Anything that can look at a release's files and name its license."""

    def __call__(self, record) -> Optional[str]: ...


class FileTreeDetector:
    """Locate a release's unpacked files and hand the directory to a scanner.

    ``locate`` returns a directory for a record (or None when nothing is on
    disk); ``scan`` returns an SPDX id for that directory or None.
    """

    def __init__(self, locate: Callable[[object], Optional[Path]],
                 scan: Callable[[Path], Optional[str]]) -> None:
        self.locate = locate
        self.scan = scan

    def __call__(self, record) -> Optional[str]:
        tree = self.locate(record)
        if tree is None or not Path(tree).is_dir():
            return None
        return self.scan(Path(tree))


class SubprocessScanner:
    """Run an external scanner; its first stdout line is taken as the SPDX id.

    The command is a template where ``{path}`` is replaced by the tree to scan.
    """

    def __init__(self, command: str, timeout: float = 120.0) -> None:
        self.command = command
        self.timeout = timeout

    def __call__(self, tree: Path) -> Optional[str]:
        argv = [part.replace("{path}", str(tree)) for part in shlex.split(self.command)]
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout,
                              check=True)
        first = proc.stdout.strip().splitlines()[:1]
        return first[0].strip() if first and first[0].strip() else None


class KeywordFileScanner:
    """Fallback scanner: apply the keyword rules to LICENSE/COPYING/README files."""

    patterns = ("LICENSE*", "LICENCE*", "COPYING*", "README*")

    def __init__(self, tables: NormalizationTables, max_bytes: int = 4096) -> None:
        self.tables = tables
        self.max_bytes = max_bytes

    def __call__(self, tree: Path) -> Optional[str]:
        for pattern in self.patterns:
            for path in sorted(tree.glob(pattern)):
                if not path.is_file():
                    continue
                with open(path, "r", encoding="utf-8", errors="replace") as fh:
                    head = fh.read(self.max_bytes)
                # license texts open with their title, the rest is noise
                title = " ".join(head.split()[:40])
                found = self.tables.match_keywords(title)
                if found:
                    return found
        return None


# ---------------------------------------------------------------------------
# The pipeline

def normalize_license(record, tables: NormalizationTables,
                      detector: Optional[LicenseDetector] = None) -> LicenseInfo:
    """Identify the license of one release record.

    Steps run in a fixed order and the first hit wins: a pre-normalized
    ``spdx`` value, classifier tags, exact field lookup, keyword rules,
    the external detector, then Unrecognizable.
    """
    hint = getattr(record, "spdx_hint", None)
    if hint:
        return LicenseInfo.from_text(hint)

    ids = tables.classifier_ids(record.classifiers)
    if len(ids) == 1:
        return LicenseInfo(ids[0], Step.CLASSIFIER)
    if len(ids) > 1:
        return LicenseInfo(None, Step.CLASSIFIER, diagnostic="multi-license")

    value = (record.license_field or "").strip()
    if value:
        mapped = tables.field_to_spdx.get(value)
        if mapped:
            return LicenseInfo(mapped, Step.FIELD)
        matched = tables.match_keywords(value)
        if matched:
            return LicenseInfo(matched, Step.KEYWORD)

    if detector is not None:
        try:
            found = detector(record)
        except Exception as exc:  # noqa: BLE001 - any scanner failure degrades to Unrecognizable
            log.warning("license detector failed for %s: %s", getattr(record, "id", record), exc)
            found = None
        if found:
            return LicenseInfo(canonical_spdx(found), Step.DETECTOR)
    return LicenseInfo(None, Step.NONE)


class LicenseNormalizer:
    """Learn the field mapping from a corpus, then normalize records.

    ``fit`` builds the field-to-SPDX table from classifier-tagged releases;
    ``transform`` runs the pipeline over records using the learned table.
    """

    def __init__(self, tables: Optional[NormalizationTables] = None,
                 detector: Optional[LicenseDetector] = None) -> None:
        self.tables = tables
        self.detector = detector

    def get_params(self) -> dict:
        return {"tables": self.tables, "detector": self.detector}

    def fit(self, records: Iterable) -> "LicenseNormalizer":
        base = self.tables or load_tables()
        records = list(records)
        self.tables_ = base.with_field_mapping(build_field_mapping(records, base))
        return self

    def transform(self, records: Iterable) -> list[LicenseInfo]:
        if not hasattr(self, "tables_"):
            raise RuntimeError("LicenseNormalizer is not fitted; call fit() first")
        return [normalize_license(r, self.tables_, self.detector) for r in records]

    def fit_transform(self, records: Iterable) -> list[LicenseInfo]:
        records = list(records)
        return self.fit(records).transform(records)
