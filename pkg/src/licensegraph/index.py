"""Immutable package-index snapshots and the ways to build them.

An index is loaded from a JSON-lines dump (one release per line) or filled
from a registry's JSON API through :class:`RegistryClient`.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Mapping, Optional

from .errors import (IoFailure, MalformedRequirement, MalformedVersion, NetworkFailure,
                     NotFound, RateLimited, SchemaViolation)
from .licensing import (LicenseDetector, LicenseInfo, LicenseNormalizer, NormalizationTables,
                        normalize_license, load_tables)
from .model import ReleaseId, Requirement, merge_requirements, normalize_name, parse_requirement, parse_version

log = logging.getLogger(__name__)


def parse_timestamp(value: str | int | float | datetime) -> int:
    """ISO-8601 text (or epoch milliseconds) to integer UTC milliseconds."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a timestamp")
    if isinstance(value, (int, float)):
        return int(value)
    if isinstance(value, datetime):
        dt = value
    else:
        text = value.strip()
        if text.endswith(("Z", "z")):
            text = text[:-1] + "+00:00"
        dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp() * 1000)


def format_timestamp(ms: int) -> str:
    dt = datetime.fromtimestamp(ms / 1000, tz=timezone.utc)
    return dt.isoformat(timespec="seconds").replace("+00:00", "Z")


@dataclass(frozen=True)
class ReleaseRecord:
    id: ReleaseId
    upload_time: int
    requires_dist: tuple[Requirement, ...] = ()
    license_field: Optional[str] = None
    classifiers: tuple[str, ...] = ()
    spdx_hint: Optional[str] = None
    license: LicenseInfo = LicenseInfo()

    @property
    def name(self) -> str:
        return self.id.name

    @property
    def version(self):
        return self.id.version

    @property
    def classifier_licenses(self) -> tuple[str, ...]:
        return tuple(c for c in self.classifiers if c.startswith("License ::"))

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "version": self.version.raw or str(self.version),
            "upload_time": format_timestamp(self.upload_time),
            "requires_dist": [str(r) for r in self.requires_dist],
            "license": self.license_field,
            "classifiers": list(self.classifiers),
            "spdx": self.spdx_hint,
        }


def record_from_json(obj: Mapping[str, Any], diagnostics: Optional[list[str]] = None,
                     where: str = "") -> ReleaseRecord:
    """Validate one dump object. Raises SchemaViolation; bad requirement lines are dropped."""
    if not isinstance(obj, Mapping):
        raise SchemaViolation(0, "record is not a JSON object")
    for key in ("name", "version", "upload_time"):
        if obj.get(key) in (None, ""):
            raise SchemaViolation(0, f"missing {key}")
    try:
        name = normalize_name(str(obj["name"]))
        version = parse_version(str(obj["version"]))
        upload_time = parse_timestamp(obj["upload_time"])
    except (ValueError, MalformedVersion, TypeError) as exc:
        raise SchemaViolation(0, str(exc)) from exc

    raw_reqs = obj.get("requires_dist") or []
    if not isinstance(raw_reqs, list):
        raise SchemaViolation(0, "requires_dist is not a list")
    merged: dict[str, Requirement] = {}
    for line in raw_reqs:
        try:
            req = parse_requirement(str(line))
        except MalformedRequirement as exc:
            if diagnostics is not None:
                diagnostics.append(f"{where}{name} {version}: skipped requirement: {exc}")
            continue
        merged[req.name] = merge_requirements(merged[req.name], req) if req.name in merged else req

    classifiers = obj.get("classifiers") or []
    if not isinstance(classifiers, list):
        raise SchemaViolation(0, "classifiers is not a list")
    license_field = obj.get("license")
    spdx = obj.get("spdx")
    return ReleaseRecord(
        id=ReleaseId(name, version),
        upload_time=upload_time,
        requires_dist=tuple(merged.values()),
        license_field=str(license_field) if license_field is not None else None,
        classifiers=tuple(str(c) for c in classifiers),
        spdx_hint=str(spdx) if spdx else None,
    )


@dataclass(frozen=True)
class PackageIndex:
    """Every known release, grouped by package and sorted by version."""

    packages: Mapping[str, tuple[ReleaseRecord, ...]]
    license_popularity: Mapping[str, int] = field(default_factory=dict)
    diagnostics: tuple[str, ...] = ()
    skipped: int = 0
    snapshot_hash: str = ""

    def __contains__(self, name: str) -> bool:
        return name in self.packages

    def __len__(self) -> int:
        return len(self.packages)

    @property
    def release_count(self) -> int:
        return sum(len(v) for v in self.packages.values())

    def names(self) -> list[str]:
        return sorted(self.packages)

    def releases(self, name: str) -> tuple[ReleaseRecord, ...]:
        return self.packages.get(name, ())

    def get(self, name: str, version) -> Optional[ReleaseRecord]:
        if isinstance(version, str):
            version = parse_version(version)
        for record in self.packages.get(name, ()):
            if record.version == version:
                return record
        return None

    def record(self, rid: ReleaseId) -> Optional[ReleaseRecord]:
        return self.get(rid.name, rid.version)

    def releases_at(self, name: str, t: Optional[int]) -> list[ReleaseRecord]:
        return releases_at(self, name, t)

    def iter_records(self) -> Iterator[ReleaseRecord]:
        for name in sorted(self.packages):
            yield from self.packages[name]

    def popularity_rank(self) -> list[tuple[str, int]]:
        """License ids by descending release count, ties lexicographic."""
        return sorted(self.license_popularity.items(), key=lambda kv: (-kv[1], kv[0]))


def releases_at(index: PackageIndex, name: str, t: Optional[int]) -> list[ReleaseRecord]:
    """Releases of ``name`` uploaded at or before ``t`` (all of them when ``t`` is None)."""
    releases = index.packages.get(name, ())
    if t is None:
        return list(releases)
    return [r for r in releases if r.upload_time <= t]


def build_index(records: Iterable[ReleaseRecord], *, tables: Optional[NormalizationTables] = None,
                detector: Optional[LicenseDetector] = None, diagnostics: Iterable[str] = (),
                skipped: int = 0, snapshot_hash: str = "") -> PackageIndex:
    """Group, sort and license-normalize already-validated records."""
    diagnostics = list(diagnostics)
    grouped: dict[str, dict] = {}
    for record in records:
        versions = grouped.setdefault(record.name, {})
        if record.version in versions:
            diagnostics.append(f"duplicate release {record.id}; keeping the first")
            skipped += 1
            continue
        versions[record.version] = record

    flat = [r for versions in grouped.values() for r in versions.values()]
    normalizer = LicenseNormalizer(tables or load_tables(), detector).fit(flat)
    licensed = {r.id: replace(r, license=info) for r, info in zip(flat, normalizer.transform(flat))}

    packages = {
        name: tuple(licensed[versions[v].id] for v in sorted(versions))
        for name, versions in sorted(grouped.items())
    }
    popularity = Counter(r.license.spdx for r in licensed.values() if r.license.known)
    return PackageIndex(packages, dict(sorted(popularity.items())), tuple(diagnostics),
                        skipped, snapshot_hash)


def load_index(path: str | os.PathLike, *, tables: Optional[NormalizationTables] = None,
               detector: Optional[LicenseDetector] = None) -> PackageIndex:
    """Load a JSON-lines dump. Invalid lines are skipped and counted."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read index {path}: {exc}") from exc
    diagnostics: list[str] = []
    records: list[ReleaseRecord] = []
    skipped = 0
    for line_no, line in enumerate(data.decode("utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(record_from_json(obj, diagnostics, where=f"line {line_no}: "))
        except json.JSONDecodeError as exc:
            skipped += 1
            diagnostics.append(f"line {line_no}: invalid JSON: {exc.msg}")
        except SchemaViolation as exc:
            skipped += 1
            diagnostics.append(f"line {line_no}: {exc.reason}")
    for message in diagnostics:
        log.warning("%s: %s", path, message)
    digest = hashlib.sha256(data).hexdigest()
    return build_index(records, tables=tables, detector=detector, diagnostics=diagnostics,
                       skipped=skipped, snapshot_hash=digest)


def write_index(records: Iterable[ReleaseRecord | Mapping[str, Any]], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            obj = record.to_json() if isinstance(record, ReleaseRecord) else dict(record)
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Live registry client

class RegistryClient:
    """Fetch release metadata from a PyPI-style JSON API with an on-disk cache.

    Cached responses live at ``<cache_dir>/<normalized-name>--<version>.json``;
    a cached release is never fetched again.
    """

    def __init__(self, cache_dir: str | os.PathLike, base_url: str = "https://pypi.org",
                 session=None, max_attempts: int = 5, backoff: float = 1.0,
                 sleep: Callable[[float], None] = time.sleep, timeout: float = 30.0,
                 tables: Optional[NormalizationTables] = None) -> None:
        if session is None:
            import requests
            session = requests.Session()
        self.cache_dir = Path(cache_dir)
        self.base_url = base_url.rstrip("/")
        self.session = session
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.sleep = sleep
        self.timeout = timeout
        self.tables = tables
        self.network_calls = 0
        self._lock = threading.Lock()

    def cache_path(self, name: str, version: str) -> Path:
        return self.cache_dir / f"{normalize_name(name)}--{version}.json"

    def fetch_release(self, name: str, version: str) -> ReleaseRecord:
        path = self.cache_path(name, version)
        if path.exists():
            payload = json.loads(path.read_text("utf-8"))
        else:
            payload = self._get(f"{self.base_url}/pypi/{normalize_name(name)}/{version}/json")
            self._write_cache(path, payload)
        record = record_from_registry(payload)
        tables = self.tables or load_tables()
        return replace(record, license=normalize_license(record, tables))

    def _write_cache(self, path: Path, payload: dict) -> None:
        with self._lock:
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(payload, fh, sort_keys=True)
            os.replace(tmp, path)

    def _get(self, url: str) -> dict:
        last_error = "no attempt made"
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleep(self.backoff * 2 ** (attempt - 1))
            self.network_calls += 1
            try:
                response = self.session.get(url, timeout=self.timeout)
            except Exception as exc:  # noqa: BLE001 - transport errors are retried
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            status = response.status_code
            if status == 200:
                return response.json()
            if status == 404:
                raise NotFound(url)
            if status == 429:
                last_error = "rate limited"
                continue
            if status >= 500:
                last_error = f"HTTP {status}"
                continue
            raise NetworkFailure(f"HTTP {status} for {url}")
        if last_error == "rate limited":
            raise RateLimited(f"{url}: still rate limited after {self.max_attempts} attempts")
        raise NetworkFailure(f"{url}: {last_error} after {self.max_attempts} attempts")


def record_from_registry(payload: Mapping[str, Any]) -> ReleaseRecord:
    """Convert a registry ``/pypi/<name>/<version>/json`` response to a record."""
    info = payload.get("info") or {}
    uploads = [u.get("upload_time_iso_8601") or u.get("upload_time")
               for u in payload.get("urls") or []]
    uploads = [u for u in uploads if u]
    if not uploads:
        raise NotFound(f"{info.get('name')} {info.get('version')}: no uploaded distributions")
    obj = {
        "name": info.get("name"),
        "version": info.get("version"),
        "upload_time": min(uploads, key=parse_timestamp),
        "requires_dist": info.get("requires_dist") or [],
        "license": info.get("license") or None,
        "classifiers": info.get("classifiers") or [],
    }
    return record_from_json(obj)
