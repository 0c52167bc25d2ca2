"""Command-line interface: resolve, analyze, remediate, stats."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Optional, Sequence

from .detector import CompatibilityLabel, detect, ecosystem_stats, format_table
from .errors import (ConfigError, IoFailure, NoSolution, NotFound, SchemaViolation,
                     SolverTimeout, UniverseTooLarge, UnknownRoot)
from .index import PackageIndex, load_index, parse_timestamp
from .licensing import load_matrix, load_tables
from .model import ReleaseId, normalize_name, parse_version
from .remediator import CostModel, load_migrations, remediate, render_report
from .remediator.problem import version_text
from .resolver import resolve

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NOT_FOUND = 2
EXIT_NO_SOLUTION = 3
EXIT_TIMEOUT = 4

ENV_PREFIX = "LICENSEGRAPH_"
log = logging.getLogger("licensegraph")


@dataclass
class RunConfig:
    index_path: Optional[str] = None
    matrix_path: Optional[str] = None
    keyword_table_path: Optional[str] = None
    migrations_path: Optional[str] = None
    timestamp: Optional[str] = None  # None: no cutoff; "upload": the release's own upload time
    extras: tuple[str, ...] = ()
    n_plans: int = 5
    m_licenses: int = 3
    c_migration: int = 10
    c_removal: int = 100
    solver_timeout_secs: float = 300.0
    universe_cap: int = 2000
    output_format: str = "text"
    workers: int = 1
    sampling: bool = True

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


# CLI flag -> RunConfig field
_FLAG_FIELDS = {
    "index": "index_path", "matrix": "matrix_path", "keywords": "keyword_table_path",
    "migrations": "migrations_path", "at": "timestamp", "extra": "extras", "n": "n_plans",
    "m": "m_licenses", "c_migration": "c_migration", "c_removal": "c_removal",
    "timeout": "solver_timeout_secs", "cap": "universe_cap", "format": "output_format",
    "workers": "workers", "sampling": "sampling",
}


def _coerce(name: str, value: Any) -> Any:
    default = getattr(RunConfig(), name)
    try:
        if name == "extras":
            if isinstance(value, str):
                value = [v for v in value.split(",") if v.strip()]
            return tuple(v.strip() for v in value)
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc
    return None if value is None else str(value)


def build_config(args: argparse.Namespace, environ: Optional[dict] = None) -> RunConfig:
    """Merge defaults < config file < environment < command line."""
    environ = os.environ if environ is None else environ
    values: dict[str, Any] = {}
    config_file = getattr(args, "config", None) or environ.get(ENV_PREFIX + "CONFIG")
    if config_file:
        try:
            doc = json.loads(Path(config_file).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read config file {config_file}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config file {config_file} must hold a JSON object")
        unknown = set(doc) - set(RunConfig.field_names())
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        values.update({k: _coerce(k, v) for k, v in doc.items()})
    for name in RunConfig.field_names():
        env_value = environ.get(ENV_PREFIX + name.upper())
        if env_value is not None:
            values[name] = _coerce(name, env_value)
    for flag, name in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            values[name] = _coerce(name, value)
    config = RunConfig(**values)
    if config.output_format not in ("text", "json"):
        raise ConfigError(f"unknown format {config.output_format!r}")
    if config.n_plans < 1 or config.m_licenses < 0:
        raise ConfigError("--n must be positive and --m non-negative")
    if config.c_migration < 0 or config.c_removal < 0:
        raise ConfigError("costs must be non-negative")
    return config


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--index", help="JSON-lines release dump")
    p.add_argument("--matrix", help="compatibility matrix JSON (default: bundled)")
    p.add_argument("--keywords", help="keyword rule table JSON (default: bundled)")
    p.add_argument("--format", choices=("text", "json"))
    p.add_argument("-v", "--verbose", action="count", default=0)
    return p


def _release_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("name")
    p.add_argument("version")
    p.add_argument("--at", help="resolution time: ISO-8601, epoch ms, or 'upload'")
    p.add_argument("--extra", action="append", help="activate an optional feature of the root")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="licensegraph",
        description="Detect and remediate license incompatibilities in Python dependency graphs.")
    sub = parser.add_subparsers(dest="command", required=True)
    common, release = _common_options(), _release_options()

    p = sub.add_parser("resolve", parents=[common, release], help="print the dependency graph")
    p.add_argument("-o", "--output", help="write the graph JSON here instead of stdout")

    sub.add_parser("analyze", parents=[common, release], help="label a release and list findings")

    p = sub.add_parser("remediate", parents=[common, release], help="suggest remediations")
    p.add_argument("--migrations", help="JSON-lines migration rules")
    p.add_argument("--n", type=int, help="number of dependency plans (default 5)")
    p.add_argument("--m", type=int, help="number of license alternatives (default 3)")
    p.add_argument("--c-migration", dest="c_migration", type=int, help="default 10")
    p.add_argument("--c-removal", dest="c_removal", type=int, help="default 100")
    p.add_argument("--timeout", type=float, help="per-iteration solver budget in seconds")
    p.add_argument("--cap", type=int, help="maximum package universe size (default 2000)")

    p = sub.add_parser("stats", parents=[common], help="ecosystem-wide statistics")
    p.add_argument("--workers", type=int)
    p.add_argument("--no-sampling", dest="sampling", action="store_const", const=False,
                   help="analyze every release instead of the latest per package and year")
    return parser


# ---------------------------------------------------------------------------

def _load(config: RunConfig):
    if not config.index_path:
        raise ConfigError("no index given (use --index or LICENSEGRAPH_INDEX_PATH)")
    tables = load_tables(Path(config.keyword_table_path)) if config.keyword_table_path else None
    index = load_index(config.index_path, tables=tables)
    matrix = load_matrix(Path(config.matrix_path) if config.matrix_path else None)
    return index, matrix


def _root(index: PackageIndex, args) -> ReleaseId:
    try:
        rid = ReleaseId(normalize_name(args.name), parse_version(args.version))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    record = index.record(rid)
    if record is None:
        raise UnknownRoot(f"{args.name} {args.version} is not in the index")
    return record.id


def _cutoff(config: RunConfig, index: PackageIndex, root: ReleaseId) -> Optional[int]:
    if config.timestamp in (None, "", "now"):
        return None
    if config.timestamp == "upload":
        return index.record(root).upload_time
    try:
        return parse_timestamp(int(config.timestamp) if config.timestamp.isdigit() else config.timestamp)
    except ValueError as exc:
        raise ConfigError(f"bad --at value {config.timestamp!r}") from exc


def _provenance(index: PackageIndex, matrix) -> dict:
    return {"index": f"sha256:{index.snapshot_hash}", "matrix": matrix.version}


def cmd_resolve(args, config: RunConfig, out) -> int:
    index, _ = _load(config)
    root = _root(index, args)
    graph = resolve(index, root, _cutoff(config, index, root), extras=config.extras)
    text = json.dumps(graph.to_json(), indent=2) + "\n"
    if getattr(args, "output", None):
        try:
            Path(args.output).write_text(text, encoding="utf-8")
        except OSError as exc:
            raise IoFailure(f"cannot write {args.output}: {exc}") from exc
    else:
        out.write(text)
    return EXIT_OK


def cmd_analyze(args, config: RunConfig, out) -> int:
    index, matrix = _load(config)
    root = _root(index, args)
    graph = resolve(index, root, _cutoff(config, index, root), extras=config.extras)
    result = detect(graph, matrix)
    if config.output_format == "json":
        doc = {"release": str(root), "license": str(graph.license_of(root))}
        doc.update(result.to_json())
        out.write(json.dumps(doc, indent=2) + "\n")
        return EXIT_OK
    out.write(f"{root.name} {version_text(root.version)} ({graph.license_of(root)}): "
              f"{result.label.value}\n")
    if result.findings:
        rows = [("Dependency", "License", "Depth", "In-degree", "Out-degree", "Path")]
        for f in result.findings:
            rows.append((f"{f.dependency.name} {version_text(f.dependency.version)}",
                         str(f.dep_license), str(f.depth), str(f.in_degree), str(f.out_degree),
                         " > ".join(n.name for n in f.witness_path)))
        out.write("\n".join(format_table(rows, right=(2, 3, 4))) + "\n")
    for node in result.unknown:
        if node != root:
            out.write(f"unrecognized license: {node.name} {version_text(node.version)}\n")
    return EXIT_OK


def cmd_remediate(args, config: RunConfig, out) -> int:
    index, matrix = _load(config)
    root = _root(index, args)
    migrations = load_migrations(config.migrations_path) if config.migrations_path else ()
    cost_model = CostModel(config.c_migration, config.c_removal)
    provenance = _provenance(index, matrix)
    try:
        result = remediate(index, root, matrix, migrations, n=config.n_plans, m=config.m_licenses,
                           cost_model=cost_model, t=_cutoff(config, index, root),
                           extras=config.extras, timeout_secs=config.solver_timeout_secs,
                           cap=config.universe_cap)
    except SolverTimeout as exc:
        log.error("%s", exc)
        if exc.plans:
            # plans found before the budget ran out are still valid
            out.write(render_report(root, [], exc.plans, config.output_format,
                                    provenance=provenance))
        return EXIT_TIMEOUT
    if not result.needed:
        if config.output_format == "json":
            out.write(json.dumps({"release": str(result.release), "label": result.detection.label.value,
                                  "remediation_needed": False, "warnings": result.warnings,
                                  "provenance": provenance}, indent=2) + "\n")
        else:
            out.write(f"No remediation needed: {root.name} {version_text(root.version)} has no "
                      f"license incompatibilities (label: {result.detection.label.value}).\n")
            for w in result.warnings:
                out.write(f"  - {w}\n")
        return EXIT_OK
    out.write(result.render(config.output_format, provenance))
    return EXIT_OK


def cmd_stats(args, config: RunConfig, out) -> int:
    index, matrix = _load(config)
    report = ecosystem_stats(index, matrix, config.sampling, workers=max(config.workers, 1))
    if config.output_format == "json":
        out.write(json.dumps(report.to_dict(), indent=2) + "\n")
    else:
        out.write(report.to_text())
    return EXIT_OK


COMMANDS = {"resolve": cmd_resolve, "analyze": cmd_analyze,
            "remediate": cmd_remediate, "stats": cmd_stats}


def main(argv: Optional[Sequence[str]] = None, out=None, environ: Optional[dict] = None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s: %(message)s")
    try:
        config = build_config(args, environ)
        return COMMANDS[args.command](args, config, out)
    except (ConfigError, IoFailure, SchemaViolation, UniverseTooLarge) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (UnknownRoot, NotFound) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOT_FOUND
    except NoSolution as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_SOLUTION


if __name__ == "__main__":
    sys.exit(main())
