"""Text and JSON rendering of remediation results."""

from __future__ import annotations

import json
import string
from typing import Iterable, Optional, Sequence

from ..model import ReleaseId
from .problem import version_text
from .solver import ChangeLicense, Migrate, Pin, RemediationPlan, Remove, join_alternatives


def _provenance_line(provenance: Optional[dict]) -> list[str]:
    if not provenance:
        return []
    parts = [f"{k} {v}" for k, v in provenance.items() if v]
    return ["", "-- " + "; ".join(parts)] if parts else []


def _letters(i: int) -> str:
    letters = string.ascii_lowercase
    out = ""
    i += 1
    while i:
        i, r = divmod(i - 1, 26)
        out = letters[r] + out
    return out


def render_text(release: ReleaseId, licenses: Sequence[str], plans: Sequence[RemediationPlan],
                warnings: Iterable[str] = (), provenance: Optional[dict] = None) -> str:
    warnings = list(warnings)
    title = f"{release.name} {version_text(release.version)}"
    if not licenses and not plans:
        lines = [f"No remediation found for {title}."]
    else:
        lines = [f"Possible Remediations for {title}:"]
        items: list[list[str]] = []
        if licenses:
            items.append([ChangeLicense(tuple(licenses)).describe()])
        for plan in plans:
            items.append([a.describe() for a in plan.actions])
        for number, texts in enumerate(items, start=1):
            last_item = number == len(items)
            if len(texts) == 1:
                lines.append(f"{number}. {texts[0]}{'.' if last_item else ';'}")
                continue
            lead = "Make" if number == 1 else "Or make"
            lines.append(f"{number}. {lead} the following dependency changes:")
            for i, text in enumerate(texts):
                end = "." if i == len(texts) - 1 else ";"
                lines.append(f"    {_letters(i)}) {text}{end}")
    if warnings:
        lines.append("")
        lines.append("Warnings:")
        lines.extend(f"  - {w}" for w in warnings)
    lines.extend(_provenance_line(provenance))
    return "\n".join(lines) + "\n"


def _action_json(action, depths: dict[str, int]) -> dict:
    if isinstance(action, Migrate):
        return {"kind": "migrate", "package": action.source, "target": action.target,
                "version": version_text(action.to_version), "depth": depths.get(action.source)}
    if isinstance(action, Remove):
        return {"kind": "remove", "package": action.pkg, "depth": depths.get(action.pkg)}
    if isinstance(action, Pin):
        return {"kind": "pin", "package": action.pkg, "version": version_text(action.version),
                "depth": depths.get(action.pkg)}
    raise TypeError(action)


def render_json(release: ReleaseId, licenses: Sequence[str], plans: Sequence[RemediationPlan],
                warnings: Iterable[str] = (), provenance: Optional[dict] = None,
                baseline_depths: Optional[dict[str, int]] = None) -> str:
    depths = baseline_depths or {}
    doc = {
        "release": {"name": release.name, "version": version_text(release.version)},
        "licenses": list(licenses),
        "plans": [{
            "cost": plan.total_cost,
            "actions": [_action_json(a, depths) for a in plan.actions],
            "resulting_graph": [str(n) for n in plan.resulting_graph.nodes],
        } for plan in plans],
        "warnings": list(warnings),
        "provenance": provenance or {},
    }
    return json.dumps(doc, indent=2) + "\n"


def render_report(release: ReleaseId, licenses: Sequence[str], plans: Sequence[RemediationPlan],
                  format: str = "text", **kwargs) -> str:
    if format == "json":
        return render_json(release, licenses, plans, **kwargs)
    if format == "text":
        kwargs.pop("baseline_depths", None)
        return render_text(release, licenses, plans, **kwargs)
    raise ValueError(f"unknown report format {format!r}")
