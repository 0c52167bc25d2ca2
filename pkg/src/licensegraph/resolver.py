"""Time-aware dependency resolution.

The resolver walks requirements breadth-first and picks, for every package,
the newest release uploaded by the cutoff that satisfies the first requirement
seen for it. Later requirements never change an earlier choice: conflicts are
recorded, not backtracked.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .errors import NodeNotInGraph, UnknownRoot
from .index import PackageIndex, format_timestamp, parse_timestamp, releases_at
from .licensing import LicenseInfo
from .model import ReleaseId, Requirement, parse_requirement

CONFLICT_IGNORED = "conflict-ignored"
UNSATISFIABLE = "unsatisfiable"


@dataclass(frozen=True)
class Unresolved:
    requirer: ReleaseId
    requirement: Requirement
    reason: str

    def to_json(self) -> dict:
        return {"requirer": str(self.requirer), "requirement": str(self.requirement),
                "reason": self.reason}


@dataclass(frozen=True)
class GraphMetrics:
    depth: int
    in_degree: int
    out_degree: int


@dataclass(frozen=True)
class DependencyGraph:
    """A rooted graph of resolved releases; ``nodes`` keeps discovery order."""

    root: ReleaseId
    nodes: tuple[ReleaseId, ...]
    edges: Mapping[ReleaseId, tuple[ReleaseId, ...]]
    resolved_at: Optional[int] = None
    unresolved: tuple[Unresolved, ...] = ()
    licenses: Mapping[ReleaseId, LicenseInfo] = field(default_factory=dict)

    def __contains__(self, node: ReleaseId) -> bool:
        return node in self._node_set

    @property
    def _node_set(self) -> frozenset[ReleaseId]:
        cached = self.__dict__.get("_nodes_cache")
        if cached is None:
            cached = frozenset(self.nodes)
            object.__setattr__(self, "_nodes_cache", cached)
        return cached

    @property
    def dependencies(self) -> tuple[ReleaseId, ...]:
        return self.nodes[1:]

    def version_of(self, name: str):
        for node in self.nodes:
            if node.name == name:
                return node.version
        return None

    def by_name(self) -> dict[str, ReleaseId]:
        return {n.name: n for n in self.nodes}

    def license_of(self, node: ReleaseId) -> LicenseInfo:
        return self.licenses.get(node, LicenseInfo())

    def edge_list(self) -> list[tuple[ReleaseId, ReleaseId]]:
        return [(src, dst) for src in self.nodes for dst in self.edges.get(src, ())]

    def shortest_paths(self) -> dict[ReleaseId, tuple[ReleaseId, ...]]:
        """BFS paths from the root; the first discovered parent wins."""
        paths = {self.root: (self.root,)}
        queue = deque([self.root])
        while queue:
            node = queue.popleft()
            for child in self.edges.get(node, ()):
                if child not in paths:
                    paths[child] = paths[node] + (child,)
                    queue.append(child)
        return paths

    def depths(self) -> dict[ReleaseId, int]:
        return {n: len(p) - 1 for n, p in self.shortest_paths().items()}

    def to_json(self) -> dict:
        return {
            "root": str(self.root),
            "resolved_at": format_timestamp(self.resolved_at) if self.resolved_at is not None else None,
            "nodes": [{"name": n.name, "version": n.version.raw or str(n.version),
                       "license": str(self.license_of(n))} for n in self.nodes],
            "edges": [[str(a), str(b)] for a, b in self.edge_list()],
            "unresolved": [u.to_json() for u in self.unresolved],
        }

    @classmethod
    def from_json(cls, doc: Mapping) -> "DependencyGraph":
        nodes = []
        licenses = {}
        for entry in doc["nodes"]:
            rid = ReleaseId.parse(f"{entry['name']}=={entry['version']}")
            nodes.append(rid)
            licenses[rid] = LicenseInfo.from_text(entry.get("license"))
        edges: dict[ReleaseId, list[ReleaseId]] = {}
        for a, b in doc.get("edges", []):
            edges.setdefault(ReleaseId.parse(a), []).append(ReleaseId.parse(b))
        unresolved = tuple(
            Unresolved(ReleaseId.parse(u["requirer"]), parse_requirement(u["requirement"]), u["reason"])
            for u in doc.get("unresolved", []))
        at = doc.get("resolved_at")
        return cls(ReleaseId.parse(doc["root"]), tuple(nodes),
                   {k: tuple(v) for k, v in edges.items()},
                   parse_timestamp(at) if at else None, unresolved, licenses)


def resolve(index: PackageIndex, root: ReleaseId, t: Optional[int] = None,
            env: Optional[Mapping[str, str]] = None, extras: Iterable[str] = ()) -> DependencyGraph:
    """Resolve the dependency graph of ``root`` as of time ``t`` (None: no cutoff).

    ``extras`` only applies to the root's own requirements; optional
    dependencies further down are never pulled in.
    """
    root_record = index.record(root)
    if root_record is None:
        raise UnknownRoot(f"{root} is not in the index")
    root = root_record.id
    extras = tuple(extras)

    chosen: dict[str, ReleaseId] = {root.name: root}
    records = {root: root_record}
    order = [root]
    edges: dict[ReleaseId, list[ReleaseId]] = {}
    unresolved: list[Unresolved] = []
    queue = deque([root])
    while queue:
        node = queue.popleft()
        active_extras = extras if node == root else ()
        out = edges.setdefault(node, [])
        for req in records[node].requires_dist:
            if not req.is_active(env, active_extras):
                continue
            if req.name in chosen:
                target = chosen[req.name]
                if target not in out:
                    out.append(target)
                if not req.matches(target.version, allow_prerelease=True):
                    unresolved.append(Unresolved(node, req, CONFLICT_IGNORED))
                continue
            pick = None
            for candidate in reversed(releases_at(index, req.name, t)):
                if req.matches(candidate.version):
                    pick = candidate
                    break
            if pick is None:
                unresolved.append(Unresolved(node, req, UNSATISFIABLE))
                continue
            chosen[req.name] = pick.id
            records[pick.id] = pick
            order.append(pick.id)
            out.append(pick.id)
            queue.append(pick.id)

    return DependencyGraph(
        root=root,
        nodes=tuple(order),
        edges={n: tuple(edges.get(n, ())) for n in order},
        resolved_at=t,
        unresolved=tuple(unresolved),
        licenses={n: records[n].license for n in order},
    )


def graph_metrics(g: DependencyGraph, node: ReleaseId) -> GraphMetrics:
    if node not in g:
        raise NodeNotInGraph(f"{node} is not in the graph of {g.root}")
    depth = g.depths().get(node)
    if depth is None:
        raise NodeNotInGraph(f"{node} is not reachable from {g.root}")
    in_degree = sum(1 for src in g.nodes if node in g.edges.get(src, ()))
    return GraphMetrics(depth, in_degree, len(g.edges.get(node, ())))
