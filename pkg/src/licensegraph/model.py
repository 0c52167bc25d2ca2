"""Value types for package names, versions and requirements.

Versions follow PEP 440 ordering; requirements follow the subset of PEP 508
that appears in ``requires_dist`` metadata (no URL or editable references).
Everything here is immutable and safe to share between threads.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Union

from .errors import MalformedRequirement, MalformedVersion

__all__ = [
    "normalize_name",
    "VersionKey",
    "parse_version",
    "Specifier",
    "parse_specifiers",
    "constraint_matches",
    "Marker",
    "parse_marker",
    "Requirement",
    "parse_requirement",
    "ReleaseId",
    "DEFAULT_ENVIRONMENT",
]

_NAME_SEPARATORS = re.compile(r"[-_.]+")
_VALID_NAME = re.compile(r"^[a-z0-9]([a-z0-9._-]*[a-z0-9])?$", re.IGNORECASE)


def normalize_name(raw: str) -> str:
    """Lowercase ``raw`` and collapse runs of ``-``, ``_`` and ``.`` into ``-``."""
    name = raw.strip()
    if not name or not _VALID_NAME.match(name):
        raise ValueError(f"invalid package name: {raw!r}")
    return _NAME_SEPARATORS.sub("-", name).lower()


# ---------------------------------------------------------------------------
# Versions

_VERSION_PATTERN = re.compile(
    r"""
    ^\s*v?
    (?:(?P<epoch>[0-9]+)!)?
    (?P<release>[0-9]+(?:\.[0-9]+)*)
    (?P<pre>
        [-_.]?
        (?P<pre_l>alpha|a|beta|b|preview|pre|c|rc)
        [-_.]?
        (?P<pre_n>[0-9]+)?
    )?
    (?P<post>
        (?:-(?P<post_n1>[0-9]+))
        |
        (?:
            [-_.]?
            (?P<post_l>post|rev|r)
            [-_.]?
            (?P<post_n2>[0-9]+)?
        )
    )?
    (?P<dev>
        [-_.]?
        (?P<dev_l>dev)
        [-_.]?
        (?P<dev_n>[0-9]+)?
    )?
    (?:\+(?P<local>[a-z0-9]+(?:[-_.][a-z0-9]+)*))?
    \s*$
    """,
    re.VERBOSE | re.IGNORECASE,
)

_PRE_TAGS = {"a": "a", "alpha": "a", "b": "b", "beta": "b",
             "c": "rc", "rc": "rc", "pre": "rc", "preview": "rc"}

# Sentinels for the comparison key. Tuples of (rank, payload) keep every
# component comparable without resorting to float infinities.
_NEG = (0,)
_POS = (2,)


def _strip_zeros(release: tuple[int, ...]) -> tuple[int, ...]:
    end = len(release)
    while end > 1 and release[end - 1] == 0:
        end -= 1
    return release[:end]


@functools.total_ordering
@dataclass(frozen=True, eq=False)
class VersionKey:
    """A parsed PEP 440 version. Equality and ordering ignore ``raw``."""

    epoch: int
    release: tuple[int, ...]
    pre: Optional[tuple[str, int]] = None
    post: Optional[int] = None
    dev: Optional[int] = None
    local: Optional[tuple[Union[int, str], ...]] = None
    raw: str = field(default="", compare=False)

    @functools.cached_property
    def _key(self) -> tuple:
        if self.pre is None and self.post is None and self.dev is not None:
            pre: tuple = _NEG
        elif self.pre is None:
            pre = _POS
        else:
            pre = (1, self.pre)
        post = _NEG if self.post is None else (1, self.post)
        dev = _POS if self.dev is None else (1, self.dev)
        if self.local is None:
            local: tuple = _NEG
        else:
            # numeric segments sort above alphanumeric ones
            local = (1, tuple((1, seg, "") if isinstance(seg, int) else (0, 0, seg)
                              for seg in self.local))
        return (self.epoch, _strip_zeros(self.release), pre, post, dev, local)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, VersionKey):
            return NotImplemented
        return self._key == other._key

    def __lt__(self, other: "VersionKey") -> bool:
        if not isinstance(other, VersionKey):
            return NotImplemented
        return self._key < other._key

    def __hash__(self) -> int:
        return hash(self._key)

    @property
    def is_prerelease(self) -> bool:
        return self.pre is not None or self.dev is not None

    @property
    def is_postrelease(self) -> bool:
        return self.post is not None

    @property
    def public(self) -> "VersionKey":
        """This version with the local segment dropped."""
        if self.local is None:
            return self
        return VersionKey(self.epoch, self.release, self.pre, self.post, self.dev, None,
                          raw=self.raw.split("+", 1)[0])

    @property
    def base(self) -> "VersionKey":
        return VersionKey(self.epoch, self.release, raw=self.raw)

    def __str__(self) -> str:
        parts = []
        if self.epoch:
            parts.append(f"{self.epoch}!")
        parts.append(".".join(str(x) for x in self.release))
        if self.pre is not None:
            parts.append(f"{self.pre[0]}{self.pre[1]}")
        if self.post is not None:
            parts.append(f".post{self.post}")
        if self.dev is not None:
            parts.append(f".dev{self.dev}")
        if self.local is not None:
            parts.append("+" + ".".join(str(x) for x in self.local))
        return "".join(parts)

    def __repr__(self) -> str:
        return f"VersionKey({str(self)!r})"


@functools.lru_cache(maxsize=65536)
def parse_version(raw: str) -> VersionKey:
    """Parse a PEP 440 version string.

    Raises MalformedVersion when the string does not match the grammar.
    """
    if not isinstance(raw, str):
        raise MalformedVersion(f"not a string: {raw!r}")
    match = _VERSION_PATTERN.match(raw)
    if match is None:
        raise MalformedVersion(f"invalid version: {raw!r}")
    g = match.groupdict()
    pre = None
    if g["pre_l"]:
        pre = (_PRE_TAGS[g["pre_l"].lower()], int(g["pre_n"] or 0))
    post = None
    if g["post"]:
        post = int(g["post_n1"] or g["post_n2"] or 0)
    dev = None
    if g["dev"]:
        dev = int(g["dev_n"] or 0)
    local = None
    if g["local"]:
        local = tuple(int(seg) if seg.isdigit() else seg.lower()
                      for seg in re.split(r"[-_.]", g["local"]))
    return VersionKey(
        epoch=int(g["epoch"] or 0),
        release=tuple(int(x) for x in g["release"].split(".")),
        pre=pre,
        post=post,
        dev=dev,
        local=local,
        raw=raw.strip(),
    )


# ---------------------------------------------------------------------------
# Specifiers

OPERATORS = ("===", "~=", "==", "!=", "<=", ">=", "<", ">")
_SPECIFIER = re.compile(r"^\s*(===|~=|==|!=|<=|>=|<|>)\s*(\S(?:.*\S)?)\s*$")


@dataclass(frozen=True)
class Specifier:
    """One ``(operator, version)`` clause of a version constraint.

    ``version`` is None only for ``===``, which compares ``text`` verbatim.
    """

    operator: str
    text: str
    version: Optional[VersionKey] = field(default=None, compare=False)
    wildcard: bool = False

    def __post_init__(self) -> None:
        if self.operator not in OPERATORS:
            raise MalformedRequirement(f"unsupported operator {self.operator!r}")

    @classmethod
    def parse(cls, raw: str) -> "Specifier":
        match = _SPECIFIER.match(raw)
        if match is None:
            raise MalformedRequirement(f"invalid specifier: {raw!r}")
        op, text = match.groups()
        if op == "===":
            return cls(op, text)
        wildcard = text.endswith(".*")
        if wildcard and op not in ("==", "!="):
            raise MalformedRequirement(f"wildcard not allowed with {op}: {raw!r}")
        try:
            version = parse_version(text[:-2] if wildcard else text)
        except MalformedVersion as exc:
            raise MalformedRequirement(str(exc)) from exc
        if op == "~=" and len(version.release) < 2:
            raise MalformedRequirement(f"~= needs two release segments: {raw!r}")
        if wildcard and (version.local is not None or version.dev is not None):
            raise MalformedRequirement(f"invalid wildcard version: {raw!r}")
        if version.local is not None and op not in ("==", "!="):
            raise MalformedRequirement(f"local version not allowed with {op}: {raw!r}")
        canonical = str(version) + (".*" if wildcard else "")
        return cls(op, canonical, version, wildcard)

    @property
    def names_prerelease(self) -> bool:
        if self.operator == "!=" or self.version is None:
            return False
        return self.version.is_prerelease

    def expand(self) -> tuple["Specifier", ...]:
        """``~=X.Y`` becomes ``>=X.Y, ==X.*``; everything else is returned as is."""
        if self.operator != "~=":
            return (self,)
        assert self.version is not None
        prefix = VersionKey(self.version.epoch, self.version.release[:-1])
        return (Specifier(">=", str(self.version), self.version),
                Specifier("==", str(prefix) + ".*", prefix, wildcard=True))

    def contains(self, v: VersionKey) -> bool:
        op = self.operator
        if op == "===":
            return v.raw.lower() == self.text.lower() or str(v).lower() == self.text.lower()
        if op == "~=":
            return all(s.contains(v) for s in self.expand())
        target = self.version
        assert target is not None
        if op in ("==", "!="):
            if self.wildcard:
                equal = _prefix_match(v, target)
            elif target.local is None:
                equal = v.public == target
            else:
                equal = v == target
            return equal if op == "==" else not equal
        candidate = v.public
        if op == "<=":
            return candidate <= target
        if op == ">=":
            return candidate >= target
        if op == "<":
            if not candidate < target:
                return False
            if not target.is_prerelease and candidate.is_prerelease:
                return candidate.base != target.base
            return True
        # op == ">"
        if not candidate > target:
            return False
        if not target.is_postrelease and candidate.is_postrelease:
            if candidate.base == target.base:
                return False
        return True

    def __str__(self) -> str:
        return f"{self.operator}{self.text}"


def _prefix_match(v: VersionKey, prefix: VersionKey) -> bool:
    if v.epoch != prefix.epoch:
        return False
    want = prefix.release
    have = v.release + (0,) * max(0, len(want) - len(v.release))
    if have[: len(want)] != want:
        return False
    if prefix.pre is not None:
        return v.pre == prefix.pre
    if prefix.post is not None:
        return v.post == prefix.post and v.pre is None
    return True


def parse_specifiers(raw: str) -> tuple[Specifier, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(Specifier.parse(part) for part in raw.split(","))


def constraint_matches(v: VersionKey, specifiers: Iterable[Specifier],
                       allow_prerelease: bool = False) -> bool:
    """True iff ``v`` satisfies every specifier.

    Pre-releases only match when ``allow_prerelease`` is set or a specifier
    explicitly names a pre-release version.
    """
    specifiers = tuple(specifiers)
    if v.is_prerelease and not allow_prerelease:
        if not any(s.names_prerelease for s in specifiers):
            return False
    return all(s.contains(v) for s in specifiers)


# ---------------------------------------------------------------------------
# Environment markers

MARKER_VARIABLES = ("python_version", "python_full_version", "sys_platform", "os_name",
                    "platform_system", "platform_machine", "platform_python_implementation",
                    "implementation_name", "platform_release", "platform_version",
                    "implementation_version", "extra")
DEFAULT_ENVIRONMENT: Mapping[str, str] = {
    "python_version": "3.10",
    "python_full_version": "3.10.0",
    "sys_platform": "linux",
    "os_name": "posix",
    "platform_system": "Linux",
    "platform_machine": "x86_64",
    "platform_python_implementation": "CPython",
    "implementation_name": "cpython",
}
_MARKER_OPS = ("===", "==", "!=", "<=", ">=", "~=", "<", ">", "not in", "in")
_MARKER_TOKEN = re.compile(
    r"""\s*(?:
        (?P<lparen>\()|(?P<rparen>\))
        |(?P<string>'[^']*'|"[^"]*")
        |(?P<op>===|==|!=|<=|>=|~=|<|>|not\s+in\b|in\b)
        |(?P<bool>and\b|or\b)
        |(?P<var>[a-z_][a-z0-9_.]*)
    )""",
    re.VERBOSE | re.IGNORECASE,
)


@dataclass(frozen=True)
class Marker:
    """Parsed environment marker kept as a small expression tree.

    Nodes are ``("and", l, r)``, ``("or", l, r)`` or ``("cmp", lhs, op, rhs)``
    where each operand is ``("var", name)`` or ``("str", value)``.
    """

    tree: tuple

    def __str__(self) -> str:
        return _render_marker(self.tree, top=True)

    def variables(self) -> set[str]:
        found: set[str] = set()

        def walk(node: tuple) -> None:
            if node[0] == "cmp":
                for operand in (node[1], node[3]):
                    if operand[0] == "var":
                        found.add(operand[1])
            else:
                walk(node[1])
                walk(node[2])

        walk(self.tree)
        return found

    def evaluate(self, env: Optional[Mapping[str, str]] = None,
                 extras: Iterable[str] = ()) -> bool:
        """Evaluate under ``env``. ``extra`` is true when any active extra satisfies it."""
        values = dict(DEFAULT_ENVIRONMENT)
        if env:
            values.update(env)
        candidates = sorted({normalize_extra(e) for e in extras}) or [""]
        for extra in candidates:
            values["extra"] = extra
            if _eval_marker(self.tree, values):
                return True
        return False


def normalize_extra(raw: str) -> str:
    return _NAME_SEPARATORS.sub("-", raw.strip()).lower()


def _render_marker(node: tuple, top: bool = False) -> str:
    if node[0] == "cmp":
        return f"{_render_operand(node[1])} {node[2]} {_render_operand(node[3])}"
    left, right = node[1], node[2]
    text = f"{_render_marker(left)} {node[0]} {_render_marker(right)}"
    return text if top else f"({text})"


def _render_operand(operand: tuple) -> str:
    if operand[0] == "var":
        return operand[1]
    value = operand[1]
    return f'"{value}"' if "'" in value else f"'{value}'"


def _tokenize_marker(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        match = _MARKER_TOKEN.match(text, pos)
        if match is None or match.end() == pos:
            raise MalformedRequirement(f"invalid marker near {text[pos:]!r}")
        kind = match.lastgroup
        value = match.group(kind)
        if kind == "op":
            value = re.sub(r"\s+", " ", value.lower())
        tokens.append((kind, value))
        pos = match.end()
    return tokens


class _MarkerParser:
    def __init__(self, text: str) -> None:
        self.tokens = _tokenize_marker(text)
        self.pos = 0

    def peek(self) -> Optional[tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self, kind: str) -> str:
        tok = self.peek()
        if tok is None or tok[0] != kind:
            raise MalformedRequirement(f"expected {kind} in marker, got {tok!r}")
        self.pos += 1
        return tok[1]

    def parse(self) -> tuple:
        node = self.parse_or()
        if self.peek() is not None:
            raise MalformedRequirement(f"trailing tokens in marker: {self.tokens[self.pos:]!r}")
        return node

    def parse_or(self) -> tuple:
        node = self.parse_and()
        while self.peek() and self.peek()[0] == "bool" and self.peek()[1].lower() == "or":
            self.pos += 1
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self) -> tuple:
        node = self.parse_atom()
        while self.peek() and self.peek()[0] == "bool" and self.peek()[1].lower() == "and":
            self.pos += 1
            node = ("and", node, self.parse_atom())
        return node

    def parse_atom(self) -> tuple:
        tok = self.peek()
        if tok is None:
            raise MalformedRequirement("unexpected end of marker")
        if tok[0] == "lparen":
            self.pos += 1
            node = self.parse_or()
            self.take("rparen")
            return node
        lhs = self.parse_operand()
        op = self.take("op")
        rhs = self.parse_operand()
        if lhs[0] == rhs[0] == "str":
            raise MalformedRequirement("marker compares two literals")
        return ("cmp", lhs, op, rhs)

    def parse_operand(self) -> tuple:
        tok = self.peek()
        if tok is None:
            raise MalformedRequirement("unexpected end of marker")
        self.pos += 1
        if tok[0] == "string":
            return ("str", tok[1][1:-1])
        if tok[0] == "var":
            name = tok[1].lower().replace(".", "_")
            if name not in MARKER_VARIABLES:
                raise MalformedRequirement(f"unknown marker variable {tok[1]!r}")
            return ("var", name)
        raise MalformedRequirement(f"unexpected token {tok[1]!r} in marker")


def parse_marker(text: str) -> Marker:
    return Marker(_MarkerParser(text).parse())


def _eval_marker(node: tuple, values: Mapping[str, str]) -> bool:
    kind = node[0]
    if kind == "and":
        return _eval_marker(node[1], values) and _eval_marker(node[2], values)
    if kind == "or":
        return _eval_marker(node[1], values) or _eval_marker(node[2], values)
    _, lhs, op, rhs = node
    is_extra = "extra" in (lhs[1] if lhs[0] == "var" else "", rhs[1] if rhs[0] == "var" else "")
    left = values.get(lhs[1], "") if lhs[0] == "var" else lhs[1]
    right = values.get(rhs[1], "") if rhs[0] == "var" else rhs[1]
    if is_extra:
        left, right = normalize_extra(left) if left else "", normalize_extra(right) if right else ""
    if op == "in":
        return left in right
    if op == "not in":
        return left not in right
    if op not in ("==", "!=", "===") or _looks_like_version(left, right):
        try:
            spec = Specifier.parse(f"{op}{right}")
            return spec.contains(parse_version(left))
        except (MalformedRequirement, MalformedVersion):
            pass
    if op in ("==", "==="):
        return left == right
    if op == "!=":
        return left != right
    return False


def _looks_like_version(left: str, right: str) -> bool:
    return bool(re.match(r"^\d", left)) and bool(re.match(r"^\d", right))


# ---------------------------------------------------------------------------
# Requirements

_REQUIREMENT = re.compile(
    r"""^\s*
    (?P<name>[A-Za-z0-9](?:[A-Za-z0-9._-]*[A-Za-z0-9])?)
    \s*
    (?:\[(?P<extras>[^\]]*)\])?
    \s*
    (?P<spec>\(?[^;@()]*\)?)
    \s*
    (?:;(?P<marker>.*))?
    $""",
    re.VERBOSE,
)


@dataclass(frozen=True)
class Requirement:
    name: str
    extras: frozenset[str] = frozenset()
    specifiers: tuple[Specifier, ...] = ()
    marker: Optional[Marker] = None

    def is_active(self, env: Optional[Mapping[str, str]] = None,
                  extras: Iterable[str] = ()) -> bool:
        return self.marker is None or self.marker.evaluate(env, extras)

    def matches(self, v: VersionKey, allow_prerelease: bool = False) -> bool:
        return constraint_matches(v, self.specifiers, allow_prerelease)

    @property
    def specifier_text(self) -> str:
        return ",".join(str(s) for s in self.specifiers)

    def __str__(self) -> str:
        text = self.name
        if self.extras:
            text += "[" + ",".join(sorted(self.extras)) + "]"
        text += self.specifier_text
        if self.marker is not None:
            text += f"; {self.marker}"
        return text


@functools.lru_cache(maxsize=65536)
def parse_requirement(raw: str) -> Requirement:
    """Parse one ``requires_dist`` line.

    >>> str(parse_requirement("Patool ; extra == 'utils'"))
    "patool; extra == 'utils'"
    """
    if "@" in raw.split(";", 1)[0]:
        raise MalformedRequirement(f"URL requirements are not supported: {raw!r}")
    match = _REQUIREMENT.match(raw)
    if match is None:
        raise MalformedRequirement(f"invalid requirement: {raw!r}")
    try:
        name = normalize_name(match["name"])
    except ValueError as exc:
        raise MalformedRequirement(str(exc)) from exc
    extras = frozenset()
    if match["extras"] is not None:
        parts = [p.strip() for p in match["extras"].split(",") if p.strip()]
        if any(not _VALID_NAME.match(p) for p in parts):
            raise MalformedRequirement(f"invalid extras in {raw!r}")
        extras = frozenset(normalize_extra(p) for p in parts)
    spec_text = match["spec"].strip()
    if spec_text.startswith("(") != spec_text.endswith(")"):
        raise MalformedRequirement(f"unbalanced parentheses in {raw!r}")
    spec_text = spec_text.strip("()")
    specifiers = parse_specifiers(spec_text)
    marker = None
    if match["marker"] is not None:
        if not match["marker"].strip():
            raise MalformedRequirement(f"empty marker in {raw!r}")
        marker = parse_marker(match["marker"])
    return Requirement(name, extras, specifiers, marker)


def merge_requirements(first: Requirement, second: Requirement) -> Requirement:
    """Combine two requirements on the same package by specifier conjunction."""
    if first.name != second.name:
        raise ValueError("cannot merge requirements on different packages")
    specs = first.specifiers + tuple(s for s in second.specifiers if s not in first.specifiers)
    if first.marker is None or second.marker is None:
        marker = None
    elif first.marker == second.marker:
        marker = first.marker
    else:
        marker = Marker(("or", first.marker.tree, second.marker.tree))
    return Requirement(first.name, first.extras | second.extras, specs, marker)


@functools.total_ordering
@dataclass(frozen=True)
class ReleaseId:
    name: str
    version: VersionKey

    def __str__(self) -> str:
        return f"{self.name}=={self.version.raw or self.version}"

    def __lt__(self, other: "ReleaseId") -> bool:
        return (self.name, self.version) < (other.name, other.version)

    @classmethod
    def parse(cls, text: str) -> "ReleaseId":
        name, sep, version = text.partition("==")
        if not sep:
            raise ValueError(f"expected name==version, got {text!r}")
        return cls(normalize_name(name), parse_version(version))
