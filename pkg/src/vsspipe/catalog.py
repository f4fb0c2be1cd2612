"""VSS catalog loading, flattening and path lookup.

The catalog is read from the nested-object JSON export produced by the VSS
tooling: every node is an object with a ``type`` key and either ``children``
(branches) or ``datatype`` (leaves).
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

BRANCH = "branch"
LEAF_KINDS = ("sensor", "actuator", "attribute")
NODE_KINDS = (BRANCH,) + LEAF_KINDS

SCALAR_TYPES = frozenset(
    {
        "boolean",
        "int8", "int16", "int32", "int64",
        "uint8", "uint16", "uint32", "uint64",
        "float", "double",
        "string",
    }
)

_SEGMENT_RE = re.compile(r"^[^\s,.]+$")


class CatalogError(ValueError):
    """Base class for catalog loading problems."""


class CatalogParseError(CatalogError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class CatalogSchemaError(CatalogError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{path or '<root>'}: {message}")
        self.path = path


class UnknownSignal(KeyError):
    """Raised when a dotted path is not part of the loaded catalog."""

    def __init__(self, path: str, suggestions: Iterable[str] = ()):
        self.path = path
        self.suggestions = tuple(suggestions)
        super().__init__(path)

    def __str__(self) -> str:
        msg = f"unknown signal {self.path!r}"
        if self.suggestions:
            msg += " (did you mean: " + ", ".join(self.suggestions) + ")"
        return msg


@dataclass(frozen=True)
class CatalogNode:
    name: str
    node_kind: str
    datatype: str | None = None
    description: str = ""
    children: tuple["CatalogNode", ...] = ()
    allowed: tuple[str, ...] | None = None


@dataclass(frozen=True)
class SignalEntry:
    path: str
    kind: str
    datatype: str
    description: str = ""
    allowed: tuple[str, ...] | None = None

    @property
    def segments(self) -> list[str]:
        return self.path.split(".")

    @property
    def name(self) -> str:
        return self.path.rsplit(".", 1)[-1]

    def line(self) -> str:
        return f"{self.path}, {self.kind}, {self.datatype}"


@dataclass(frozen=True)
class Catalog:
    root: CatalogNode
    flat: tuple[SignalEntry, ...]
    index: Mapping[str, SignalEntry] = field(repr=False)

    def __len__(self) -> int:
        return len(self.flat)

    def __contains__(self, path: object) -> bool:
        return path in self.index

    def __iter__(self):
        return iter(self.flat)

    def paths(self) -> list[str]:
        return [e.path for e in self.flat]

    def subset(self, paths: Iterable[str]) -> "Catalog":
        """A flat-only catalog restricted to ``paths`` (kept in catalog order)."""
        wanted = set(paths)
        for p in wanted:
            validate_path(self, p)
        return from_entries(e for e in self.flat if e.path in wanted)


def _reject_duplicate_keys(pairs):
    seen = {}
    for key, value in pairs:
        if key in seen:
            raise _DuplicateKey(key)
        seen[key] = value
    return seen


class _DuplicateKey(Exception):
    def __init__(self, key):
        self.key = key


def _build_node(name: str, obj, prefix: str) -> CatalogNode:
    path = f"{prefix}.{name}" if prefix else name
    if not isinstance(obj, dict):
        raise CatalogSchemaError("node must be an object", path)
    if not name or not _SEGMENT_RE.match(name):
        raise CatalogSchemaError(f"invalid segment name {name!r}", path)
    kind = obj.get("type")
    if kind not in NODE_KINDS:
        raise CatalogSchemaError(f"unknown node type {kind!r}", path)
    description = obj.get("description") or ""
    if kind == BRANCH:
        if "datatype" in obj:
            raise CatalogSchemaError("branch must not carry a datatype", path)
        raw_children = obj.get("children", {})
        if not isinstance(raw_children, dict):
            raise CatalogSchemaError("children must be an object", path)
        children = tuple(_build_node(k, v, path) for k, v in raw_children.items())
        return CatalogNode(name, BRANCH, None, description, children)
    if obj.get("children"):
        raise CatalogSchemaError("leaf must not have children", path)
    datatype = obj.get("datatype")
    if not datatype:
        raise CatalogSchemaError("leaf without datatype", path)
    if datatype not in SCALAR_TYPES:
        raise CatalogSchemaError(f"unsupported datatype {datatype!r}", path)
    allowed = obj.get("allowed")
    if allowed is not None:
        if datatype != "string" or not isinstance(allowed, list):
            raise CatalogSchemaError("allowed values require a string datatype", path)
        allowed = tuple(str(a) for a in allowed)
    return CatalogNode(name, kind, datatype, description, (), allowed)


def _walk(node: CatalogNode, prefix: str, out: list[SignalEntry]) -> None:
    path = f"{prefix}.{node.name}" if prefix else node.name
    if node.node_kind == BRANCH:
        for child in node.children:
            _walk(child, path, out)
    else:
        out.append(SignalEntry(path, node.node_kind, node.datatype, node.description, node.allowed))


def from_root(root: CatalogNode) -> Catalog:
    flat: list[SignalEntry] = []
    for child in root.children:
        _walk(child, "", flat)
    index = {e.path: e for e in flat}
    return Catalog(root, tuple(flat), MappingProxyType(index))


def from_entries(entries: Iterable[SignalEntry]) -> Catalog:
    """Catalog built from already-flat entries (the root is synthetic)."""
    flat = tuple(entries)
    index = {}
    for e in flat:
        if e.path in index:
            raise CatalogSchemaError("duplicate path", e.path)
        index[e.path] = e
    root = CatalogNode("", BRANCH)
    return Catalog(root, flat, MappingProxyType(index))


def load_catalog(source: bytes | str) -> Catalog:
    """Parse a VSS JSON export and flatten it depth-first in document order.

    The top-level object maps root names (normally just ``Vehicle``) to
    nodes; it is wrapped into an unnamed synthetic root branch.
    """
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    try:
        doc = json.loads(source, object_pairs_hook=_reject_duplicate_keys)
    except json.JSONDecodeError as exc:
        raise CatalogParseError(exc.msg, exc.lineno, exc.colno) from None
    except _DuplicateKey as exc:
        raise CatalogSchemaError(f"duplicate sibling name {exc.key!r}", exc.key) from None
    if not isinstance(doc, dict):
        raise CatalogSchemaError("top level must be an object", "")
    children = tuple(_build_node(k, v, "") for k, v in doc.items())
    return from_root(CatalogNode("", BRANCH, None, "", children))


def load_catalog_file(path: str | Path) -> Catalog:
    return load_catalog(Path(path).read_bytes())


def flatten_lines(catalog: Catalog) -> str:
    return "\n".join(e.line() for e in catalog.flat)


def parse_lines(text: str) -> list[tuple[str, str, str]]:
    rows = []
    for line in text.splitlines():
        if not line.strip():
            continue
        path, kind, datatype = (part.strip() for part in line.split(",", 2))
        rows.append((path, kind, datatype))
    return rows


def write_delimited(catalog: Catalog, path: str | Path) -> None:
    """Write the flat catalog as a comma-separated file with a header row."""
    lines = ["path,kind,datatype"]
    lines += [f"{e.path},{e.kind},{e.datatype}" for e in catalog.flat]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _edit_distance(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def nearest_paths(catalog: Catalog, path: str, n: int = 3) -> list[str]:
    scored = sorted(catalog.index, key=lambda p: (_edit_distance(path, p), p))
    return scored[:n]


def validate_path(catalog: Catalog, path: str) -> SignalEntry:
    try:
        return catalog.index[path]
    except KeyError:
        raise UnknownSignal(path, nearest_paths(catalog, path)) from None


# Tokenization shared by retrieval, enrichment and the mock backend.

_CAMEL_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|\d+")
_WORD_RE = re.compile(r"[A-Za-z0-9]+")

GENERIC_TOKENS = frozenset({"is", "has", "are", "the", "of", "current", "value", "vehicle"})


def tokenize(text: str) -> list[str]:
    """Lowercased alphanumeric tokens; camel-case and dotted paths are split."""
    tokens = []
    for word in _WORD_RE.findall(text):
        tokens.extend(t.lower() for t in _CAMEL_RE.findall(word))
    return tokens


def signal_phrase(entry: SignalEntry) -> frozenset[str]:
    """Content tokens that must all appear in a text for it to name ``entry``.

    Starts from the leaf name and walks up the path until at least two
    non-generic tokens are collected.
    """
    tokens: set[str] = set()
    for segment in reversed(entry.segments[1:] or entry.segments):
        tokens |= {t for t in tokenize(segment) if t not in GENERIC_TOKENS}
        if len(tokens) >= 2:
            break
    return frozenset(tokens)


def path_tokens(entry: SignalEntry) -> frozenset[str]:
    return frozenset(t for t in tokenize(entry.path) if t not in GENERIC_TOKENS)


PATH_TOKEN_RE = re.compile(r"\bVehicle(?:\.[A-Za-z0-9_]+)+")


def find_paths(text: str) -> list[str]:
    return PATH_TOKEN_RE.findall(text)
