"""Web pages as resource dependency trees.

A page is a tree of typed, sized resources. Each child records the byte
offset inside its parent at which the reference to it appears, which is
what the simulator uses to decide when the child gets discovered.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from importlib import resources as _pkg_resources
from typing import Any, Mapping, Optional
from urllib.parse import urldefrag

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class Kind(str, Enum):
    HTML = "html"
    CSS = "css"
    SCRIPT = "script"
    IMAGE = "image"
    FONT = "font"
    OTHER = "other"

    @property
    def parses(self) -> bool:
        """Whether resources of this kind are parsed and can reference others."""
        return self in PARSER_KINDS


PARSER_KINDS = frozenset({Kind.HTML, Kind.CSS, Kind.SCRIPT})


class PageFormatError(ValueError):
    """A page document does not follow the page-description schema."""

    def __init__(self, field_path: str, message: str):
        super().__init__(f"{field_path}: {message}")
        self.field = field_path


class PageValidationError(ValueError):
    """A page parsed fine but breaks one of the tree invariants."""

    def __init__(self, violations: list[Violation]):
        super().__init__("; ".join(str(v) for v in violations))
        self.violations = violations


@dataclass(frozen=True)
class Violation:
    code: str
    resource_id: Optional[str] = None
    detail: str = ""

    def __str__(self) -> str:
        where = f" [{self.resource_id}]" if self.resource_id is not None else ""
        extra = f": {self.detail}" if self.detail else ""
        return f"{self.code}{where}{extra}"


@dataclass(frozen=True)
class Resource:
    id: str
    url: str
    kind: Kind
    size_bytes: int
    parent_id: Optional[str] = None
    discovery_offset_bytes: int = 0
    script_async: bool = False

    @property
    def blocks_parser(self) -> bool:
        return self.kind is Kind.SCRIPT and not self.script_async


@dataclass(frozen=True)
class DependencyTree:
    """Immutable page description.

    Construction does not check the invariants; call :func:`validate` (the
    ingest functions do it for you).
    """

    resources: tuple[Resource, ...]
    name: str = "page"
    warnings: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        object.__setattr__(self, "resources", tuple(self.resources))

    @cached_property
    def by_id(self) -> dict[str, Resource]:
        return {r.id: r for r in self.resources}

    @cached_property
    def root_id(self) -> str:
        roots = [r.id for r in self.resources if r.parent_id is None]
        if not roots:
            raise ValueError("page has no root resource")
        return roots[0]

    @property
    def root(self) -> Resource:
        return self.by_id[self.root_id]

    @cached_property
    def _children(self) -> dict[str, tuple[Resource, ...]]:
        index = {r.id: i for i, r in enumerate(self.resources)}
        kids: dict[str, list[Resource]] = {r.id: [] for r in self.resources}
        for r in self.resources:
            if r.parent_id is not None and r.parent_id in kids:
                kids[r.parent_id].append(r)
        # parse order: by offset, then by position in the page description
        return {
            pid: tuple(sorted(cs, key=lambda c: (c.discovery_offset_bytes, index[c.id])))
            for pid, cs in kids.items()
        }

    def children(self, resource_id: str) -> tuple[Resource, ...]:
        """Children of ``resource_id`` in the order a parser meets them."""
        return self._children[resource_id]

    @cached_property
    def depths(self) -> dict[str, int]:
        depth = {self.root_id: 0}
        stack = [self.root_id]
        while stack:
            rid = stack.pop()
            for c in self.children(rid):
                if c.id not in depth:
                    depth[c.id] = depth[rid] + 1
                    stack.append(c.id)
        return depth

    def depth(self, resource_id: str) -> int:
        return self.depths[resource_id]

    def height(self) -> int:
        return max(self.depths.values())

    def total_bytes(self) -> int:
        return sum(r.size_bytes for r in self.resources)

    def depth_bytes(self) -> dict[int, int]:
        out = {d: 0 for d in range(self.height() + 1)}
        for r in self.resources:
            out[self.depths[r.id]] += r.size_bytes
        return out

    def preorder(self) -> list[Resource]:
        """Depth-first walk from the root, children in parse order."""
        out = []
        stack = [self.root]
        while stack:
            r = stack.pop()
            out.append(r)
            stack.extend(reversed(self.children(r.id)))
        return out

    def __len__(self) -> int:
        return len(self.resources)


def height(tree: DependencyTree) -> int:
    return tree.height()


def depth_bytes(tree: DependencyTree) -> dict[int, int]:
    return tree.depth_bytes()


def validate(tree: DependencyTree) -> list[Violation]:
    """Return every invariant violation found in ``tree``; empty means valid."""
    out: list[Violation] = []
    counts = Counter(r.id for r in tree.resources)
    for rid, n in counts.items():
        if n > 1:
            out.append(Violation("duplicate id", rid, f"{n} resources share this id"))
    by_id = {r.id: r for r in tree.resources}

    roots = [r for r in tree.resources if r.parent_id is None]
    if not roots:
        out.append(Violation("no root"))
    elif len(roots) > 1:
        out.append(Violation("multiple roots", None, ", ".join(r.id for r in roots)))
    for r in roots:
        if r.kind is not Kind.HTML:
            out.append(Violation("root not html", r.id, f"kind is {r.kind.value}"))

    for r in tree.resources:
        if r.size_bytes < 0:
            out.append(Violation("negative size", r.id))
        if r.discovery_offset_bytes < 0:
            out.append(Violation("negative offset", r.id))
        if r.parent_id is None:
            continue
        parent = by_id.get(r.parent_id)
        if parent is None:
            out.append(Violation("unknown parent", r.id, repr(r.parent_id)))
            continue
        if r.parent_id == r.id:
            continue  # reported as a cycle below
        if not parent.kind.parses:
            out.append(Violation("non-parser resource has children", parent.id,
                                 f"{parent.kind.value} cannot reference {r.id}"))
        if r.discovery_offset_bytes > parent.size_bytes:
            out.append(Violation("offset exceeds parent size", r.id,
                                 f"{r.discovery_offset_bytes} > {parent.size_bytes}"))

    # walk parent links; anything that loops is a cycle, anything that ends
    # somewhere other than the root is disconnected
    state: dict[str, str] = {}
    cyclic: set[str] = set()
    for start in by_id:
        path = []
        rid: Optional[str] = start
        while rid is not None and rid in by_id and rid not in state:
            state[rid] = "open"
            path.append(rid)
            rid = by_id[rid].parent_id
        if rid is not None and state.get(rid) == "open":
            loop = path[path.index(rid):]
            cyclic.update(loop)
            out.append(Violation("cycle", rid, " -> ".join(loop + [rid])))
        for p in path:
            state[p] = "done"
    if len(roots) == 1:
        reached = set()
        stack = [roots[0].id]
        kids: dict[str, list[str]] = {}
        for r in tree.resources:
            if r.parent_id is not None:
                kids.setdefault(r.parent_id, []).append(r.id)
        while stack:
            rid = stack.pop()
            if rid in reached:
                continue
            reached.add(rid)
            stack.extend(kids.get(rid, []))
        for rid in by_id:
            if rid not in reached and rid not in cyclic:
                out.append(Violation("disconnected", rid))
    return out


def check(tree: DependencyTree) -> DependencyTree:
    """Raise :class:`PageValidationError` unless ``tree`` is valid."""
    problems = validate(tree)
    if problems:
        raise PageValidationError(problems)
    return tree


# -- page-description JSON -------------------------------------------------

_FIELDS = ("id", "url", "kind", "size_bytes", "parent", "discovery_offset_bytes", "async")


def _expect(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise PageFormatError(path, message)


def _is_int(v: Any) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def page_from_dict(doc: Mapping[str, Any]) -> DependencyTree:
    _expect(isinstance(doc, Mapping), "$", "document must be an object")
    _expect(doc.get("version") == SCHEMA_VERSION, "version",
            f"expected {SCHEMA_VERSION}, got {doc.get('version')!r}")
    name = doc.get("name", "page")
    _expect(isinstance(name, str), "name", "must be a string")
    items = doc.get("resources")
    _expect(isinstance(items, list), "resources", "must be a list")

    out = []
    for i, item in enumerate(items):
        at = f"resources[{i}]"
        _expect(isinstance(item, Mapping), at, "must be an object")
        unknown = set(item) - set(_FIELDS)
        _expect(not unknown, f"{at}.{sorted(unknown)[0] if unknown else ''}", "unknown field")
        rid = item.get("id")
        _expect(isinstance(rid, str) and rid != "", f"{at}.id", "must be a non-empty string")
        url = item.get("url")
        _expect(isinstance(url, str), f"{at}.url", "must be a string")
        try:
            kind = Kind(item.get("kind"))
        except ValueError:
            raise PageFormatError(f"{at}.kind", f"unknown kind {item.get('kind')!r}") from None
        size = item.get("size_bytes")
        _expect(_is_int(size) and size >= 0, f"{at}.size_bytes", "must be a non-negative integer")
        parent = item.get("parent")
        _expect(parent is None or isinstance(parent, str), f"{at}.parent", "must be a string or null")
        offset = item.get("discovery_offset_bytes", 0)
        _expect(_is_int(offset) and offset >= 0, f"{at}.discovery_offset_bytes",
                "must be a non-negative integer")
        is_async = item.get("async", False)
        _expect(isinstance(is_async, bool), f"{at}.async", "must be a boolean")
        out.append(Resource(rid, url, kind, size, parent, offset, is_async))
    return check(DependencyTree(tuple(out), name=name))


def ingest_page_json(document: str | bytes) -> DependencyTree:
    """Parse a page-description document; raises on format or invariant errors."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise PageFormatError("$", f"invalid JSON: {exc}") from None
    return page_from_dict(doc)


def page_to_dict(tree: DependencyTree) -> dict[str, Any]:
    return {
        "version": SCHEMA_VERSION,
        "name": tree.name,
        "resources": [
            {
                "id": r.id,
                "url": r.url,
                "kind": r.kind.value,
                "size_bytes": r.size_bytes,
                "parent": r.parent_id,
                "discovery_offset_bytes": r.discovery_offset_bytes,
                "async": r.script_async,
            }
            for r in tree.resources
        ],
    }


def export_page_json(tree: DependencyTree) -> str:
    return json.dumps(page_to_dict(tree), indent=2) + "\n"


def load_page(path) -> DependencyTree:
    """Load a page from a ``.json`` description or a ``.har`` trace."""
    with open(path, "rb") as fh:
        data = fh.read()
    if str(path).lower().endswith(".har"):
        return ingest_har(data)
    return ingest_page_json(data)


FIXTURES = ("p0", "p1", "p2")


def fixture(name: str) -> DependencyTree:
    """One of the three small example pages (p0, p1, p2)."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {', '.join(FIXTURES)}")
    text = _pkg_resources.files("pushsim.fixtures").joinpath(f"{name}.json").read_text()
    return ingest_page_json(text)


# -- HAR ingestion ---------------------------------------------------------

# MIME type -> kind; anything else maps to OTHER
MIME_KINDS: dict[str, Kind] = {
    "text/html": Kind.HTML,
    "application/xhtml+xml": Kind.HTML,
    "text/css": Kind.CSS,
    "application/javascript": Kind.SCRIPT,
    "application/x-javascript": Kind.SCRIPT,
    "application/ecmascript": Kind.SCRIPT,
    "text/javascript": Kind.SCRIPT,
    "text/ecmascript": Kind.SCRIPT,
    "application/font-woff": Kind.FONT,
    "application/font-woff2": Kind.FONT,
    "application/x-font-ttf": Kind.FONT,
    "application/x-font-woff": Kind.FONT,
    "application/vnd.ms-fontobject": Kind.FONT,
}


def kind_for_mime(mime: Optional[str]) -> Kind:
    if not mime:
        return Kind.OTHER
    base = mime.split(";", 1)[0].strip().lower()
    if base in MIME_KINDS:
        return MIME_KINDS[base]
    if base.startswith("image/"):
        return Kind.IMAGE
    if base.startswith("font/"):
        return Kind.FONT
    return Kind.OTHER


class HarError(ValueError):
    pass


def _initiator_url(entry: Mapping[str, Any]) -> Optional[str]:
    init = entry.get("_initiator")
    if not isinstance(init, Mapping):
        return None
    if init.get("url"):
        return init["url"]
    stack = init.get("stack")
    while isinstance(stack, Mapping):
        for frame in stack.get("callFrames") or []:
            if frame.get("url"):
                return frame["url"]
        stack = stack.get("parent")
    return None


def _body_size(entry: Mapping[str, Any]) -> int:
    resp = entry.get("response") or {}
    size = resp.get("bodySize")
    if _is_int(size) and size >= 0:
        return size
    size = (resp.get("content") or {}).get("size")
    if _is_int(size) and size >= 0:
        return size
    return 0


def _strip(url: str) -> str:
    return urldefrag(url)[0]


def ingest_har(har_document: str | bytes) -> DependencyTree:
    """Rebuild a dependency tree from a HAR 1.2 trace with initiator data.

    The first document entry is the root; every other entry hangs under the
    latest earlier entry whose URL matches its initiator. Entries whose
    initiator is missing, unknown or not a parseable resource are attached to
    the root, and each such fallback is listed in ``tree.warnings``.
    """
    try:
        har = json.loads(har_document)
        entries = har["log"]["entries"]
        if not isinstance(entries, list):
            raise TypeError("entries is not a list")
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise HarError(f"unparseable HAR: {exc}") from None

    def entry_kind(e) -> Kind:
        rtype = str(e.get("_resourceType", "")).lower()
        if rtype == "document":
            return Kind.HTML
        return kind_for_mime(((e.get("response") or {}).get("content") or {}).get("mimeType"))

    root_index = next((i for i, e in enumerate(entries) if entry_kind(e) is Kind.HTML), None)
    if root_index is None:
        raise HarError("no root: HAR has no document entry")

    warnings = []
    resources: list[Resource] = []
    seen_url: dict[str, Resource] = {}
    ordered = [root_index] + [i for i in range(len(entries)) if i != root_index]
    for i in ordered:
        e = entries[i]
        try:
            url = e["request"]["url"]
        except (KeyError, TypeError):
            raise HarError(f"unparseable HAR: entry {i} has no request url") from None
        rid = f"e{i}"
        kind = entry_kind(e)
        if i == root_index:
            r = Resource(rid, url, Kind.HTML, _body_size(e))
        else:
            parent = None
            init = _initiator_url(e)
            if init is None:
                warnings.append(f"{rid} ({url}): no initiator, attached to root")
            else:
                parent = seen_url.get(_strip(init))
                if parent is None:
                    warnings.append(f"{rid} ({url}): initiator {init} not found, attached to root")
                elif not parent.kind.parses:
                    warnings.append(f"{rid} ({url}): initiator {init} is a {parent.kind.value},"
                                    " attached to root")
                    parent = None
            pid = parent.id if parent is not None else resources[0].id
            r = Resource(rid, url, kind, _body_size(e), pid, 0)
        resources.append(r)
        seen_url[_strip(url)] = r

    for w in warnings:
        log.info("har ingest: %s", w)
    name = resources[0].url
    return check(DependencyTree(tuple(resources), name=name, warnings=tuple(warnings)))

