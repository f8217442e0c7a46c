"""Synthetic pages: parse chains and random trees for sweeps and tests."""

from __future__ import annotations

import math
import random
from typing import Optional, Sequence

from .pagemodel import DependencyTree, Kind, Resource

MB = 1_000_000
_PARSERS = (Kind.CSS, Kind.SCRIPT, Kind.HTML)
_LEAVES = (Kind.IMAGE, Kind.FONT, Kind.OTHER, Kind.CSS, Kind.SCRIPT)


def chain_page(
    height: int,
    sizes: int | Sequence[int] = 1024,
    offsets: str | Sequence[int] = "end",
    name: Optional[str] = None,
) -> DependencyTree:
    """html -> css -> script -> css ... one resource per level.

    ``offsets="end"`` puts each reference at the very end of its parent;
    a sequence gives the offset of each child explicitly.
    """
    if height < 0:
        raise ValueError("height must be non-negative")
    if isinstance(sizes, int):
        sizes = [sizes] * (height + 1)
    if len(sizes) != height + 1:
        raise ValueError("need one size per level")
    out = [Resource("r0", "/chain/r0.html", Kind.HTML, sizes[0])]
    for d in range(1, height + 1):
        kind = Kind.CSS if d % 2 else Kind.SCRIPT
        parent = out[-1]
        off = parent.size_bytes if offsets == "end" else offsets[d - 1]
        ext = "css" if kind is Kind.CSS else "js"
        out.append(Resource(f"r{d}", f"/chain/r{d}.{ext}", kind, sizes[d], parent.id, off))
    return DependencyTree(tuple(out), name=name or f"chain-h{height}")


def random_page(
    rng: random.Random,
    height: Optional[int] = None,
    max_height: int = 6,
    max_size: int = MB,
    max_extra: int = 12,
    name: str = "random",
) -> DependencyTree:
    """Random valid page of the given (or a random) height.

    Sizes are drawn log-uniformly up to ``max_size`` with the odd empty
    resource; offsets land anywhere in the parent, including both ends.
    """
    if height is None:
        height = rng.randint(0, max_height)

    def size() -> int:
        roll = rng.random()
        if roll < 0.05:
            return 0
        return int(round(10 ** rng.uniform(0, math.log10(max(max_size, 1)))))

    def offset(parent: Resource) -> int:
        roll = rng.random()
        if roll < 0.25:
            return parent.size_bytes
        if roll < 0.4:
            return 0
        return rng.randint(0, parent.size_bytes)

    res: list[Resource] = [Resource("r0", "/r0.html", Kind.HTML, size())]
    depth = {"r0": 0}
    parent = res[0]
    for d in range(1, height + 1):
        # spine node; must be parseable unless it is the deepest
        kind = rng.choice(_PARSERS) if d < height else rng.choice(_LEAVES)
        r = _make(len(res), kind, size(), parent, offset(parent), rng)
        res.append(r)
        depth[r.id] = d
        parent = r
    for _ in range(rng.randint(0, max_extra)):
        parents = [r for r in res if r.kind in _PARSERS and depth[r.id] < height]
        if not parents:
            break
        p = rng.choice(parents)
        kind = rng.choice(_PARSERS + _LEAVES) if depth[p.id] + 1 < height else rng.choice(_LEAVES)
        r = _make(len(res), kind, size(), p, offset(p), rng)
        res.append(r)
        depth[r.id] = depth[p.id] + 1
    return DependencyTree(tuple(res), name=name)


def _make(i: int, kind: Kind, size: int, parent: Resource, off: int, rng: random.Random) -> Resource:
    return Resource(
        f"r{i}", f"/r{i}.{kind.value}", kind, size, parent.id, off,
        script_async=kind is Kind.SCRIPT and rng.random() < 0.3,
    )


def chain_corpus(n: int, heights: Sequence[int] = (1, 2, 3, 4, 5), seed: int = 0,
                 max_size: int = 2048) -> list[DependencyTree]:
    """``n`` chain pages cycling through ``heights`` with small random sizes."""
    rng = random.Random(seed)
    pages = []
    for i in range(n):
        h = heights[i % len(heights)]
        sizes = [rng.randint(1, max_size) for _ in range(h + 1)]
        pages.append(chain_page(h, sizes, name=f"chain{i:03d}-h{h}"))
    return pages
