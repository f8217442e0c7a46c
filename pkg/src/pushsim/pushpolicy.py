"""Push manifests and bloom-filter cache digests.

Manifests list every non-root resource, stylesheets first, everything else
after, each group in the order a plain (no push) load would request it.

Cache digests are bloom filters over URLs. Bit positions come from the
double-hashing construction ``(h1 + i*h2) mod m`` over two 64-bit XXH64
hashes of the UTF-8 URL (seeds 0 and 1), so a digest built here matches
one built by any other XXH64 implementation bit for bit.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable

import xxhash

from .netmodel import LinkParams
from .pagemodel import DependencyTree, Kind
from .simulator import Mode, PushManifest, SimConfig, simulate

DIGEST_VERSION = 1
_HEADER = struct.Struct(">BIQ")  # version, k, m
_REFERENCE_LINK = LinkParams(0.1, 100e6)


def request_order(page: DependencyTree, link: LinkParams = _REFERENCE_LINK) -> list[str]:
    """Non-root ids in the order a pull-mode load discovers them."""
    res = simulate(page, SimConfig(Mode.PULL, link))
    found = [tr for rid, tr in res.transfers.items() if rid != page.root_id]
    order = {r.id: i for i, r in enumerate(page.preorder())}
    found.sort(key=lambda tr: (tr.discovered_s, order[tr.resource_id]))
    return [tr.resource_id for tr in found]


def build_manifest(page: DependencyTree, link: LinkParams = _REFERENCE_LINK) -> PushManifest:
    ids = request_order(page, link)
    css = [rid for rid in ids if page.by_id[rid].kind is Kind.CSS]
    rest = [rid for rid in ids if page.by_id[rid].kind is not Kind.CSS]
    return PushManifest(tuple(css + rest))


def discovery_manifest(page: DependencyTree, link: LinkParams = _REFERENCE_LINK) -> PushManifest:
    """Manifest in plain request order, without moving stylesheets up."""
    return PushManifest(tuple(request_order(page, link)))


def _positions(url: str, k: int, m: int) -> list[int]:
    data = url.encode("utf-8")
    h1 = xxhash.xxh64_intdigest(data, seed=0)
    h2 = xxhash.xxh64_intdigest(data, seed=1)
    return [(h1 + i * h2) % m for i in range(k)]


@dataclass
class CacheDigest:
    m: int
    k: int
    bits: bytearray = field(default=None, repr=False)
    n: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("hash count k must be at least 1")
        if self.m < 8:
            raise ValueError("bit array size m must be at least 8")
        if self.bits is None:
            self.bits = bytearray((self.m + 7) // 8)
        elif len(self.bits) != (self.m + 7) // 8:
            raise ValueError("bit array length does not match m")

    @classmethod
    def for_capacity(cls, n_expected: int, target_fpr: float) -> CacheDigest:
        m, k = recommended_digest_size(n_expected, target_fpr)
        return cls(max(m, 8), k)

    def add(self, url: str) -> None:
        for p in _positions(url, self.k, self.m):
            self.bits[p >> 3] |= 0x80 >> (p & 7)
        self.n += 1

    def __contains__(self, url: str) -> bool:
        bits = self.bits
        return all(bits[p >> 3] & (0x80 >> (p & 7)) for p in _positions(url, self.k, self.m))

    def update(self, urls: Iterable[str]) -> CacheDigest:
        for u in urls:
            self.add(u)
        return self

    def expected_fpr(self) -> float:
        return (1 - math.exp(-self.k * self.n / self.m)) ** self.k

    def to_bytes(self) -> bytes:
        return _HEADER.pack(DIGEST_VERSION, self.k, self.m) + bytes(self.bits)

    @classmethod
    def from_bytes(cls, blob: bytes) -> CacheDigest:
        if len(blob) < _HEADER.size:
            raise ValueError("digest too short")
        version, k, m = _HEADER.unpack_from(blob)
        if version != DIGEST_VERSION:
            raise ValueError(f"unsupported digest version {version}")
        body = blob[_HEADER.size:]
        if len(body) != (m + 7) // 8:
            raise ValueError("digest body length does not match m")
        return cls(m, k, bytearray(body))


def digest_insert(digest: CacheDigest, url: str) -> CacheDigest:
    digest.add(url)
    return digest


def digest_query(digest: CacheDigest, url: str) -> bool:
    return url in digest


def filter_manifest(manifest: PushManifest, page: DependencyTree, digest: CacheDigest) -> PushManifest:
    """Drop every resource whose URL the client reports as cached."""
    return PushManifest(tuple(rid for rid in manifest if page.by_id[rid].url not in digest))


def recommended_digest_size(n_expected: int, target_fpr: float) -> tuple[int, int]:
    """Optimal (m bits, k hashes) for ``n_expected`` keys at ``target_fpr``."""
    if n_expected <= 0:
        raise ValueError("n_expected must be positive")
    if not 0 < target_fpr < 1:
        raise ValueError("target_fpr must be in (0, 1)")
    m = math.ceil(-n_expected * math.log(target_fpr) / math.log(2) ** 2)
    k = max(1, round(m / n_expected * math.log(2)))
    return m, k
