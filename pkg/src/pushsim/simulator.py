"""Deterministic discrete-event simulation of a single page load.

One client, one server, one HTTP/2 connection. The server owns a single
FIFO send queue drained at the link bandwidth; one-way latency is RTT/2
in each direction. Parsing is instantaneous, so the only costs are
handshake, propagation and serialization.

Timeline conventions: ``bubble_start``/``bubble_end`` and ``push_promised``
events carry server-side times, every other event is stamped with the time
the client observes it.
"""

from __future__ import annotations

import heapq
import json
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

from .netmodel import CongestionState, LinkParams, allowed_inflight, handshake_time
from .pagemodel import DependencyTree, Resource, check

EPS = 1e-9


class SimulationError(ValueError):
    pass


class Mode(str, Enum):
    PULL = "pull"
    PUSH = "push"
    OPTIMAL = "optimal"


class EventKind(str, Enum):
    # declaration order is the tiebreak order for simultaneous events
    HANDSHAKE_DONE = "handshake_done"
    REQUEST_SENT = "request_sent"
    FIRST_BYTE = "first_byte"
    LAST_BYTE = "last_byte"
    DEPENDENCY_DISCOVERED = "dependency_discovered"
    PARSE_BLOCKED = "parse_blocked"
    PARSE_RESUMED = "parse_resumed"
    PUSH_PROMISED = "push_promised"
    BUBBLE_START = "bubble_start"
    BUBBLE_END = "bubble_end"


_KIND_RANK = {k: i for i, k in enumerate(EventKind)}


@dataclass(frozen=True)
class SimEvent:
    time_s: float
    kind: EventKind
    resource_id: Optional[str] = None

    def sort_key(self):
        return (self.time_s, _KIND_RANK[self.kind], self.resource_id or "")

    def to_dict(self) -> dict:
        return {"time_s": self.time_s, "kind": self.kind.value, "resource_id": self.resource_id}


@dataclass(frozen=True)
class PushManifest:
    """Ordered ids of the resources the server pushes after the root."""

    resource_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "resource_ids", tuple(self.resource_ids))
        if len(set(self.resource_ids)) != len(self.resource_ids):
            raise ValueError("push manifest contains duplicates")

    def __iter__(self):
        return iter(self.resource_ids)

    def __len__(self):
        return len(self.resource_ids)

    def check_against(self, page: DependencyTree) -> None:
        for rid in self.resource_ids:
            if rid not in page.by_id:
                raise SimulationError(f"manifest names unknown resource {rid!r}")
            if rid == page.root_id:
                raise SimulationError("manifest must not contain the root")


@dataclass(frozen=True)
class SimConfig:
    mode: Mode
    link: LinkParams
    congestion: CongestionState = field(default_factory=CongestionState)
    push_order: Optional[PushManifest] = None
    parse_instantaneous: bool = True
    # a non-async script halts discovery of later siblings until it arrives;
    # off by default, browsers keep scanning past blocking scripts
    script_blocking: bool = False
    # allow a push manifest that omits resources; omitted ones are pulled
    partial_push: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.parse_instantaneous:
            raise ValueError("only instantaneous parsing is supported")
        if self.mode is Mode.PUSH and self.push_order is None:
            raise ValueError("push mode needs a push_order manifest")


@dataclass
class Transfer:
    """Per-resource record of one simulated load."""

    resource_id: str
    size_bytes: int
    depth: int
    discovered_s: Optional[float] = None
    request_s: Optional[float] = None  # client send time; None when pushed
    server_arrival_s: Optional[float] = None  # joined the server send queue
    first_byte_s: Optional[float] = None
    last_byte_s: Optional[float] = None
    segments: list[tuple[float, float, int]] = field(default_factory=list)  # server send spans

    def sent_by(self, t: float) -> float:
        """Bytes the server had put on the wire by server time ``t``."""
        total = 0.0
        for start, end, n in self.segments:
            if end <= t:
                total += n
            elif start < t:
                total += n * (t - start) / (end - start)
        return total


@dataclass
class SimResult:
    mode: Mode
    link: LinkParams
    plt_s: float
    events: list[SimEvent]
    bubble_total_s: float
    bytes_transferred: int
    bubbles: list[tuple[float, float]]
    transfers: dict[str, Transfer]
    data_start_s: float  # server time the root request arrived

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict()) + "\n" for e in self.events)


# internal action codes; the numeric value orders same-time actions, with
# the send decision last so every arrival at an instant is queued first
_REACH, _DONE, _REQ_ARRIVE, _KICK = range(4)


class _Load:
    def __init__(self, page: DependencyTree, cfg: SimConfig):
        self.page = page
        self.cfg = cfg
        self.link = cfg.link
        self.half = cfg.link.one_way_s
        self.bps = cfg.link.bandwidth_bps
        self.cong = cfg.congestion
        self.events: list[SimEvent] = []
        self.heap: list = []
        self.seq = 0

        if cfg.mode is Mode.OPTIMAL:
            root = page.root
            single = Resource(root.id, root.url, root.kind, page.total_bytes())
            self.resources = {root.id: single}
            self.children = {root.id: ()}
            depths = {root.id: 0}
        else:
            self.resources = dict(page.by_id)
            self.children = {rid: page.children(rid) for rid in self.resources}
            depths = page.depths
        self.root_id = page.root_id
        self.transfers = {
            rid: Transfer(rid, r.size_bytes, depths[rid]) for rid, r in self.resources.items()
        }
        self.total = sum(r.size_bytes for r in self.resources.values())

        self.pushed: set[str] = set()
        if cfg.mode is Mode.PUSH:
            manifest = cfg.push_order
            manifest.check_against(page)
            self.pushed = set(manifest)
            missing = [r for r in self.resources if r != self.root_id and r not in self.pushed]
            if missing and not cfg.partial_push:
                raise SimulationError(f"push manifest is missing {', '.join(sorted(missing))}")

        # server side
        self.queue: deque[str] = deque()
        self.remaining = {rid: r.size_bytes for rid, r in self.resources.items()}
        self.sent_so_far = {rid: 0 for rid in self.resources}
        self.sent_total = 0
        self.unfinished = len(self.resources)  # resources not fully sent
        self.busy_until = -math.inf
        self.acks: deque[tuple[float, int]] = deque()
        self.inflight = 0
        self.data_start: Optional[float] = None
        self.idle_since: Optional[float] = None
        self.bubbles: list[tuple[float, float]] = []
        self.kick_pending: set[float] = set()

        # client side
        self.reached: set[str] = set()
        self.done: set[str] = set()
        self.cursor = {rid: 0 for rid in self.resources}
        self.blocked_on: dict[str, str] = {}

    # -- plumbing ----------------------------------------------------------

    def emit(self, t: float, kind: EventKind, rid: Optional[str] = None) -> None:
        self.events.append(SimEvent(t, kind, rid))

    def at(self, t: float, action: int, arg=None) -> None:
        self.seq += 1
        heapq.heappush(self.heap, (t, action, self.seq, arg))

    def kick(self, t: float) -> None:
        if t not in self.kick_pending:
            self.kick_pending.add(t)
            self.at(t, _KICK)

    # -- run ---------------------------------------------------------------

    def run(self) -> SimResult:
        rtt = self.link.rtt_s
        t_hs = handshake_time(self.link)
        self.emit(t_hs, EventKind.HANDSHAKE_DONE)
        root = self.transfers[self.root_id]
        root.discovered_s = 0.0
        root.request_s = t_hs
        self.emit(t_hs, EventKind.REQUEST_SENT, self.root_id)
        self.at(t_hs + self.half, _REQ_ARRIVE, self.root_id)

        while self.heap:
            t, action, _, arg = heapq.heappop(self.heap)
            if action == _REACH:
                self.on_reach(t, arg)
            elif action == _DONE:
                self.on_done(t, arg)
            elif action == _REQ_ARRIVE:
                self.on_request(t, arg)
            else:
                self.kick_pending.discard(t)
                self.try_send(t)

        undelivered = [rid for rid, tr in self.transfers.items() if tr.last_byte_s is None]
        if undelivered:
            raise SimulationError(f"resource never delivered: {', '.join(sorted(undelivered))}")

        self.events.sort(key=SimEvent.sort_key)
        plt = max(tr.last_byte_s for tr in self.transfers.values())
        return SimResult(
            mode=self.cfg.mode,
            link=self.link,
            plt_s=plt,
            events=self.events,
            bubble_total_s=sum((b - a for a, b in self.bubbles), 0.0),
            bytes_transferred=self.sent_total,
            bubbles=self.bubbles,
            transfers=self.transfers,
            data_start_s=self.data_start,
        )

    # -- server ------------------------------------------------------------

    def on_request(self, t: float, rid: str) -> None:
        if rid == self.root_id:
            self.data_start = t
            self.enqueue(t, rid)
            if self.cfg.mode is Mode.PUSH:
                for pid in self.cfg.push_order:
                    self.emit(t, EventKind.PUSH_PROMISED, pid)
                    self.enqueue(t, pid)
        else:
            self.enqueue(t, rid)
        self.kick(t)

    def enqueue(self, t: float, rid: str) -> None:
        self.transfers[rid].server_arrival_s = t
        self.queue.append(rid)

    def window_wait(self, t: float) -> Optional[float]:
        """Bytes allowed right now, or None; schedules a retry when blocked."""
        rtt = self.link.rtt_s
        while self.acks and self.acks[0][0] <= t:
            self.inflight -= self.acks.popleft()[1]
        elapsed = int(math.floor((t - self.data_start) / rtt + EPS))
        avail = allowed_inflight(self.cong, elapsed) - self.inflight
        if avail > 0:
            return avail
        retry = self.data_start + (elapsed + 1) * rtt
        if self.acks:
            retry = min(retry, self.acks[0][0])
        self.kick(retry)
        return None

    def try_send(self, t: float) -> None:
        if t < self.busy_until:
            return
        if not self.queue:
            if self.data_start is not None and self.unfinished and self.idle_since is None:
                self.idle_since = t
            return
        rid = self.queue[0]
        chunk = self.remaining[rid]
        if self.cong.enabled and chunk > 0:
            avail = self.window_wait(t)
            if avail is None:
                return
            chunk = int(min(chunk, self.cong.mss_bytes, avail))

        if self.idle_since is not None:
            if t > self.idle_since:
                self.bubbles.append((self.idle_since, t))
                self.emit(self.idle_since, EventKind.BUBBLE_START)
                self.emit(t, EventKind.BUBBLE_END)
            self.idle_since = None

        end = t + chunk * 8 / self.bps
        tr = self.transfers[rid]
        before = self.sent_so_far[rid]
        after = before + chunk
        tr.segments.append((t, end, chunk))
        self.sent_so_far[rid] = after
        self.remaining[rid] -= chunk
        self.sent_total += chunk
        if before == 0:
            tr.first_byte_s = t + self.half
            self.emit(tr.first_byte_s, EventKind.FIRST_BYTE, rid)
        for c in self.children[rid]:
            o = c.discovery_offset_bytes
            if before < o <= after or (o == 0 and before == 0):
                self.at(t + (o - before) * 8 / self.bps + self.half, _REACH, c.id)
        if self.remaining[rid] == 0:
            self.queue.popleft()
            self.unfinished -= 1
            self.at(end + self.half, _DONE, rid)
        if self.cong.enabled and chunk > 0:
            self.acks.append((end + self.link.rtt_s, chunk))
            self.inflight += chunk
        self.busy_until = end
        self.kick(end)

    # -- client ------------------------------------------------------------

    def on_reach(self, t: float, rid: str) -> None:
        self.reached.add(rid)
        self.advance(t, self.resources[rid].parent_id)

    def on_done(self, t: float, rid: str) -> None:
        tr = self.transfers[rid]
        tr.last_byte_s = t
        self.done.add(rid)
        self.emit(t, EventKind.LAST_BYTE, rid)
        parent = self.resources[rid].parent_id
        if parent is not None and self.blocked_on.get(parent) == rid:
            del self.blocked_on[parent]
            self.emit(t, EventKind.PARSE_RESUMED, parent)
            self.advance(t, parent)

    def advance(self, t: float, pid: str) -> None:
        """Discover every child of ``pid`` the parser can now get to."""
        kids = self.children[pid]
        i = self.cursor[pid]
        while i < len(kids) and pid not in self.blocked_on:
            c = kids[i]
            if c.id not in self.reached:
                break
            i += 1
            self.discover(t, c)
            if self.cfg.script_blocking and c.blocks_parser and c.id not in self.done:
                self.blocked_on[pid] = c.id
                self.emit(t, EventKind.PARSE_BLOCKED, pid)
        self.cursor[pid] = i

    def discover(self, t: float, c: Resource) -> None:
        tr = self.transfers[c.id]
        tr.discovered_s = t
        self.emit(t, EventKind.DEPENDENCY_DISCOVERED, c.id)
        if c.id in self.pushed:
            return
        tr.request_s = t
        self.emit(t, EventKind.REQUEST_SENT, c.id)
        self.at(t + self.half, _REQ_ARRIVE, c.id)


def simulate(page: DependencyTree, config: SimConfig) -> SimResult:
    """Simulate one load of ``page`` under ``config``."""
    check(page)
    return _Load(page, config).run()


def spr(
    page: DependencyTree,
    link: LinkParams,
    congestion: Optional[CongestionState] = None,
    manifest: Optional[PushManifest] = None,
    **options,
) -> float:
    """Server push reduction: pull PLT minus push PLT for the same link."""
    congestion = congestion or CongestionState()
    if manifest is None:
        from .pushpolicy import build_manifest

        manifest = build_manifest(page)
    pull = simulate(page, SimConfig(Mode.PULL, link, congestion, **options))
    push = simulate(page, SimConfig(Mode.PUSH, link, congestion, manifest, **options))
    return pull.plt_s - push.plt_s


# -- discovery schedule (input to the masking-aware bound) ------------------

@dataclass(frozen=True)
class DiscoveryEntry:
    depth: int
    time_s: float
    resource_id: str
    rsize_bytes: int


@dataclass(frozen=True)
class DiscoverySchedule:
    entries: dict[int, DiscoveryEntry]
    rule: str = "masking"

    def __getitem__(self, depth: int) -> DiscoveryEntry:
        return self.entries[depth]

    def __contains__(self, depth: int) -> bool:
        return depth in self.entries


DISCOVERY_RULES = ("masking", "first")


def pending_bytes(result: SimResult, page: DependencyTree, t: float, below_depth: int) -> int:
    """Bytes of resources shallower than ``below_depth`` still queued at the
    server when a byte leaving at server time ``t - RTT/2`` reaches the client
    at ``t``, counting only requests that had already reached the server."""
    sigma = t - result.link.one_way_s
    total = 0.0
    for tr in result.transfers.values():
        if tr.depth >= below_depth or tr.server_arrival_s is None:
            continue
        if tr.server_arrival_s <= sigma:
            total += tr.size_bytes - tr.sent_by(sigma)
    return max(0, int(math.floor(total + 1e-6)))


def trace_discovery_schedule(
    pull_result: SimResult, page: DependencyTree, rule: str = "masking"
) -> DiscoverySchedule:
    """Per-depth discovery instants and still-to-transfer bytes from a trace.

    ``rule="first"`` keeps the first discovery at each depth. ``"masking"``
    (default) keeps, for each depth, the discovery with the least data
    already in the pipe to hide its request round trip, which is what makes
    the resulting bound hold for pages whose same-depth discoveries are
    spread out over time.
    """
    if rule not in DISCOVERY_RULES:
        raise ValueError(f"unknown rule {rule!r}")
    found: dict[int, list[DiscoveryEntry]] = {}
    for tr in pull_result.transfers.values():
        if tr.depth == 0 or tr.discovered_s is None:
            continue
        rsize = pending_bytes(pull_result, page, tr.discovered_s, tr.depth)
        found.setdefault(tr.depth, []).append(
            DiscoveryEntry(tr.depth, tr.discovered_s, tr.resource_id, rsize))
    entries = {}
    for depth, cands in found.items():
        if rule == "first":
            key = lambda e: (e.time_s, e.resource_id)
        else:
            key = lambda e: (e.rsize_bytes, e.time_s, e.resource_id)
        entries[depth] = min(cands, key=key)
    return DiscoverySchedule(dict(sorted(entries.items())), rule)


def read_jsonl(lines: Iterable[str]) -> list[SimEvent]:
    out = []
    for line in lines:
        if line.strip():
            d = json.loads(line)
            out.append(SimEvent(d["time_s"], EventKind(d["kind"]), d.get("resource_id")))
    return out
