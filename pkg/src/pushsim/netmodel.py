"""Link and connection model: RTT, bandwidth, handshake cost, slow start."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

HANDSHAKE_RTTS = 4  # TCP + TLS, no request piggy-backed
UNBOUNDED = math.inf


@dataclass(frozen=True)
class LinkParams:
    rtt_s: float
    bandwidth_bps: float

    def __post_init__(self):
        for name in ("rtt_s", "bandwidth_bps"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v!r}")

    @classmethod
    def from_ms_mbps(cls, rtt_ms: float, bandwidth_mbps: float) -> LinkParams:
        return cls(rtt_ms / 1000.0, bandwidth_mbps * 1e6)

    @property
    def one_way_s(self) -> float:
        return self.rtt_s / 2


@dataclass(frozen=True)
class CongestionState:
    """Slow-start parameters for a cold connection.

    The window doubles every RTT from ``init_cwnd_segments * mss_bytes`` with
    no loss, capped at ``max_cwnd_bytes``. ``cwnd_bytes`` is the starting
    window and is filled in from the other fields.
    """

    enabled: bool = False
    mss_bytes: int = 1460
    init_cwnd_segments: int = 10
    max_cwnd_bytes: Optional[int] = 16 * 1024 * 1024
    cwnd_bytes: int = field(default=0)

    def __post_init__(self):
        if self.mss_bytes <= 0 or self.init_cwnd_segments <= 0:
            raise ValueError("mss_bytes and init_cwnd_segments must be positive")
        initial = self.init_cwnd_segments * self.mss_bytes
        if self.max_cwnd_bytes is not None and self.max_cwnd_bytes < initial:
            raise ValueError("max_cwnd_bytes is smaller than the initial window")
        if self.cwnd_bytes < initial:
            object.__setattr__(self, "cwnd_bytes", initial)

    @classmethod
    def from_config(cls, cfg: Optional[Mapping[str, Any]]) -> CongestionState:
        if not cfg:
            return cls()
        known = {"enabled", "mss_bytes", "init_cwnd_segments", "max_cwnd_bytes"}
        extra = set(cfg) - known
        if extra:
            raise ValueError(f"unknown slow_start keys: {', '.join(sorted(extra))}")
        return cls(**cfg)


def handshake_time(link: LinkParams) -> float:
    return HANDSHAKE_RTTS * link.rtt_s


def transfer_time(nbytes: int, link: LinkParams) -> float:
    if nbytes == 0:
        return 0.0
    return nbytes * 8 / link.bandwidth_bps


def allowed_inflight(cong: CongestionState, elapsed_rtts: int) -> float:
    """Bytes the sender may have unacknowledged after ``elapsed_rtts`` round trips."""
    if not cong.enabled:
        return UNBOUNDED
    if elapsed_rtts < 0:
        raise ValueError("elapsed_rtts must be non-negative")
    cap = cong.max_cwnd_bytes
    start = cong.cwnd_bytes
    # avoid building huge integers once the cap is reached
    if cap is not None and elapsed_rtts >= 64:
        return cap
    window = start << elapsed_rtts
    return window if cap is None else min(window, cap)
