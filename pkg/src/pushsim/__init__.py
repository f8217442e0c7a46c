"""Simulate and bound the page load time savings of HTTP/2 server push."""

from .bounds import (
    TightBoundBreakdown,
    plt_lower_bound,
    spr_upper_bound_loose,
    spr_upper_bound_tight,
    tight_bound_from_simulation,
)
from .netmodel import CongestionState, LinkParams, allowed_inflight, handshake_time, transfer_time
from .pagemodel import (
    DependencyTree,
    Kind,
    Resource,
    export_page_json,
    fixture,
    ingest_har,
    ingest_page_json,
    validate,
)
from .pushpolicy import CacheDigest, build_manifest, filter_manifest, recommended_digest_size
from .simulator import (
    DiscoverySchedule,
    Mode,
    PushManifest,
    SimConfig,
    SimResult,
    simulate,
    spr,
    trace_discovery_schedule,
)

__version__ = "0.1.0"
