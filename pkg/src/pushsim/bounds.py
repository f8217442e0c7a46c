"""Closed-form load-time and push-benefit bounds.

* :func:`plt_lower_bound`: handshake plus serialization of every byte.
* :func:`spr_upper_bound_loose`: at most one RTT bubble per tree level.
* :func:`spr_upper_bound_tight`: per-level bubble shrunk by whatever data
  is still draining when that level's dependency is discovered.
"""

from __future__ import annotations

from dataclasses import dataclass

from .netmodel import LinkParams, handshake_time, transfer_time
from .pagemodel import DependencyTree
from .simulator import DiscoverySchedule, Mode, SimConfig, simulate, trace_discovery_schedule


@dataclass(frozen=True)
class DepthTerm:
    depth: int
    rsize_bytes: int
    term_s: float


@dataclass(frozen=True)
class TightBoundBreakdown:
    per_depth_terms: tuple[DepthTerm, ...]
    total_s: float


def plt_lower_bound(tree: DependencyTree, link: LinkParams) -> float:
    return handshake_time(link) + transfer_time(tree.total_bytes(), link)


def spr_upper_bound_loose(tree: DependencyTree, link: LinkParams) -> float:
    return link.rtt_s * tree.height()


def spr_upper_bound_tight(
    tree: DependencyTree, link: LinkParams, discovery_model: DiscoverySchedule
) -> TightBoundBreakdown:
    terms = []
    for d in range(1, tree.height() + 1):
        if d not in discovery_model:
            raise ValueError(f"discovery schedule has no entry for depth {d}")
        rsize = discovery_model[d].rsize_bytes
        term = max(link.rtt_s - transfer_time(rsize, link), 0.0)
        terms.append(DepthTerm(d, rsize, term))
    return TightBoundBreakdown(tuple(terms), sum((t.term_s for t in terms), 0.0))


def tight_bound_from_simulation(
    tree: DependencyTree, link: LinkParams, rule: str = "masking", **sim_options
) -> TightBoundBreakdown:
    """Run the pull load needed for the discovery schedule and evaluate the bound."""
    pull = simulate(tree, SimConfig(Mode.PULL, link, **sim_options))
    return spr_upper_bound_tight(tree, link, trace_discovery_schedule(pull, tree, rule))
