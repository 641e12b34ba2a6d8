"""Sampling without replacement: site and coordinator state machines.

Variant A is the deployed protocol: a site forwards an element only when its
weight is below the site's threshold u_i, and learns the coordinator's u
from the reply. Variant B additionally broadcasts u to every site whenever
u has dropped by a factor r since the last broadcast; it exists to bound
variant A's message count.
"""

import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Tuple, Union

from models import ProtocolViolation, Variant
from sampling_core import THRESHOLD_ONE, SampleSet, Weight, WeightedElement

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class Upstream:
    """Site -> coordinator report of (element, weight)"""
    site: int
    payload: WeightedElement

    def cost(self, k: int) -> int:
        return 1


@dataclass(frozen=True, slots=True)
class Reply:
    """Coordinator -> site answer carrying the current threshold"""
    site: int
    threshold: Weight

    def cost(self, k: int) -> int:
        return 1


@dataclass(frozen=True, slots=True)
class Broadcast:
    """Coordinator -> all sites threshold push; one message per site"""
    threshold: Weight

    def cost(self, k: int) -> int:
        return k


Message = Union[Upstream, Reply, Broadcast]


@dataclass(frozen=True, slots=True)
class SiteState:
    site_id: int
    threshold: Weight = THRESHOLD_ONE  # u_i, this site's view of the s-th smallest weight


@dataclass
class CoordinatorState:
    sample: SampleSet
    threshold: Weight = THRESHOLD_ONE  # u
    variant: Variant = Variant.A
    r: float = 2.0
    epoch_floor: Weight = THRESHOLD_ONE  # u at the last epoch start (variant B)

    @property
    def s(self) -> int:
        return self.sample.capacity


def site_init(site_id: int) -> SiteState:
    return SiteState(site_id=site_id)


def site_on_element(state: SiteState, item: WeightedElement) -> Tuple[SiteState, Optional[Upstream]]:
    """Forward the element iff its weight is strictly below u_i"""
    if item.origin_site != state.site_id:
        raise ProtocolViolation(f"site {state.site_id} handed an element observed at site {item.origin_site}")
    if item.weight < state.threshold:
        return state, Upstream(site=state.site_id, payload=item)
    return state, None


def _lower_threshold(state: SiteState, threshold: Weight) -> SiteState:
    if state.threshold < threshold:
        raise ProtocolViolation(
            f"site {state.site_id} told to raise its threshold from {state.threshold.value} to {threshold.value}"
        )
    return replace(state, threshold=threshold)


def site_on_reply(state: SiteState, threshold: Weight) -> SiteState:
    return _lower_threshold(state, threshold)


def site_on_broadcast(state: SiteState, threshold: Weight) -> SiteState:
    return _lower_threshold(state, threshold)


def coord_init(s: int, variant: Variant = Variant.A, r: float = 2.0) -> CoordinatorState:
    return CoordinatorState(sample=SampleSet(s), variant=Variant(variant), r=r)


def coord_on_upstream(coord: CoordinatorState, msg: Upstream) -> Tuple[CoordinatorState, Reply]:
    """Insert the reported element if it beats u, then reply with u.

    u only moves on an eviction, so it stays 1 until more than s elements
    have reached the coordinator. The coordinator is updated in place.
    """
    item = msg.payload
    if item.weight < coord.threshold:
        evicted = coord.sample.insert(item)
        if evicted is not None:
            coord.threshold = coord.sample.max_weight
    return coord, Reply(site=msg.site, threshold=coord.threshold)


def coord_query(coord: CoordinatorState) -> List[WeightedElement]:
    return coord.sample.entries()


def epoch_boundary_reached(threshold: float, floor: float, r: float) -> bool:
    """True once the threshold value has fallen to floor / r or below"""
    return threshold <= floor / r


def coord_epoch_tick(coord: CoordinatorState) -> Optional[Broadcast]:
    """Variant B: broadcast u when it has dropped by a factor r since the last epoch start"""
    if coord.variant is not Variant.B:
        raise ProtocolViolation("epoch broadcasts exist only in variant B")
    if not epoch_boundary_reached(coord.threshold.value, coord.epoch_floor.value, coord.r):
        return None
    logger.debug("epoch boundary: u=%.6g floor=%.6g r=%s", coord.threshold.value, coord.epoch_floor.value, coord.r)
    coord.epoch_floor = coord.threshold
    return Broadcast(threshold=coord.threshold)
