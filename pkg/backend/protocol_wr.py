"""Sampling with replacement over s independently weighted logical streams.

The coordinator keeps the minimum-weight element of every logical stream and
beta, the largest of those minima. A site forwards a logical element when its
weight is below the site's view beta_j and learns the current beta from the
reply, so a single exchange tightens its filter for all logical streams.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

from models import EmptySampleError, ProtocolViolation
from protocol_wor import Reply, Upstream
from sampling_core import THRESHOLD_ONE, Weight, WeightedElement, assign_weight

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class WrSiteState:
    site_id: int
    beta: Weight = THRESHOLD_ONE  # beta_j, local view of beta


@dataclass
class WrCoordinatorState:
    minima: List[Optional[WeightedElement]] = field(default_factory=list)  # slot i-1 holds logical stream i
    beta: Weight = THRESHOLD_ONE

    @property
    def s(self) -> int:
        return len(self.minima)

    def slot_weight(self, logical_index: int) -> Weight:
        held = self.minima[logical_index - 1]
        return THRESHOLD_ONE if held is None else held.weight


def wr_site_init(site_id: int) -> WrSiteState:
    return WrSiteState(site_id=site_id)


def wr_coord_init(s: int) -> WrCoordinatorState:
    if s < 1:
        raise ValueError("sample size must be at least 1")
    return WrCoordinatorState(minima=[None] * s)


def wr_site_on_element(
    state: WrSiteState,
    element: int,
    seed: int,
    s: int,
    weights: Optional[Sequence[Weight]] = None,
) -> Tuple[WrSiteState, List[Upstream]]:
    """Upstreams for every logical copy of the element whose weight beats beta_j.

    Weights are drawn with assign_weight(seed, element, i) for i in 1..s
    unless precomputed ones are passed in.
    """
    if weights is None:
        weights = [assign_weight(seed, element, i) for i in range(1, s + 1)]
    upstreams = [
        Upstream(
            site=state.site_id,
            payload=WeightedElement(element=element, weight=w, origin_site=state.site_id, logical_index=i),
        )
        for i, w in enumerate(weights, start=1)
        if w < state.beta
    ]
    return state, upstreams


def wr_site_on_reply(state: WrSiteState, beta: Weight) -> WrSiteState:
    if state.beta < beta:
        raise ProtocolViolation(f"site {state.site_id} told to raise beta from {state.beta.value} to {beta.value}")
    return replace(state, beta=beta)


def wr_coord_on_upstream(coord: WrCoordinatorState, msg: Upstream) -> Tuple[WrCoordinatorState, Reply]:
    """Replace the slot's minimum if beaten, recompute beta, reply with it"""
    item = msg.payload
    index = item.logical_index
    if index is None or not 1 <= index <= coord.s:
        raise ProtocolViolation(f"logical index {index} outside 1..{coord.s}")
    if item.weight < coord.slot_weight(index):
        coord.minima[index - 1] = item
        coord.beta = max(coord.slot_weight(i) for i in range(1, coord.s + 1))
    return coord, Reply(site=msg.site, threshold=coord.beta)


def wr_exchange(
    state: WrSiteState,
    coord: WrCoordinatorState,
    element: int,
    weights: Sequence[Weight],
) -> Tuple[WrSiteState, List[Tuple[Upstream, Reply]]]:
    """One arrival end to end: logical copies are offered in index order.

    Each reply lowers beta_j before the next copy is considered, so a copy
    that beat beta_j at arrival time may no longer be sent.
    """
    exchanged = []
    state, planned = wr_site_on_element(state, element, seed=0, s=len(weights), weights=weights)
    for msg in planned:
        if not msg.payload.weight < state.beta:
            continue
        coord, reply = wr_coord_on_upstream(coord, msg)
        state = wr_site_on_reply(state, reply.threshold)
        exchanged.append((msg, reply))
    return state, exchanged


def wr_query(coord: WrCoordinatorState) -> List[int]:
    """Element held by each logical stream, slot order; repetitions allowed"""
    if any(held is None for held in coord.minima):
        raise EmptySampleError("no element has been observed yet")
    return [held.element for held in coord.minima]
