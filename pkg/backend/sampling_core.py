"""Weights, the bounded minimum-weight sample, and brute-force selection oracles.

Weights are derived in counter mode: the weight of (seed, element, logical
index) is a SplitMix64 hash of the triple, so any protocol variant, any
process and any replay sees the same value for the same element.
"""

import heapq
import logging
from dataclasses import dataclass
from typing import Iterable, List, NewType, Optional, Sequence, Tuple

import numpy as np

from models import ProtocolViolation

logger = logging.getLogger(__name__)

ElementId = NewType("ElementId", int)

_MASK64 = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LANE = np.uint64(0xD6E8FEB86659FD93)
_UNIT = 2.0 ** -52


def _mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finaliser on a uint64 array (wraps modulo 2^64)"""
    x = x ^ (x >> np.uint64(30))
    x = x * _MIX1
    x = x ^ (x >> np.uint64(27))
    x = x * _MIX2
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True, order=True, slots=True)
class Weight:
    """Random weight in (0,1) with a deterministic tiebreak.

    Ordering is lexicographic on (value, element, logical_index), so two
    weights of distinct (element, logical index) pairs never compare equal.
    """
    value: float
    element: int = 0
    logical_index: int = 0

    def __post_init__(self):
        if not 0.0 < self.value < 1.0 and not self.is_one:
            raise ValueError(f"weight {self.value!r} outside (0,1)")

    @property
    def is_one(self) -> bool:
        return self.value == 1.0 and self.element == 0


# The threshold "1": compares above every weight the generator can produce.
THRESHOLD_ONE = Weight(1.0, 0, 0)


@dataclass(frozen=True, slots=True)
class WeightedElement:
    """An element paired with its weight and the site that observed it"""
    element: int
    weight: Weight
    origin_site: int
    logical_index: Optional[int] = None  # set only for with-replacement flows

    @property
    def key(self) -> Tuple[int, Optional[int]]:
        return self.element, self.logical_index


def assign_weights(seed: int, elements: Sequence[int] | np.ndarray, logical_index: int = 0) -> np.ndarray:
    """Weight values for many elements at once.

    Returns float64 values strictly inside (0,1); entry j is a pure function
    of (seed, elements[j], logical_index).
    """
    ids = np.asarray(elements, dtype=np.uint64)
    key = _mix64(np.array([seed & _MASK64], dtype=np.uint64) + _GAMMA)
    lane = _mix64(np.array([logical_index & _MASK64], dtype=np.uint64) * _LANE + key)
    x = _mix64(ids * _GAMMA + lane)
    x = _mix64(x ^ key)
    # top 52 bits, centred in their cell: never 0, never 1
    return ((x >> np.uint64(12)).astype(np.float64) + 0.5) * _UNIT


def assign_weight(seed: int, element: int, logical_index: Optional[int] = None) -> Weight:
    """Weight of a single element, identical to the vectorised derivation"""
    lane = logical_index or 0
    value = float(assign_weights(seed, [element], lane)[0])
    return Weight(value, element, lane)


class SampleSet:
    """Bounded container of the minimum-weight elements inserted so far.

    Entries live in a max-heap keyed on the negated weight so the largest
    weight is evicted in O(log s).
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("sample capacity must be at least 1")
        self.capacity = capacity
        self._heap: List[Tuple[float, int, int, WeightedElement]] = []
        self._keys: set = set()

    @classmethod
    def from_items(cls, capacity: int, items: Iterable[WeightedElement]) -> "SampleSet":
        sample = cls(capacity)
        for item in items:
            sample.insert(item)
        return sample

    def copy(self) -> "SampleSet":
        clone = SampleSet(self.capacity)
        clone._heap = list(self._heap)
        clone._keys = set(self._keys)
        return clone

    def __len__(self) -> int:
        return len(self._heap)

    def __contains__(self, key: Tuple[int, Optional[int]]) -> bool:
        return key in self._keys

    @property
    def max_weight(self) -> Weight:
        """Largest weight when full, the sentinel 1 otherwise"""
        if len(self._heap) < self.capacity:
            return THRESHOLD_ONE
        return self._heap[0][3].weight

    def insert(self, item: WeightedElement) -> Optional[WeightedElement]:
        """Insert in place; returns the evicted entry when capacity is exceeded"""
        if item.key in self._keys:
            raise ProtocolViolation(f"element {item.element} (logical index {item.logical_index}) inserted twice")
        w = item.weight
        heapq.heappush(self._heap, (-w.value, -w.element, -w.logical_index, item))
        self._keys.add(item.key)
        if len(self._heap) <= self.capacity:
            return None
        evicted = heapq.heappop(self._heap)[3]
        self._keys.discard(evicted.key)
        return evicted

    def entries(self) -> List[WeightedElement]:
        """Entries in ascending weight order"""
        return sorted((entry[3] for entry in self._heap), key=lambda item: item.weight)

    def element_ids(self) -> List[int]:
        return [item.element for item in self.entries()]


def sample_insert(sample: SampleSet, item: WeightedElement) -> Tuple[SampleSet, Optional[WeightedElement], Weight]:
    """Value-semantics insert: returns (new sample, evicted, new threshold).

    The caller enforces the guard item.weight < threshold. Without an
    eviction the set was under capacity before the insert, so the
    threshold is still 1.
    """
    updated = sample.copy()
    evicted = updated.insert(item)
    threshold = updated.max_weight if evicted is not None else THRESHOLD_ONE
    return updated, evicted, threshold


def kth_smallest_oracle(items: Sequence[WeightedElement], s: int) -> Tuple[SampleSet, Weight]:
    """Exact s smallest-weight elements by full sort, with the s-th weight or 1"""
    ordered = sorted(items, key=lambda item: item.weight)[:s]
    threshold = ordered[-1].weight if len(ordered) == s else THRESHOLD_ONE
    return SampleSet.from_items(s, ordered), threshold


def kth_smallest_oracle_values(values: np.ndarray, s: int) -> Tuple[np.ndarray, float]:
    """Array form of the oracle: positions of the s smallest values, ascending.

    Ties on value break by position, matching the Weight ordering when
    position + 1 is the element id. The threshold is 1.0 below s values.
    """
    count = len(values)
    if count < s:
        return np.lexsort((np.arange(count), values)), 1.0
    kth = np.partition(values, s - 1)[s - 1]
    candidates = np.flatnonzero(values <= kth)
    order = candidates[np.lexsort((candidates, values[candidates]))][:s]
    return order, float(values[order[-1]])
