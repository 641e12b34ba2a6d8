"""Arrival schedules: which site observes which element in which round.

A schedule is stored column-wise and ordered by (round, site); the 1-based
position of an arrival in that order is its ElementId. At most one element
arrives per site per round.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import numpy as np

from models import ScheduleError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StreamSchedule:
    rounds: np.ndarray                    # 1-based round of each arrival, non-decreasing
    sites: np.ndarray                     # 1-based site of each arrival
    k: int
    labels: Optional[np.ndarray] = None   # optional value carried by each arrival

    def __len__(self) -> int:
        return len(self.rounds)

    @property
    def num_rounds(self) -> int:
        return int(self.rounds[-1]) if len(self.rounds) else 0

    def with_labels(self, labels: np.ndarray) -> "StreamSchedule":
        if len(labels) != len(self):
            raise ScheduleError(f"{len(labels)} labels for {len(self)} arrivals")
        return StreamSchedule(rounds=self.rounds, sites=self.sites, k=self.k, labels=np.asarray(labels))

    def label_of(self, element: int) -> Any:
        if self.labels is None:
            return element
        value = self.labels[element - 1]
        return value.item() if isinstance(value, np.generic) else value

    def validate(self) -> None:
        """Raise ScheduleError unless sites are in range and each (round, site) occurs once"""
        if len(self.rounds) != len(self.sites):
            raise ScheduleError("rounds and sites differ in length")
        if not len(self):
            return
        if self.sites.min() < 1 or self.sites.max() > self.k:
            raise ScheduleError(f"site index outside 1..{self.k}")
        if self.rounds[0] < 1:
            raise ScheduleError("rounds are 1-based")
        d_round = np.diff(self.rounds)
        d_site = np.diff(self.sites)
        if not np.all((d_round > 0) | ((d_round == 0) & (d_site > 0))):
            raise ScheduleError("arrivals must be ordered by (round, site) with one element per site per round")


def _one_per_round(sites: np.ndarray, k: int) -> StreamSchedule:
    n = len(sites)
    return StreamSchedule(rounds=np.arange(1, n + 1, dtype=np.int64), sites=sites.astype(np.int64), k=k)


def _single_site(n: int, k: int, rng: np.random.Generator, params: Dict[str, Any]) -> StreamSchedule:
    return _one_per_round(np.ones(n, dtype=np.int64), k)


def _round_robin(n: int, k: int, rng: np.random.Generator, params: Dict[str, Any]) -> StreamSchedule:
    return _one_per_round(np.arange(n, dtype=np.int64) % k + 1, k)


def _bursty(n: int, k: int, rng: np.random.Generator, params: Dict[str, Any]) -> StreamSchedule:
    burst = int(params.get("burst", 8))
    if burst < 1:
        raise ScheduleError("burst length must be at least 1")
    return _one_per_round((np.arange(n, dtype=np.int64) // burst) % k + 1, k)


def _uniform_random(n: int, k: int, rng: np.random.Generator, params: Dict[str, Any]) -> StreamSchedule:
    drawn = rng.integers(1, k + 1, size=n)
    # pack arrivals into rounds, opening a new round when a site repeats
    rounds = np.empty(n, dtype=np.int64)
    current, seen = 1, set()
    for t, site in enumerate(drawn.tolist()):
        if site in seen:
            current += 1
            seen.clear()
        seen.add(site)
        rounds[t] = current
    # within a round sites go in ascending order
    order = np.lexsort((drawn, rounds))
    return StreamSchedule(rounds=rounds[order], sites=drawn[order].astype(np.int64), k=k)


def adversarial_epoch_sizes(n: int, k: int, s: int) -> List[int]:
    """Epoch lengths of the lower-bound stream, truncated so they sum to n.

    Epoch 0 holds s updates, epoch i >= 1 holds beta^(i-1) * k with
    beta = 1 + k/s (rounded to the nearest integer, at least 1).
    """
    beta = 1.0 + k / s
    sizes, total, i = [], 0, 0
    while total < n:
        size = s if i == 0 else max(1, round(beta ** (i - 1) * k))
        size = min(size, n - total)
        sizes.append(size)
        total += size
        i += 1
    return sizes


def _epoch_adversarial(n: int, k: int, rng: np.random.Generator, params: Dict[str, Any]) -> StreamSchedule:
    s = int(params.get("s", 1))
    seed = int(params.get("seed", 0))
    chunks = []
    for i, size in enumerate(adversarial_epoch_sizes(n, k, s)):
        # sigma_i: independent assignment randomness per epoch
        sigma = np.random.default_rng([seed, i])
        chunks.append(sigma.integers(1, k + 1, size=size))
    return _one_per_round(np.concatenate(chunks), k)


GENERATORS = {
    "single_site": _single_site,
    "round_robin": _round_robin,
    "uniform_random": _uniform_random,
    "epoch_adversarial": _epoch_adversarial,
    "bursty": _bursty,
}


def generate_schedule(kind: str, params: Dict[str, Any], seed: int) -> StreamSchedule:
    """Build a schedule; params must carry n and k (and s for epoch_adversarial)"""
    if kind not in GENERATORS:
        raise ScheduleError(f"unknown schedule generator '{kind}'; known: {sorted(GENERATORS)}")
    try:
        n, k = int(params["n"]), int(params["k"])
    except KeyError as missing:
        raise ScheduleError(f"generator '{kind}' needs parameter {missing}") from None
    if n < 1 or k < 1:
        raise ScheduleError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    rng = np.random.default_rng([seed, 0x5C4ED])
    schedule = GENERATORS[kind](n, k, rng, {**params, "seed": seed})
    schedule.validate()
    logger.debug("schedule %s: n=%d k=%d rounds=%d", kind, n, k, schedule.num_rounds)
    return schedule
