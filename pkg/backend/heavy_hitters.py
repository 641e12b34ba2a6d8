"""Heavy-hitter detection on top of the without-replacement sampler.

A label occurring in at least an epsilon fraction of the union stream should
be reported; one occurring in less than epsilon/2 should not. A uniform
sample of size O(eps^-2 log n) separates the two; labels whose sample
frequency reaches 3*eps/4 are reported.
"""

import logging
import math
from dataclasses import dataclass
from typing import Dict, Hashable, Optional, Sequence, Set

import numpy as np
import pandas as pd

from config import Config, config
from models import GeneratorSpec, HeavyHitterConfig, SimConfig, Variant
from schedules import generate_schedule
from simulator import SimTrace, run_simulation

logger = logging.getLogger(__name__)

DECISION_FRACTION = 0.75  # report labels at >= 3/4 eps of the sample


@dataclass
class HeavyHitterRun:
    heavy_hitters: Set[Hashable]
    sample_size: int
    trace: SimTrace


def required_sample_size(cfg: HeavyHitterConfig) -> int:
    raw = cfg.confidence_constant * math.log2(cfg.n_hint) / (cfg.epsilon * cfg.epsilon)
    # rounding guard: 0.1 ** -2 is not exactly 100 in binary floating point
    return max(1, math.ceil(round(raw, 9)))


def estimate_frequencies(sample_labels: Sequence[Hashable], normalize: bool = True) -> pd.Series:
    """Fraction (or count) of the sample carrying each label, most frequent first"""
    return pd.Series(list(sample_labels), dtype=object).value_counts(normalize=normalize)


def extract_heavy_hitters(sample_labels: Sequence[Hashable], epsilon: float) -> Set[Hashable]:
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie strictly between 0 and 1")
    if len(sample_labels) == 0:
        logger.warning("heavy-hitter extraction on an empty sample; reporting nothing")
        return set()
    counts = estimate_frequencies(sample_labels, normalize=False)
    cutoff = DECISION_FRACTION * epsilon * len(sample_labels)
    return set(counts[counts >= cutoff].index)


def heavy_hitter_stream(n: int, planted: Dict[Hashable, float], seed: int) -> np.ndarray:
    """Labels for n arrivals: each planted label at its exact frequency, the rest unique.

    Background labels are the strings "bg-<position>", so none of them can
    become frequent.
    """
    counts = {label: int(round(freq * n)) for label, freq in planted.items()}
    if sum(counts.values()) > n:
        raise ValueError("planted frequencies exceed the stream length")
    labels = np.empty(n, dtype=object)
    position = 0
    for label, count in counts.items():
        labels[position:position + count] = label
        position += count
    labels[position:] = [f"bg-{t}" for t in range(position, n)]
    np.random.default_rng([seed, 0x4848]).shuffle(labels)
    return labels


def run_heavy_hitters(
    cfg: HeavyHitterConfig,
    k: int,
    planted: Dict[Hashable, float],
    seed: int,
    n: Optional[int] = None,
    generator: str = "uniform_random",
    settings: Config = config,
) -> HeavyHitterRun:
    """Size the sample, sample the labelled stream with variant A, extract H"""
    n = n or cfg.n_hint
    s = required_sample_size(cfg)
    sim_cfg = SimConfig(
        k=k, s=s, n=n, variant=Variant.A, seed=seed,
        generator=GeneratorSpec(kind=generator),
        oracle_checks=None,
    )
    schedule = generate_schedule(generator, {"n": n, "k": k, "s": s}, seed)
    schedule = schedule.with_labels(heavy_hitter_stream(n, planted, seed))
    trace = run_simulation(sim_cfg, schedule=schedule, settings=settings)
    sample_labels = [schedule.label_of(element) for element in trace.final_sample]
    return HeavyHitterRun(
        heavy_hitters=extract_heavy_hitters(sample_labels, cfg.epsilon),
        sample_size=s,
        trace=trace,
    )
