"""Statistical validation of samples and of the message-complexity bounds.

All logarithms are base 2. Expectation bounds are checked one-sided: a check
passes when the empirical mean minus SE_SLACK standard errors does not exceed
the theoretical value. Every theoretical value is recomputed from (k, s, n, r)
when the check runs.
"""

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, Hashable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats as sps

from config import config
from models import BoundReport, InsufficientTrialsError
from simulator import SimTrace

logger = logging.getLogger(__name__)


@dataclass
class TrialSummary:
    """Raw per-trial rows of a batch of runs, plus aggregates over them"""
    totals: np.ndarray
    epoch_counts: np.ndarray
    per_epoch_upstream: List[List[int]]
    final_samples: List[List[int]]

    def __post_init__(self):
        self.totals = np.asarray(self.totals, dtype=np.float64)
        self.epoch_counts = np.asarray(self.epoch_counts, dtype=np.float64)
        if len(self.totals) < 1:
            raise ValueError("a trial summary needs at least one trial")

    @classmethod
    def from_traces(cls, traces: Sequence[SimTrace]) -> "TrialSummary":
        return cls(
            totals=[trace.total_messages for trace in traces],
            epoch_counts=[trace.ledger.epoch_count for trace in traces],
            per_epoch_upstream=[trace.ledger.per_epoch_upstream for trace in traces],
            final_samples=[list(trace.final_sample) for trace in traces],
        )

    @property
    def trials(self) -> int:
        return len(self.totals)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "total_messages": self.totals,
            "epochs": self.epoch_counts,
            "upstream": [sum(xs) for xs in self.per_epoch_upstream],
        })

    def aggregates(self) -> Dict[str, Dict[str, float]]:
        """mean, variance and quartiles of each per-trial column"""
        frame = self.to_frame()
        summary = frame.describe(percentiles=[0.25, 0.5, 0.75]).to_dict()
        for column in frame.columns:
            summary[column]["var"] = float(frame[column].var(ddof=1)) if len(frame) > 1 else 0.0
        return summary


@dataclass
class UniformityVerdict:
    passed: bool
    statistic: float
    p_value: float
    min_corrected_p: float
    frequencies: Dict[int, float] = field(default_factory=dict)


def _mean_and_se(values: np.ndarray) -> Tuple[float, float]:
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, 0.0
    return mean, float(np.std(values, ddof=1) / math.sqrt(len(values)))


def _expectation_report(name: str, values: np.ndarray, bound: float, slack: float, **extra) -> BoundReport:
    mean, se = _mean_and_se(values)
    passed = mean - slack * se <= bound
    if not passed:
        logger.warning("%s: mean %.4g exceeds bound %.4g (se %.3g)", name, mean, bound, se)
    return BoundReport(
        name=name,
        theoretical=bound,
        empirical_mean=mean,
        ratio=mean / bound if bound > 0 else math.inf,
        passed=passed,
        **extra,
    )


def inclusion_uniformity_test(trials: TrialSummary, n: int, s: int, alpha: float = config.ALPHA) -> UniformityVerdict:
    """Each element should land in a without-replacement sample with probability s/n.

    Per-element z-tests against Binomial(T, s/n) with a Bonferroni correction,
    plus an aggregate chi-square over all elements. Inclusion indicators of
    distinct elements have covariance -p(1-p)/(n-1), so the aggregate
    statistic is scaled by (n-1)/n and has n-1 degrees of freedom.
    """
    T = trials.trials
    p = min(1.0, s / n)
    if T * p < 10:
        raise InsufficientTrialsError(f"T*s/n = {T * p:.2f} < 10; the normal approximation does not hold")
    counts = np.zeros(n, dtype=np.float64)
    for sample in trials.final_samples:
        counts[np.asarray(sample, dtype=np.int64) - 1] += 1
    frequencies = {e + 1: counts[e] / T for e in range(n)}

    if p >= 1.0:
        passed = bool(np.all(counts == T))
        return UniformityVerdict(passed, 0.0, 1.0 if passed else 0.0, 1.0 if passed else 0.0, frequencies)

    var = T * p * (1 - p)
    z = (counts - T * p) / math.sqrt(var)
    corrected = np.minimum(1.0, 2 * sps.norm.sf(np.abs(z)) * n)
    statistic = float(np.sum((counts - T * p) ** 2) / var * (n - 1) / n)
    p_value = float(sps.chi2.sf(statistic, df=n - 1))
    passed = bool(corrected.min() >= alpha and p_value >= alpha)
    if not passed:
        logger.warning("uniformity rejected: min corrected p %.3g, chi-square p %.3g", corrected.min(), p_value)
    return UniformityVerdict(passed, statistic, p_value, float(corrected.min()), frequencies)


def epoch_bound(n: int, s: int, r: float) -> float:
    return max(0.0, math.log2(n / s)) / math.log2(r) + 2


def epoch_bound_check(trials: TrialSummary, n: int, s: int, r: float, slack: float = config.SE_SLACK) -> BoundReport:
    if r < 2:
        raise ValueError("the epoch-count bound needs r >= 2")
    return _expectation_report("epoch-count", trials.epoch_counts, epoch_bound(n, s, r), slack)


def per_epoch_message_check(trials: TrialSummary, s: int, r: float, slack: float = config.SE_SLACK) -> BoundReport:
    pooled = np.array([x for row in trials.per_epoch_upstream for x in row], dtype=np.float64)
    if pooled.size == 0:
        pooled = np.zeros(1)
    return _expectation_report("per-epoch-upstream", pooled, (r + 1) * s, slack)


def total_message_bound(k: int, s: int, n: int, r: float) -> float:
    """(k + 2s + 2rs) times the epoch bound"""
    return (k + 2 * s + 2 * r * s) * epoch_bound(n, s, r)


def total_message_bound_statement(k: int, s: int, n: int, r: float) -> float:
    """Looser (k + 2(r+1)rs) form, reported alongside"""
    return (k + 2 * (r + 1) * r * s) * epoch_bound(n, s, r)


def large_sample_cap(s: int, n: int) -> float:
    """20 s log(n/s), the large-sample regime cap at r = 2"""
    return 20 * s * math.log2(n / s)


def total_message_check(trials: TrialSummary, k: int, s: int, n: int, r: float, slack: float = config.SE_SLACK) -> BoundReport:
    report = _expectation_report(
        "total-messages",
        trials.totals,
        total_message_bound(k, s, n, r),
        slack,
        alternate=total_message_bound_statement(k, s, n, r),
    )
    if r == 2 and s >= k / 8 and n > s:
        cap = large_sample_cap(s, n)
        mean, se = _mean_and_se(trials.totals)
        within_cap = mean - slack * se <= cap
        report.passed = report.passed and within_cap
        report.detail = f"large-sample cap {cap:.1f}: {'ok' if within_cap else 'exceeded'}"
    return report


def coupling_check(pairs: Sequence[Tuple[SimTrace, SimTrace]]) -> BoundReport:
    """Worst A/B message ratio over coupled runs against the factor 2"""
    ratios, agree = [], True
    for trace_a, trace_b in pairs:
        ratios.append(trace_a.total_messages / trace_b.total_messages)
        agree = agree and trace_a.u_trajectory == trace_b.u_trajectory
    worst = max(ratios)
    return BoundReport(
        name="coupling",
        theoretical=2.0,
        empirical_mean=worst,
        ratio=worst / 2.0,
        passed=agree and worst <= 2.0,
        detail=None if agree else "threshold trajectories differ",
    )


def trend_check(name: str, ratios: Dict[Hashable, float], band: float = config.TREND_BAND) -> BoundReport:
    """A quantity normalised by its predicted growth should stay within a constant band"""
    values = np.array(list(ratios.values()), dtype=np.float64)
    spread = float(values.max() / values.min())
    return BoundReport(
        name=name,
        theoretical=band,
        empirical_mean=spread,
        ratio=spread / band,
        passed=spread <= band,
        detail=", ".join(f"{key}: {value:.3f}" for key, value in ratios.items()),
    )


def wor_denominator(k: int, s: int, n: int) -> float:
    """Predicted message growth of the without-replacement protocol"""
    if s < k / 8:
        return k * math.log2(n / s) / math.log2(k / s)
    return s * math.log2(n / s)


def _wr_log_s(s: int) -> float:
    return max(math.log2(s), 1.0) if s > 1 else 1.0


def wr_epoch_parameter(k: int, s: int) -> float:
    """r = 2 when k <= 2 s log s, else k / (s log s)"""
    log_s = _wr_log_s(s)
    if k <= 2 * s * log_s:
        return 2.0
    return k / (s * log_s)


def wr_denominator(k: int, s: int, n: int) -> float:
    log_s = _wr_log_s(s)
    if k <= 2 * s * log_s:
        return s * log_s * math.log2(n)
    return k * math.log2(n) / math.log2(wr_epoch_parameter(k, s))


def wr_bound_check(grid: Dict[int, TrialSummary], k: int, s: int, band: float = config.TREND_BAND) -> BoundReport:
    """Mean messages over the predicted growth, across an n-grid, stays in a band"""
    ratios = {n: float(np.mean(summary.totals)) / wr_denominator(k, s, n) for n, summary in sorted(grid.items())}
    report = trend_check("wr-messages-trend", ratios, band)
    report.alternate = wr_epoch_parameter(k, s)
    return report


def wr_uniformity_test(slot_samples: np.ndarray, n: int, alpha: float = config.ALPHA) -> UniformityVerdict:
    """Per-slot goodness of fit to uniform over n, and pairwise slot independence.

    slot_samples is a T x s array of element ids. All s + s(s-1)/2 tests share
    a Bonferroni-corrected level.
    """
    samples = np.asarray(slot_samples, dtype=np.int64)
    T, s = samples.shape
    if T / n < 5:
        raise InsufficientTrialsError(f"{T} trials over {n} elements leave fewer than 5 expected per cell")
    family = s + s * (s - 1) // 2
    p_values = []
    for slot in range(s):
        observed = np.bincount(samples[:, slot] - 1, minlength=n)
        p_values.append(float(sps.chisquare(observed).pvalue))
    for a, b in combinations(range(s), 2):
        table = pd.crosstab(samples[:, a], samples[:, b]).to_numpy()
        p_values.append(float(sps.chi2_contingency(table, correction=False).pvalue))
    corrected = min(1.0, min(p_values) * family)
    first = samples[:, 0]
    frequencies = {e + 1: float(c) / T for e, c in enumerate(np.bincount(first - 1, minlength=n))}
    passed = corrected >= alpha
    if not passed:
        logger.warning("with-replacement uniformity rejected: corrected p %.3g", corrected)
    return UniformityVerdict(passed, float(min(p_values)), corrected, corrected, frequencies)


def heavy_hitter_check(outcomes: Sequence[Tuple[bool, bool]], min_rate: float = 0.95) -> BoundReport:
    """Fraction of runs where the frequent label was reported and the rare one was not"""
    successes = [found and not false_positive for found, false_positive in outcomes]
    rate = float(np.mean(successes))
    return BoundReport(
        name="heavy-hitters",
        theoretical=min_rate,
        empirical_mean=rate,
        ratio=rate / min_rate,
        passed=rate >= min_rate,
    )
