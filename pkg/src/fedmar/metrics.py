"""Detection quality, predictability, and selection-probability utilities."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .errors import DegenerateSample, DegenerateSeries, InvalidCounts


@dataclass
class DetectionLedger:
    """Accumulates per-round flagged/true malicious sets."""

    rounds: list[tuple[frozenset, frozenset]] = field(default_factory=list)

    def record(self, flagged, truth) -> None:
        self.rounds.append((frozenset(flagged), frozenset(truth)))

    @property
    def tp(self) -> int:
        return sum(len(f & t) for f, t in self.rounds)

    @property
    def fp(self) -> int:
        return sum(len(f - t) for f, t in self.rounds)

    @property
    def fn(self) -> int:
        return sum(len(t - f) for f, t in self.rounds)


def detection_pr(ledger: DetectionLedger) -> tuple[float, float]:
    """Cumulative precision and recall over all recorded rounds.

    A zero denominator (nothing flagged, or nothing to find) yields 1.0 by
    convention; a warning marks that the value is vacuous.
    """
    if not ledger.rounds:
        raise DegenerateSample("ledger holds no rounds")
    tp, fp, fn = ledger.tp, ledger.fp, ledger.fn
    if tp + fp == 0:
        warnings.warn("no positives flagged; precision defaults to 1.0", stacklevel=2)
        precision = 1.0
    else:
        precision = tp / (tp + fp)
    if tp + fn == 0:
        warnings.warn("no true malicious present; recall defaults to 1.0", stacklevel=2)
        recall = 1.0
    else:
        recall = tp / (tp + fn)
    return precision, recall


def tdmi(series_a, series_b, bins: int = 10) -> float:
    """Plug-in mutual information (nats) from an equal-width 2-D histogram.

    A constant series carries no information; the estimate is defined as 0
    for that degenerate case, and clamped at 0 against estimator noise.
    """
    a = np.asarray(series_a, dtype=np.float64)
    b = np.asarray(series_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DegenerateSeries("series must be 1-D and the same length")
    if a.shape[0] < 4:
        raise DegenerateSeries(f"need >= 4 paired samples, got {a.shape[0]}")
    if bins < 2:
        raise DegenerateSeries("need >= 2 bins")
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        return 0.0

    joint, _, _ = np.histogram2d(a, b, bins=bins)
    joint = joint / joint.sum()
    # both marginals via the same axis-1 reduction so a/b swaps stay bit-exact
    pa = joint.sum(axis=1)
    pb = np.ascontiguousarray(joint.T).sum(axis=1)
    outer = pa[:, None] * pb[None, :]
    terms = np.zeros_like(joint)
    mask = joint > 0
    terms[mask] = joint[mask] * np.log(joint[mask] / outer[mask])
    # summing the symmetrized term matrix keeps tdmi(a, b) == tdmi(b, a) exact
    mi = float(np.trace(terms) + np.sum(np.triu(terms + terms.T, k=1)))
    return max(mi, 0.0)


def avg_tdmi(model_sequence, delay: int = 1, bins: int = 10) -> float:
    """Mean per-coordinate self-information between a trajectory and its shift."""
    mi = coordinate_tdmi(model_sequence, delay=delay, bins=bins)
    return float(np.mean(mi))


def coordinate_tdmi(model_sequence, delay: int = 1, bins: int = 10) -> np.ndarray:
    """Per-coordinate time-delayed MI values underlying avg_tdmi."""
    seq = np.asarray(model_sequence, dtype=np.float64)
    if seq.ndim != 2:
        raise DegenerateSeries("model sequence must be 2-D (rounds x dimension)")
    if delay < 1 or seq.shape[0] <= delay:
        raise DegenerateSeries(f"sequence length {seq.shape[0]} unusable at delay {delay}")
    return np.array(
        [tdmi(seq[:-delay, kk], seq[delay:, kk], bins=bins) for kk in range(seq.shape[1])]
    )


def welch_one_tailed_t(sample_a, sample_b) -> tuple[float, float, float]:
    """Welch's t-test for H_a: mean(sample_a) > mean(sample_b).

    Returns (statistic, degrees_of_freedom, p_value); the p-value is the
    t-distribution survival function at the statistic with Welch-Satterthwaite
    degrees of freedom.
    """
    a = np.asarray(sample_a, dtype=np.float64)
    b = np.asarray(sample_b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise DegenerateSample("both samples need >= 2 elements")
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    if va == 0.0 and vb == 0.0:
        raise DegenerateSample("both samples are constant")
    sa = va / a.size
    sb = vb / b.size
    stat = (a.mean() - b.mean()) / math.sqrt(sa + sb)
    dof = (sa + sb) ** 2 / (sa**2 / (a.size - 1) + sb**2 / (b.size - 1))
    p = float(scipy.stats.t.sf(stat, dof))
    return float(stat), float(dof), p


def prob_at_least_one_malicious(total: int, malicious: int, selected: int) -> float:
    """Chance a uniform draw of `selected` clients contains >= 1 malicious one.

    Exact hypergeometric complement 1 - C(total-malicious, selected)/C(total,
    selected), evaluated in log space.
    """
    if not (0 <= malicious <= total) or not (1 <= selected <= total):
        raise InvalidCounts(
            f"need 0 <= b <= K and 1 <= m <= K, got K={total}, b={malicious}, m={selected}"
        )
    if malicious == 0:
        return 0.0
    if selected > total - malicious:
        return 1.0  # pigeonhole: not enough benign clients to fill the draw
    log_ratio = (
        _log_comb(total - malicious, selected) - _log_comb(total, selected)
    )
    return 1.0 - math.exp(log_ratio)


def _log_comb(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
