"""Ranking metrics, robustness improvement, rank shift, and paired t-test."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .data import RatingDataset, SPLIT_TRAIN, SPLIT_VALIDATION
from .mf import MfModel


@dataclass
class MetricReport:
    hr_test_at_k: float
    hr_target_at_k: float
    ri: float
    rank_shifts: list = field(default_factory=list)
    k: int = 50


def _rank(scores: np.ndarray, item: int, exclude: np.ndarray) -> int:
    """0-based rank of `item` under descending score, ties by ascending index.

    Excluded items do not count toward the rank.
    """
    s = scores[item]
    better = (scores > s) | ((scores == s) & (np.arange(scores.size) < item))
    if exclude.size:
        better[exclude] = False
    return int(np.count_nonzero(better))


def hit_ratio_test(model: MfModel, ds: RatingDataset, k: int = 50) -> float:
    """Fraction of real users whose withheld test item lands in their top-k.

    Each user's train+validation items are excluded from the candidate list.
    """
    test_items = ds.test_item_by_user()
    if not test_items:
        raise ValueError("dataset has no test triples")
    rated = ds.rated_items_by_user(splits=(SPLIT_TRAIN, SPLIT_VALIDATION))
    hits = 0
    for u, item in test_items.items():
        if _rank(model.scores(u), item, rated[u]) < k:
            hits += 1
    return hits / len(test_items)


def hit_ratio_targets(model: MfModel, ds: RatingDataset, targets, k: int = 50) -> float:
    """Fraction of real (user, target) pairs with the target in the top-k.

    Pairs where the user already rated the target in train/validation are
    excluded from the denominator; an empty denominator yields 0 with a
    warning.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.size == 0:
        raise ValueError("targets must be nonempty")
    rated = ds.rated_items_by_user(splits=(SPLIT_TRAIN, SPLIT_VALIDATION))
    hits = 0
    total = 0
    for u in range(ds.n_real_users):
        scores = model.scores(u)
        rated_u = set(rated[u].tolist())
        for t in targets:
            if int(t) in rated_u:
                continue
            total += 1
            if _rank(scores, int(t), rated[u]) < k:
                hits += 1
    if total == 0:
        warnings.warn("every user rated every target; target hit ratio undefined, returning 0")
        return 0.0
    return hits / total


def robustness_improvement(hr_defense: float, hr_origin: float, hr_attack: float) -> float:
    """1 - (HR_defense - HR_origin) / (HR_attack - HR_origin).

    1 means full recovery of pre-attack behavior, 0 no defense effect.
    Returns NaN (with a warning) when the attack moved nothing.
    """
    if abs(hr_attack - hr_origin) < 1e-9:
        warnings.warn("attack ineffective; robustness improvement undefined")
        return math.nan
    return 1.0 - (hr_defense - hr_origin) / (hr_attack - hr_origin)


def rank_shift(m_before: MfModel, m_after: MfModel, targets, ds: RatingDataset) -> list[int]:
    """Per (real user, target) rank difference before minus after.

    Positive values mean the perturbation promoted the target. Rated items
    (train+validation) are excluded from both rankings; pairs where the user
    rated the target are skipped.
    """
    targets = np.asarray(targets, dtype=np.int64)
    rated = ds.rated_items_by_user(splits=(SPLIT_TRAIN, SPLIT_VALIDATION))
    shifts = []
    for u in range(ds.n_real_users):
        sb = m_before.scores(u)
        sa = m_after.scores(u)
        rated_u = set(rated[u].tolist())
        for t in targets:
            t = int(t)
            if t in rated_u:
                continue
            shifts.append(_rank(sb, t, rated[u]) - _rank(sa, t, rated[u]))
    return shifts


def quartiles(values) -> tuple[float, float, float]:
    """(q1, median, q3) with linear interpolation, for boxplot export."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return (math.nan, math.nan, math.nan)
    q1, q2, q3 = np.percentile(v, [25, 50, 75])
    return (float(q1), float(q2), float(q3))


def _betacf(a: float, b: float, x: float, max_iter: int = 500, eps: float = 3e-16) -> float:
    """Continued fraction for the regularized incomplete beta (Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < eps:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, dof: int) -> float:
    """Two-sided tail probability of Student's t with `dof` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if math.isinf(t):
        return 0.0
    return betainc(dof / 2.0, 0.5, dof / (dof + t * t))


def paired_t_test(samples_a, samples_b) -> tuple[float, float]:
    """Two-sided paired t-test; returns (t statistic, p value).

    Zero variance of the differences degenerates to p = 1 when the means are
    equal and p = 0 otherwise.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("samples must be 1-d arrays of equal length")
    n = a.size
    if n < 2:
        raise ValueError("need at least two pairs")
    diff = a - b
    mean = float(np.mean(diff))
    sd = float(np.std(diff, ddof=1))
    if sd == 0.0:
        return (0.0, 1.0) if mean == 0.0 else (math.inf if mean > 0 else -math.inf, 0.0)
    t = mean / (sd / math.sqrt(n))
    return t, t_sf_two_sided(t, n - 1)


def significance_stars(p: float) -> str:
    """Star markers at the 0.05 / 0.01 / 0.001 thresholds."""
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""
