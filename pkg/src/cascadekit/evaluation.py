"""Deferral curves, AUC, oracle bound, rate matching, cost, and bootstrap CIs.

A deferral curve is exact: one point per deferral count k = 0..n, where the
top-k records in defer-first order take the large model's correctness and
the rest keep the small model's. All AUCs integrate that piecewise-linear
curve with the trapezoid rule, un-normalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .confidence import final_distributions
from .deferral import DeferralScores, deferral_order, deferred_count
from .errors import DataError, UsageError
from .records import Dataset


@dataclass(eq=False)
class DeferralCurve:
    method: str
    rates: np.ndarray  # (n+1,) = k/n
    accuracies: np.ndarray  # (n+1,)

    @property
    def n(self) -> int:
        return len(self.rates) - 1


@dataclass
class CostModel:
    """Per-sample cost of the large model relative to the small one.

    The default mirrors a 13B-small / 70B-large pair with cost proportional
    to parameter count.
    """

    cost_ratio: float = 70.0 / 13.0

    def __post_init__(self) -> None:
        if self.cost_ratio <= 0:
            raise UsageError(f"cost_ratio must be positive, got {self.cost_ratio}")


def small_correct_vector(ds: Dataset) -> np.ndarray:
    preds = final_distributions(ds).argmax(axis=1)
    true = np.asarray([r.true_label for r in ds.records])
    return (preds == true).astype(np.int64)


def large_correct_vector(ds: Dataset) -> np.ndarray:
    for r in ds.records:
        if r.large_final_probs is None:
            raise DataError(f"record {r.id!r}: large_final_probs required for evaluation")
    preds = np.stack([r.large_final_probs for r in ds.records]).argmax(axis=1)
    true = np.asarray([r.true_label for r in ds.records])
    return (preds == true).astype(np.int64)


def small_accuracy(ds: Dataset) -> float:
    return int(small_correct_vector(ds).sum()) / len(ds)


def large_accuracy(ds: Dataset) -> float:
    return int(large_correct_vector(ds).sum()) / len(ds)


def _curve_from_order(
    order: np.ndarray, small_c: np.ndarray, large_c: np.ndarray, method: str
) -> DeferralCurve:
    n = len(order)
    delta = (large_c - small_c)[order]
    correct_counts = int(small_c.sum()) + np.concatenate([[0], np.cumsum(delta)])
    return DeferralCurve(
        method=method,
        rates=np.arange(n + 1) / n,
        accuracies=correct_counts / n,
    )


def deferral_curve(scores: DeferralScores, ds: Dataset) -> DeferralCurve:
    """System accuracy at every deferral count under the method's ordering."""
    if scores.ids != ds.ids:
        raise DataError("scores and dataset are not aligned (ids differ)")
    return _curve_from_order(
        deferral_order(scores), small_correct_vector(ds), large_correct_vector(ds), scores.method
    )


def oracle_curve(ds: Dataset) -> DeferralCurve:
    """Best possible deferral order: gains first, then agreement ties, then
    losses; the pointwise upper bound of every score-based curve."""
    small_c = small_correct_vector(ds)
    large_c = large_correct_vector(ds)
    ids = np.asarray(ds.ids)
    # class 0: gains, 1: ties (same correctness), 2: losses
    cls = np.where(
        (small_c == 0) & (large_c == 1), 0, np.where(small_c == large_c, 1, 2)
    )
    order = np.lexsort((ids, cls))
    return _curve_from_order(order, small_c, large_c, "oracle")


def _auc_accs(accs: np.ndarray, n: int, upper: float) -> float:
    if not (0.0 < upper <= 1.0):
        raise UsageError(f"upper must lie in (0, 1], got {upper}")
    k_full = min(n, math.floor(upper * n + 1e-9))
    step = 1.0 / n
    area = float(np.trapezoid(accs[: k_full + 1], dx=step)) if k_full >= 1 else 0.0
    rem = upper - k_full / n
    if rem > 1e-12 and k_full < n:
        frac = rem * n
        acc_u = accs[k_full] + (accs[k_full + 1] - accs[k_full]) * frac
        area += 0.5 * (accs[k_full] + acc_u) * rem
    return area


def auc(curve: DeferralCurve, upper: float = 1.0) -> float:
    """Trapezoidal integral of accuracy over deferral rate in [0, upper]."""
    return _auc_accs(curve.accuracies, curve.n, upper)


def rate_to_match(
    curve_a: DeferralCurve, curve_b: DeferralCurve, r0: float
) -> float | None:
    """Smallest grid rate where ``curve_a`` reaches ``curve_b``'s accuracy at
    ``r0``; None if it never does."""
    k0 = deferred_count(curve_b.n, r0)
    target = curve_b.accuracies[k0]
    reached = np.flatnonzero(curve_a.accuracies >= target)
    if len(reached) == 0:
        return None
    return float(reached[0] / curve_a.n)


def cost_reduction(r0: float, r1: float, cm: CostModel) -> float:
    """Relative drop in expected per-sample cost when deferring at rate r1
    instead of r0 (the small model always runs; negative when r1 > r0)."""
    for name, r in (("r0", r0), ("r1", r1)):
        if not (0.0 <= r <= 1.0):
            raise UsageError(f"{name} must lie in [0, 1], got {r}")
    rho = cm.cost_ratio
    return (r0 - r1) * rho / (1.0 + r0 * rho)


@dataclass
class BootstrapResult:
    mean: float
    lo: float
    hi: float
    significant: bool


def _resampled_auc(
    counts: np.ndarray,
    order: np.ndarray,
    small_c: np.ndarray,
    large_c: np.ndarray,
    upper: float,
) -> float:
    n = len(order)
    base = int((counts * small_c).sum())
    counts_o = counts[order]
    delta_o = np.repeat((large_c - small_c)[order], counts_o)
    accs = (base + np.concatenate([[0], np.cumsum(delta_o)])) / n
    return _auc_accs(accs, n, upper)


def bootstrap_auc_ci(
    scores_a: DeferralScores,
    scores_b: DeferralScores | None,
    ds: Dataset,
    upper: float = 1.0,
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> BootstrapResult:
    """Percentile bootstrap over test-set resamples of the AUC difference
    a - b (or of a's AUC alone when ``scores_b`` is None). Scores stay fixed;
    only record membership is resampled."""
    if not (0.0 < level < 1.0):
        raise UsageError(f"level must lie in (0, 1), got {level}")
    n = len(ds)
    small_c = small_correct_vector(ds)
    large_c = large_correct_vector(ds)
    order_a = deferral_order(scores_a)
    order_b = deferral_order(scores_b) if scores_b is not None else None
    rng = np.random.default_rng(seed)
    stats = np.empty(n_resamples)
    for i in range(n_resamples):
        counts = np.bincount(rng.integers(0, n, size=n), minlength=n)
        v = _resampled_auc(counts, order_a, small_c, large_c, upper)
        if order_b is not None:
            v -= _resampled_auc(counts, order_b, small_c, large_c, upper)
        stats[i] = v
    alpha = 1.0 - level
    lo, hi = np.quantile(stats, [alpha / 2.0, 1.0 - alpha / 2.0])
    return BootstrapResult(
        mean=float(stats.mean()),
        lo=float(lo),
        hi=float(hi),
        significant=bool(lo > 0.0 or hi < 0.0),
    )


def deferred_prompt_length(scores: DeferralScores, ds: Dataset, rate: float) -> float:
    """Mean prompt length of the records deferred at ``rate`` (NaN at 0)."""
    if scores.ids != ds.ids:
        raise DataError("scores and dataset are not aligned (ids differ)")
    lengths = []
    for r in ds.records:
        if r.prompt_length is None:
            raise DataError(f"record {r.id!r}: prompt_length missing")
        lengths.append(r.prompt_length)
    lengths = np.asarray(lengths, dtype=np.float64)
    k = deferred_count(len(ds), rate)
    if k == 0:
        return float("nan")
    order = deferral_order(scores)
    return float(lengths[order[:k]].mean())


def save_curve(curve: DeferralCurve, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("rate\taccuracy\n")
        for r, a in zip(curve.rates, curve.accuracies):
            fh.write(f"{float(r)!r}\t{float(a)!r}\n")
