"""Entropy binning and calibration metrics (ECE, smECE, Brier, AUROC).

Entropy binning serves two roles: it produces the regression targets for the
forward proxy (mean accuracy of each entropy bin) and it is itself the
EntBin calibrator. Binning defaults to 10 equal-width intervals over the
observed entropy range; an equal-mass (quantile) mode exists for the rank
reading of the same construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DataError, UsageError

N_BINS_DEFAULT = 10


@dataclass(eq=False)
class EntropyBinning:
    """Fitted bin edges with per-bin mean accuracies.

    ``bin_accuracy[m]`` is None for empty bins. ``degenerate`` marks a fit on
    a zero-width entropy range, where everything collapses into bin 0.
    """

    edges: np.ndarray  # n_bins + 1 edges
    bin_accuracy: list[float | None]
    bin_counts: np.ndarray
    mode: str = "width"  # "width" | "mass"
    degenerate: bool = False

    @property
    def n_bins(self) -> int:
        return len(self.bin_accuracy)

    def to_dict(self) -> dict:
        return {
            "edges": self.edges.tolist(),
            "bin_accuracy": list(self.bin_accuracy),
            "bin_counts": self.bin_counts.tolist(),
            "mode": self.mode,
            "degenerate": self.degenerate,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "EntropyBinning":
        return cls(
            edges=np.asarray(obj["edges"], dtype=np.float64),
            bin_accuracy=[None if a is None else float(a) for a in obj["bin_accuracy"]],
            bin_counts=np.asarray(obj["bin_counts"], dtype=np.int64),
            mode=obj.get("mode", "width"),
            degenerate=bool(obj.get("degenerate", False)),
        )


def _assign_bins(b: EntropyBinning, values: np.ndarray) -> np.ndarray:
    """Bin index per value; out-of-range values clamp to the first/last bin."""
    if b.degenerate:
        return np.zeros(len(values), dtype=np.int64)
    if b.mode == "width":
        lo, hi = b.edges[0], b.edges[-1]
        frac = (values - lo) / (hi - lo)
        return np.clip(np.floor(frac * b.n_bins).astype(np.int64), 0, b.n_bins - 1)
    # quantile edges may repeat; searchsorted keeps the last interval right-closed
    m = np.searchsorted(b.edges[1:-1], values, side="right")
    return np.clip(m.astype(np.int64), 0, b.n_bins - 1)


def fit_entropy_bins(
    entropies,
    correct,
    n_bins: int = N_BINS_DEFAULT,
    mode: str = "width",
) -> EntropyBinning:
    """Divide the observed entropy range into ``n_bins`` intervals and record
    each bin's mean accuracy."""
    h = np.asarray(entropies, dtype=np.float64)
    c = np.asarray(correct, dtype=np.float64)
    if h.shape != c.shape or h.ndim != 1:
        raise DataError("entropies and correctness must be 1-D and the same length")
    if len(h) < n_bins:
        raise DataError(f"need at least {n_bins} samples to fit {n_bins} bins, got {len(h)}")
    if mode not in ("width", "mass"):
        raise UsageError(f"unknown binning mode {mode!r}")

    lo, hi = float(h.min()), float(h.max())
    if lo == hi:
        counts = np.zeros(n_bins, dtype=np.int64)
        counts[0] = len(h)
        acc: list[float | None] = [None] * n_bins
        acc[0] = float(c.mean())
        return EntropyBinning(
            edges=np.full(n_bins + 1, lo),
            bin_accuracy=acc,
            bin_counts=counts,
            mode=mode,
            degenerate=True,
        )

    if mode == "width":
        edges = np.linspace(lo, hi, n_bins + 1)
    else:
        edges = np.quantile(h, np.linspace(0.0, 1.0, n_bins + 1))
    binning = EntropyBinning(
        edges=edges,
        bin_accuracy=[None] * n_bins,
        bin_counts=np.zeros(n_bins, dtype=np.int64),
        mode=mode,
    )
    idx = _assign_bins(binning, h)
    counts = np.bincount(idx, minlength=n_bins)
    sums = np.bincount(idx, weights=c, minlength=n_bins)
    binning.bin_counts = counts.astype(np.int64)
    binning.bin_accuracy = [
        float(sums[m] / counts[m]) if counts[m] > 0 else None for m in range(n_bins)
    ]
    return binning


def bin_target(b: EntropyBinning, entropy: float) -> float:
    """Accuracy of the bin containing ``entropy``.

    Out-of-range entropies clamp to the first/last bin; if the containing bin
    is empty, the accuracy of the non-empty bin with the nearest center is
    used (lower index on ties).
    """
    m = int(_assign_bins(b, np.asarray([entropy]))[0])
    if b.bin_accuracy[m] is not None:
        return b.bin_accuracy[m]
    non_empty = [j for j, a in enumerate(b.bin_accuracy) if a is not None]
    if not non_empty:
        raise DataError("binning has no non-empty bins")
    centers = (b.edges[:-1] + b.edges[1:]) / 2.0
    best = min(non_empty, key=lambda j: (abs(float(entropy) - centers[j]), j))
    return b.bin_accuracy[best]


def bin_targets(b: EntropyBinning, entropies) -> np.ndarray:
    return np.asarray([bin_target(b, float(h)) for h in np.asarray(entropies, dtype=np.float64)])


def _check_conf(confidence, correct):
    conf = np.asarray(confidence, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    if conf.shape != corr.shape or conf.ndim != 1:
        raise DataError("confidence and correctness must be 1-D and the same length")
    if len(conf) == 0:
        raise DataError("empty input")
    if np.any(conf < 0) or np.any(conf > 1):
        raise DataError("confidences must lie in [0, 1]")
    return conf, corr


def ece(confidence, correct, n_bins: int = N_BINS_DEFAULT) -> float:
    """Expected calibration error over equal-width confidence bins on [0, 1]."""
    conf, corr = _check_conf(confidence, correct)
    n = len(conf)
    idx = np.clip(np.floor(conf * n_bins).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=n_bins)
    corr_sums = np.bincount(idx, weights=corr, minlength=n_bins)
    mask = counts > 0
    gaps = np.abs(conf_sums[mask] / counts[mask] - corr_sums[mask] / counts[mask])
    return float((counts[mask] / n * gaps).sum())


def brier(confidence, correct) -> float:
    conf, corr = _check_conf(confidence, correct)
    return float(np.mean((conf - corr) ** 2))


def auroc(confidence, correct) -> float | None:
    """Mann-Whitney statistic with mid-rank ties: P(conf+ > conf-) + P(=)/2.

    Returns None when only one class is present (undefined).
    """
    conf, corr = _check_conf(confidence, correct)
    pos = corr == 1
    n_pos = int(pos.sum())
    n_neg = len(corr) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(conf, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


SMECE_GRID_POINTS = 1000
SMECE_TOL = 1e-4


def _smece_at(conf: np.ndarray, corr: np.ndarray, sigma: float) -> float:
    """Smoothed calibration error at bandwidth ``sigma``.

    Residuals (correct - confidence) are smoothed along the confidence axis
    with a Gaussian kernel, reflection-padded at 0 and 1; the error is the
    integral of |smoothed residual| weighted by the smoothed density.
    """
    n = len(conf)
    grid = np.linspace(0.0, 1.0, SMECE_GRID_POINTS)
    dt = grid[1] - grid[0]
    resid = corr - conf
    total = 0.0
    chunk = 200
    inv = 1.0 / (2.0 * sigma * sigma)
    for s in range(0, SMECE_GRID_POINTS, chunk):
        t = grid[s : s + chunk, None]
        w = np.zeros((t.shape[0], n))
        # mirror images of each point under reflection about 0 and 1:
        # positions 2k + c and 2k - c; |k| <= 1 conserves mass to <1% for sigma <= 1
        for k in (-2.0, 0.0, 2.0):
            w += np.exp(-((t - (k + conf[None, :])) ** 2) * inv)
            w += np.exp(-((t - (k - conf[None, :])) ** 2) * inv)
        total += np.abs(w @ resid).sum()
    norm = n * sigma * np.sqrt(2.0 * np.pi)
    return float(total * dt / norm)


def smece(confidence, correct) -> float:
    """Smoothed ECE: the fixed point sigma* of sigma -> smoothed error(sigma),
    found by bisection on [1/n, 1] to 1e-4."""
    conf, corr = _check_conf(confidence, correct)
    n = len(conf)
    lo, hi = 1.0 / n, 1.0
    lo = min(lo, hi)
    e_lo = _smece_at(conf, corr, lo)
    if e_lo <= lo:
        return e_lo  # fixed point below the bracket: already smaller than 1/n
    e_hi = _smece_at(conf, corr, hi)
    if e_hi >= hi:
        return e_hi
    while hi - lo > SMECE_TOL:
        mid = 0.5 * (lo + hi)
        if _smece_at(conf, corr, mid) > mid:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(eq=False)
class ReliabilityRow:
    bin_lo: float
    bin_hi: float
    count: int
    mean_confidence: float  # NaN for empty bins
    mean_accuracy: float  # NaN for empty bins


def reliability_table(confidence, correct, n_bins: int = N_BINS_DEFAULT) -> list[ReliabilityRow]:
    """Per-bin counts, mean confidence, and mean accuracy: the data behind a
    reliability diagram plus its confidence histogram."""
    conf, corr = _check_conf(confidence, correct)
    idx = np.clip(np.floor(conf * n_bins).astype(np.int64), 0, n_bins - 1)
    counts = np.bincount(idx, minlength=n_bins)
    conf_sums = np.bincount(idx, weights=conf, minlength=n_bins)
    corr_sums = np.bincount(idx, weights=corr, minlength=n_bins)
    rows = []
    for m in range(n_bins):
        c = int(counts[m])
        rows.append(
            ReliabilityRow(
                bin_lo=m / n_bins,
                bin_hi=(m + 1) / n_bins,
                count=c,
                mean_confidence=float(conf_sums[m] / c) if c else float("nan"),
                mean_accuracy=float(corr_sums[m] / c) if c else float("nan"),
            )
        )
    return rows


def save_reliability_table(rows: list[ReliabilityRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("bin_lo\tbin_hi\tcount\tmean_conf\tmean_acc\n")
        for r in rows:
            fh.write(f"{r.bin_lo!r}\t{r.bin_hi!r}\t{r.count}\t{r.mean_confidence!r}\t{r.mean_accuracy!r}\n")
