"""Forward (pre-invocation) confidence for the large model.

A regressor over input-only embeddings is trained against either the mean
accuracy of the sample's large-model entropy bin (default) or the large
model's own max probability (the individual-probability ablation). The
oracle variant skips the proxy entirely and reads the realized max
probability, which a deployed cascade would not have.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .calibration import EntropyBinning, _assign_bins, fit_entropy_bins
from .errors import DataError, UsageError
from .forest import (
    FeatureMatrix,
    ForestConfig,
    ForestModel,
    derive_seed,
    forest_from_dict,
    forest_to_dict,
    predict,
    train_forest,
)
from .records import Dataset, SampleRecord, fold_indices, subset

TARGET_MODES = ("binned-accuracy", "individual-probability")
PROXY_FORMAT = "cascadekit-proxy"
PROXY_VERSION = 1


@dataclass(eq=False)
class ForwardProxy:
    model: ForestModel
    target_mode: str
    binning: EntropyBinning | None  # binned-accuracy mode only
    train_mse: float


def _large_arrays(train: Dataset) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(probs, entropies, correctness) of the large model over ``train``."""
    for r in train.records:
        if r.large_final_probs is None:
            raise DataError(f"record {r.id!r}: large_final_probs required to build targets")
    probs = np.stack([r.large_final_probs for r in train.records])
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(probs > 0, probs * np.log(probs), 0.0)
    entropies = -terms.sum(axis=1)
    preds = probs.argmax(axis=1)
    correct = (preds == np.asarray([r.true_label for r in train.records])).astype(np.float64)
    return probs, entropies, correct


def build_forward_targets(
    train: Dataset, mode: str = "binned-accuracy", n_bins: int = 10
) -> tuple[list[tuple[str, float]], EntropyBinning | None]:
    """Per-record regression targets for the proxy, plus the fitted binning
    (None in individual-probability mode)."""
    if mode not in TARGET_MODES:
        raise UsageError(f"unknown proxy target mode {mode!r}")
    probs, entropies, correct = _large_arrays(train)
    if mode == "individual-probability":
        targets = probs.max(axis=1)
        return [(r.id, float(t)) for r, t in zip(train.records, targets)], None
    binning = fit_entropy_bins(entropies, correct, n_bins=n_bins)
    bins = _assign_bins(binning, entropies)
    targets = np.asarray([binning.bin_accuracy[m] for m in bins])
    return [(r.id, float(t)) for r, t in zip(train.records, targets)], binning


def train_forward_proxy(
    train: Dataset,
    mode: str = "binned-accuracy",
    config: ForestConfig | None = None,
    n_bins: int = 10,
) -> ForwardProxy:
    """Fit the embedding -> target regressor; deterministic under the seed."""
    if train.embedding_dim is None:
        raise DataError("proxy training requires input embeddings on every record")
    if train.embedding_dim == 0:
        raise DataError("input embeddings have dimension 0")
    pairs, binning = build_forward_targets(train, mode, n_bins=n_bins)
    targets = np.asarray([t for _, t in pairs])
    fm = FeatureMatrix(ids=train.ids, X=np.stack([r.input_embedding for r in train.records]))
    model = train_forest(fm, targets, "regressor", config)
    preds = np.clip(predict(model, fm), 0.0, 1.0)
    mse = float(np.mean((preds - targets) ** 2))
    return ForwardProxy(model=model, target_mode=mode, binning=binning, train_mse=mse)


def forward_confidence(proxy: ForwardProxy, r: SampleRecord) -> float:
    """Input-only prediction of large-model confidence, clipped to [0, 1]."""
    if r.input_embedding is None:
        raise DataError(f"record {r.id!r}: input_embedding missing")
    value = predict(proxy.model, r.input_embedding.reshape(1, -1))[0]
    return float(min(1.0, max(0.0, value)))


def forward_confidences(proxy: ForwardProxy, ds: Dataset) -> np.ndarray:
    if ds.embedding_dim is None:
        raise DataError("dataset has no input embeddings")
    X = np.stack([r.input_embedding for r in ds.records])
    return np.clip(predict(proxy.model, X), 0.0, 1.0)


def out_of_fold_forward_values(
    ds: Dataset,
    mode: str = "binned-accuracy",
    k_folds: int = 5,
    config: ForestConfig | None = None,
    n_bins: int = 10,
    pool: np.ndarray | None = None,
) -> np.ndarray:
    """Cross-fitted forward confidences: the proxy scoring fold f is trained
    only on records outside f, so no prediction comes from a proxy that saw
    the record's large-model output. ``pool`` (boolean mask) restricts proxy
    training data, for the training-set-size ablation.

    An in-sample proxy memorizes its per-sample targets and leaks the large
    model's correctness into the deferral features; cross-fitting is the
    default for evaluation because of that.
    """
    if pool is None:
        pool = np.ones(len(ds), dtype=bool)
    base = config or ForestConfig()
    folds = fold_indices(ds, k_folds)
    values = np.empty(len(ds))
    for f, test_idx in enumerate(folds):
        train_mask = pool.copy()
        train_mask[test_idx] = False
        train_ds = subset(ds, np.flatnonzero(train_mask))
        cfg = ForestConfig(
            n_trees=base.n_trees,
            max_depth=base.max_depth,
            min_leaf=base.min_leaf,
            features_per_split=base.features_per_split,
            seed=derive_seed(base.seed, f),
        )
        proxy = train_forward_proxy(train_ds, mode, cfg, n_bins=n_bins)
        values[test_idx] = forward_confidences(proxy, subset(ds, test_idx))
    return values


def oracle_forward_confidence(r: SampleRecord) -> float:
    """The large model's realized max probability (not available pre-invocation)."""
    if r.large_final_probs is None:
        raise DataError(f"record {r.id!r}: large_final_probs missing")
    return float(r.large_final_probs.max())


def oracle_forward_confidences(ds: Dataset) -> np.ndarray:
    return np.asarray([oracle_forward_confidence(r) for r in ds.records])


def subsample_proxy_train(train: Dataset, fraction: float, seed: int) -> Dataset:
    """Seeded uniform subsample of ceil(fraction * n) records, in file order."""
    if not (0.0 < fraction <= 1.0):
        raise UsageError(f"fraction must lie in (0, 1], got {fraction}")
    n = len(train)
    m = math.ceil(fraction * n - 1e-9)
    if m >= n:
        return train
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=m, replace=False))
    return subset(train, idx)


def proxy_to_dict(proxy: ForwardProxy) -> dict:
    return {
        "format": PROXY_FORMAT,
        "version": PROXY_VERSION,
        "target_mode": proxy.target_mode,
        "train_mse": proxy.train_mse,
        "binning": proxy.binning.to_dict() if proxy.binning is not None else None,
        "model": forest_to_dict(proxy.model),
    }


def proxy_from_dict(obj: dict) -> ForwardProxy:
    if obj.get("format") != PROXY_FORMAT:
        raise DataError(f"not a proxy file (format={obj.get('format')!r})")
    if obj.get("version") != PROXY_VERSION:
        raise DataError(f"unsupported proxy version {obj.get('version')!r}")
    return ForwardProxy(
        model=forest_from_dict(obj["model"]),
        target_mode=obj["target_mode"],
        binning=EntropyBinning.from_dict(obj["binning"]) if obj["binning"] is not None else None,
        train_mse=float(obj["train_mse"]),
    )


def save_proxy(proxy: ForwardProxy, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(proxy_to_dict(proxy), fh, separators=(",", ":"))
        fh.write("\n")


def load_proxy(path) -> ForwardProxy:
    with open(path, "r", encoding="utf-8") as fh:
        return proxy_from_dict(json.load(fh))
