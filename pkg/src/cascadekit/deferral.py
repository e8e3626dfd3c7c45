"""Gain targets, the deferral model, thresholds, and the cascade executor.

All methods emit scores where higher means defer first. Trained methods
(backint, bidir, bidir_oracle) fit a forest classifier on the gain target --
small model wrong AND large model right -- under k-fold cross-validation, so
every record is scored by a model that never saw its label. MaxProb and
EntBin are negated small-model confidences; Rand is a seeded uniform draw.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .calibration import EntropyBinning, bin_target, bin_targets, fit_entropy_bins
from .confidence import (
    backward_feature_matrix,
    final_distributions,
    final_entropies,
    layer_distributions,
)
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
from .proxy import (
    ForwardProxy,
    forward_confidence,
    forward_confidences,
    oracle_forward_confidence,
    oracle_forward_confidences,
    proxy_from_dict,
    proxy_to_dict,
)
from .records import Dataset, SampleRecord, fold_indices

METHODS = ("rand", "maxprob", "entbin", "backint", "bidir", "bidir_oracle")
TRAINED_METHODS = ("backint", "bidir", "bidir_oracle")

SCORES_FORMAT = "cascadekit-scores"
SCORER_FORMAT = "cascadekit-scorer"
ARTIFACT_VERSION = 1


@dataclass(eq=False)
class DeferralScores:
    """One defer-first score per record, with fold provenance."""

    method: str
    ids: list[str]
    scores: np.ndarray
    folds: np.ndarray  # -1 where no fold applies
    tie_key: np.ndarray | None = None  # secondary sort key (entbin: raw entropy)
    degenerate_folds: tuple[int, ...] = ()

    def __len__(self) -> int:
        return len(self.ids)


def gain_labels(ds: Dataset) -> np.ndarray:
    """1 iff the small model is wrong and the large model is right."""
    small_pred = final_distributions(ds).argmax(axis=1)
    for r in ds.records:
        if r.large_final_probs is None:
            raise DataError(f"record {r.id!r}: large_final_probs required for gain labels")
    large_pred = np.stack([r.large_final_probs for r in ds.records]).argmax(axis=1)
    true = np.asarray([r.true_label for r in ds.records])
    return ((small_pred != true) & (large_pred == true)).astype(np.int64)


def assemble_features(
    r: SampleRecord,
    method: str,
    proxy: ForwardProxy | None = None,
    forward_value: float | None = None,
) -> np.ndarray:
    """Feature row for one record: the flattened per-layer distributions,
    plus the forward confidence for bi-directional variants. Baselines have
    no learned features and get an empty row."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    if method not in TRAINED_METHODS:
        return np.zeros(0)
    q_flat = layer_distributions(r).q_flat
    if method == "backint":
        return q_flat
    if method == "bidir":
        if forward_value is None:
            if proxy is None:
                raise DataError("bidir features require a forward proxy or forward value")
            forward_value = forward_confidence(proxy, r)
        return np.concatenate([q_flat, [forward_value]])
    return np.concatenate([q_flat, [oracle_forward_confidence(r)]])


def _feature_matrix(ds: Dataset, method: str, forward_values: np.ndarray | None) -> FeatureMatrix:
    q = backward_feature_matrix(ds)
    if method == "backint":
        X = q
    elif method == "bidir":
        X = np.concatenate([q, forward_values[:, None]], axis=1)
    elif method == "bidir_oracle":
        X = np.concatenate([q, oracle_forward_confidences(ds)[:, None]], axis=1)
    else:
        raise UsageError(f"method {method!r} has no feature matrix")
    return FeatureMatrix(ids=ds.ids, X=X)


def _record_folds(ds: Dataset) -> np.ndarray:
    return np.asarray([-1 if r.fold is None else r.fold for r in ds.records], dtype=np.int64)


def train_deferral(
    ds: Dataset,
    method: str,
    proxy: ForwardProxy | None = None,
    *,
    forward_values: np.ndarray | None = None,
    k_folds: int = 5,
    seed: int = 0,
    forest: ForestConfig | None = None,
    n_bins: int = 10,
    entbin_mode: str = "width",
) -> DeferralScores:
    """Out-of-fold deferral scores for ``method`` over the whole dataset."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    n = len(ds)
    ids = ds.ids

    if method == "rand":
        rng = np.random.default_rng(seed)
        return DeferralScores(method, ids, rng.random(n), _record_folds(ds))

    if method == "maxprob":
        scores = 1.0 - final_distributions(ds).max(axis=1)
        return DeferralScores(method, ids, scores, _record_folds(ds))

    folds = fold_indices(ds, k_folds)
    fold_of = _record_folds(ds)

    if method == "entbin":
        h = final_entropies(ds)
        small_correct = (
            final_distributions(ds).argmax(axis=1) == np.asarray([r.true_label for r in ds.records])
        ).astype(np.float64)
        scores = np.empty(n)
        for f, test_idx in enumerate(folds):
            train_mask = np.ones(n, dtype=bool)
            train_mask[test_idx] = False
            binning = fit_entropy_bins(h[train_mask], small_correct[train_mask], n_bins, entbin_mode)
            scores[test_idx] = 1.0 - bin_targets(binning, h[test_idx])
        return DeferralScores(method, ids, scores, fold_of, tie_key=h.copy())

    if method == "bidir" and forward_values is None:
        if proxy is None:
            raise DataError("bidir requires a forward proxy or precomputed forward values")
        forward_values = forward_confidences(proxy, ds)
    fm = _feature_matrix(ds, method, forward_values)
    y = gain_labels(ds)
    scores, degenerate = _oof_classifier_scores(fm, y, folds, seed, forest)
    return DeferralScores(method, ids, scores, fold_of, degenerate_folds=degenerate)


def _oof_classifier_scores(
    fm: FeatureMatrix,
    y: np.ndarray,
    folds: list[np.ndarray],
    seed: int,
    forest: ForestConfig | None,
) -> tuple[np.ndarray, tuple[int, ...]]:
    """Out-of-fold class-1 probabilities of per-fold forests on (fm, y)."""
    n = fm.X.shape[0]
    scores = np.empty(n)
    degenerate: list[int] = []
    base = forest or ForestConfig()
    for f, test_idx in enumerate(folds):
        train_mask = np.ones(n, dtype=bool)
        train_mask[test_idx] = False
        y_train = y[train_mask]
        if y_train.min() == y_train.max():
            degenerate.append(f)  # single-class fold: constant scorer
        sub = FeatureMatrix(
            ids=[fm.ids[i] for i in np.flatnonzero(train_mask)],
            X=fm.X[train_mask],
        )
        model = train_forest(sub, y_train, "classifier", replace(base, seed=derive_seed(seed, f)))
        scores[test_idx] = predict(model, fm.X[test_idx])
    return scores, tuple(degenerate)


def backward_correctness_confidence(
    ds: Dataset,
    k_folds: int = 5,
    seed: int = 0,
    forest: ForestConfig | None = None,
) -> np.ndarray:
    """Out-of-fold P(small model correct) from the layerwise distributions:
    the learned-calibrator view of the backward features, used in the
    calibration report."""
    fm = FeatureMatrix(ids=ds.ids, X=backward_feature_matrix(ds))
    correct = (
        final_distributions(ds).argmax(axis=1) == np.asarray([r.true_label for r in ds.records])
    ).astype(np.int64)
    folds = fold_indices(ds, k_folds)
    scores, _ = _oof_classifier_scores(fm, correct, folds, seed, forest)
    return scores


def deferral_order(scores: DeferralScores) -> np.ndarray:
    """Record positions sorted defer-first: score desc, tie key desc, id asc."""
    ids = np.asarray(scores.ids)
    tie = scores.tie_key if scores.tie_key is not None else np.zeros(len(ids))
    return np.lexsort((ids, -tie, -scores.scores))


def deferred_count(n: int, rate: float) -> int:
    if not (0.0 <= rate <= 1.0):
        raise UsageError(f"deferral rate must lie in [0, 1], got {rate}")
    return min(n, math.ceil(rate * n - 1e-9))


def select_threshold_for_rate(scores: DeferralScores, rate: float) -> float:
    """Score threshold deferring exactly ceil(rate * n) records.

    Under the defer-first ordering the deferred set is the top-k; the
    returned value is the highest non-deferred score (strictly-above
    semantics), so boundary ties are resolved by the ordering, not the
    threshold alone.
    """
    n = len(scores)
    k = deferred_count(n, rate)
    order = deferral_order(scores)
    if k == 0:
        return float(scores.scores.max() + 1.0)
    if k == n:
        return float(scores.scores.min() - 1.0)
    return float(scores.scores[order[k]])


@dataclass
class CascadeConfig:
    """Thresholds tau_1..tau_{K-1} for a K-model cascade."""

    thresholds: tuple[float, ...]

    @property
    def n_models(self) -> int:
        return len(self.thresholds) + 1


@dataclass(eq=False)
class CascadeStage:
    name: str
    predictor: Callable[[SampleRecord], int]
    scorer: Callable[[SampleRecord], float] | None = None  # last stage needs none


def run_cascade(
    r: SampleRecord, config: CascadeConfig, stages: list[CascadeStage]
) -> tuple[int, int]:
    """Walk the cascade for one record: defer past stage j while the stage
    score exceeds tau_j, accept at the first stage that holds. Returns
    (prediction, accepted stage index, 1-based)."""
    if len(stages) < 2:
        raise UsageError("a cascade needs at least 2 stages")
    if len(stages) != config.n_models:
        raise UsageError(
            f"{len(stages)} stages but {config.n_models - 1} thresholds configured"
        )
    j_star = len(stages)
    for j, tau in enumerate(config.thresholds):
        stage = stages[j]
        if stage.scorer is None:
            raise DataError(f"stage {j + 1} ({stage.name}) has no scorer")
        if stage.scorer(r) > tau:
            continue
        j_star = j + 1
        break
    return stages[j_star - 1].predictor(r), j_star


@dataclass(eq=False)
class DeferralScorer:
    """Deployable per-record scorer: the artifact behind the decide endpoint.

    Trained methods carry a forest fitted on the full training set (unlike
    the out-of-fold scores used for evaluation).
    """

    method: str
    forest: ForestModel | None = None
    binning: EntropyBinning | None = None
    proxy: ForwardProxy | None = None
    seed: int = 0

    def score(self, r: SampleRecord) -> float:
        if self.method == "rand":
            digest = hashlib.sha256(f"{self.seed}:{r.id}".encode()).digest()
            return int.from_bytes(digest[:8], "big") / 2.0**64
        bc = layer_distributions(r)
        if self.method == "maxprob":
            return 1.0 - bc.final_max_prob
        if self.method == "entbin":
            if self.binning is None:
                raise DataError("entbin scorer has no fitted binning")
            return 1.0 - bin_target(self.binning, bc.final_entropy)
        if self.forest is None:
            raise DataError(f"{self.method} scorer has no trained model")
        row = assemble_features(r, self.method, proxy=self.proxy)
        return float(predict(self.forest, row.reshape(1, -1))[0])


def build_scorer(
    ds: Dataset,
    method: str,
    proxy: ForwardProxy | None = None,
    *,
    seed: int = 0,
    forest: ForestConfig | None = None,
    n_bins: int = 10,
    entbin_mode: str = "width",
) -> DeferralScorer:
    """Train a deployment scorer on all of ``ds`` (no fold splitting)."""
    if method not in METHODS:
        raise UsageError(f"unknown method {method!r}")
    if method == "rand":
        return DeferralScorer(method, seed=seed)
    if method == "maxprob":
        return DeferralScorer(method)
    if method == "entbin":
        h = final_entropies(ds)
        correct = (
            final_distributions(ds).argmax(axis=1) == np.asarray([r.true_label for r in ds.records])
        ).astype(np.float64)
        return DeferralScorer(method, binning=fit_entropy_bins(h, correct, n_bins, entbin_mode))
    forward_values = None
    if method == "bidir":
        if proxy is None:
            raise DataError("bidir scorer requires a forward proxy")
        forward_values = forward_confidences(proxy, ds)
    fm = _feature_matrix(ds, method, forward_values)
    y = gain_labels(ds)
    base = forest or ForestConfig()
    model = train_forest(fm, y, "classifier", replace(base, seed=seed))
    return DeferralScorer(method, forest=model, proxy=proxy if method == "bidir" else None, seed=seed)


def scores_to_dict(s: DeferralScores) -> dict:
    return {
        "format": SCORES_FORMAT,
        "version": ARTIFACT_VERSION,
        "method": s.method,
        "ids": list(s.ids),
        "scores": s.scores.tolist(),
        "folds": s.folds.tolist(),
        "tie_key": s.tie_key.tolist() if s.tie_key is not None else None,
        "degenerate_folds": list(s.degenerate_folds),
    }


def scores_from_dict(obj: dict) -> DeferralScores:
    if obj.get("format") != SCORES_FORMAT:
        raise DataError(f"not a scores file (format={obj.get('format')!r})")
    return DeferralScores(
        method=obj["method"],
        ids=[str(x) for x in obj["ids"]],
        scores=np.asarray(obj["scores"], dtype=np.float64),
        folds=np.asarray(obj["folds"], dtype=np.int64),
        tie_key=None if obj["tie_key"] is None else np.asarray(obj["tie_key"], dtype=np.float64),
        degenerate_folds=tuple(obj.get("degenerate_folds", ())),
    )


def save_scores(s: DeferralScores, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scores_to_dict(s), fh, separators=(",", ":"))
        fh.write("\n")


def load_scores(path) -> DeferralScores:
    with open(path, "r", encoding="utf-8") as fh:
        return scores_from_dict(json.load(fh))


def export_scores_tsv(s: DeferralScores, path) -> None:
    """Spec'd interchange format: id, method, score, fold."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("id\tmethod\tscore\tfold\n")
        for i, rid in enumerate(s.ids):
            fh.write(f"{rid}\t{s.method}\t{float(s.scores[i])!r}\t{int(s.folds[i])}\n")


def scorer_to_dict(sc: DeferralScorer) -> dict:
    return {
        "format": SCORER_FORMAT,
        "version": ARTIFACT_VERSION,
        "method": sc.method,
        "seed": sc.seed,
        "forest": forest_to_dict(sc.forest) if sc.forest is not None else None,
        "binning": sc.binning.to_dict() if sc.binning is not None else None,
        "proxy": proxy_to_dict(sc.proxy) if sc.proxy is not None else None,
    }


def scorer_from_dict(obj: dict) -> DeferralScorer:
    if obj.get("format") != SCORER_FORMAT:
        raise DataError(f"not a scorer file (format={obj.get('format')!r})")
    return DeferralScorer(
        method=obj["method"],
        seed=int(obj.get("seed", 0)),
        forest=forest_from_dict(obj["forest"]) if obj["forest"] is not None else None,
        binning=EntropyBinning.from_dict(obj["binning"]) if obj["binning"] is not None else None,
        proxy=proxy_from_dict(obj["proxy"]) if obj["proxy"] is not None else None,
    )


def save_scorer(sc: DeferralScorer, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scorer_to_dict(sc), fh, separators=(",", ":"))
        fh.write("\n")


def load_scorer(path) -> DeferralScorer:
    with open(path, "r", encoding="utf-8") as fh:
        return scorer_from_dict(json.load(fh))
