"""Random forests (classifier and regressor) with reproducible randomness.

Both the deferral model and the forward proxy are bagged CART ensembles:
Gini impurity for classification, variance reduction for regression, and a
fresh random subset of ceil(sqrt(m)) features at every split. Randomness is
counter-based: tree ``t`` draws from ``SeedSequence(seed, spawn_key=(t,))``,
so results do not depend on training order and trees could be grown in
parallel. Bootstrap indices are drawn over row positions after a canonical
sort by row id, which makes fitted models independent of input file order.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from ._tree import grow_tree, add_tree_predictions
from .errors import DataError, UsageError

FOREST_FORMAT = "cascadekit-forest"
FOREST_VERSION = 1


@dataclass(eq=False)
class FeatureMatrix:
    """Rectangular feature rows aligned to record ids."""

    ids: list[str]
    X: np.ndarray

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"feature matrix must be 2-D, got shape {self.X.shape}")
        if len(self.ids) != self.X.shape[0]:
            raise DataError(f"{len(self.ids)} ids for {self.X.shape[0]} feature rows")
        if not np.all(np.isfinite(self.X)):
            raise DataError("feature matrix contains non-finite entries")


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int | None = None  # None = grow to purity
    min_leaf: int = 1
    features_per_split: int | None = None  # None = ceil(sqrt(m))
    seed: int = 0


@dataclass(eq=False)
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray


@dataclass(eq=False)
class ForestModel:
    kind: str  # "classifier" | "regressor"
    trees: list[Tree]
    n_features: int
    config: ForestConfig


def derive_seed(seed: int, key: int) -> int:
    """Independent child seed for sub-task ``key`` (fold index, stage, ...)."""
    return int(np.random.SeedSequence(seed, spawn_key=(key,)).generate_state(1)[0])


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(tree_index,)))


def bootstrap_indices(n: int, config: ForestConfig, tree_index: int) -> np.ndarray:
    """The bootstrap sample tree ``tree_index`` was grown on (row positions
    after canonical sort). Recomputable, so it is not stored in the model."""
    rng = _tree_rng(config.seed, tree_index)
    return rng.integers(0, n, size=n, dtype=np.int64)


def train_forest(fm: FeatureMatrix, y, kind: str, config: ForestConfig | None = None) -> ForestModel:
    """Fit a bagged forest on ``fm``; deterministic given ``config.seed``."""
    if kind not in ("classifier", "regressor"):
        raise UsageError(f"unknown forest kind {kind!r}")
    config = config or ForestConfig()
    y = np.asarray(y, dtype=np.float64)
    n, m = fm.X.shape
    if n < 2:
        raise DataError(f"need at least 2 training rows, got {n}")
    if m < 1:
        raise DataError("feature matrix has zero columns")
    if y.shape != (n,):
        raise DataError(f"{y.shape[0] if y.ndim == 1 else y.shape} targets for {n} rows")
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite entries")
    if kind == "classifier" and not np.all((y == 0.0) | (y == 1.0)):
        raise DataError("classifier targets must be 0 or 1")
    if config.n_trees < 1:
        raise UsageError(f"n_trees must be >= 1, got {config.n_trees}")
    if config.min_leaf < 1:
        raise UsageError(f"min_leaf must be >= 1, got {config.min_leaf}")

    order = sorted(range(n), key=lambda i: fm.ids[i])
    order = np.asarray(order, dtype=np.int64)
    Xs = np.ascontiguousarray(fm.X[order])
    ys = y[order]

    k = config.features_per_split or math.ceil(math.sqrt(m))
    k = min(k, m)
    max_depth = -1 if config.max_depth is None else config.max_depth
    cap = 2 * n + 1
    is_classifier = kind == "classifier"

    trees: list[Tree] = []
    for t in range(config.n_trees):
        rng = _tree_rng(config.seed, t)
        boot = rng.integers(0, n, size=n, dtype=np.int64)
        feat_rand = rng.integers(0, 2**63, size=(cap, k), dtype=np.uint64)
        feature, threshold, left, right, value = grow_tree(
            Xs, ys, boot, feat_rand, k, config.min_leaf, max_depth, is_classifier
        )
        trees.append(Tree(feature, threshold, left, right, value))
    return ForestModel(kind=kind, trees=trees, n_features=m, config=config)


def predict(model: ForestModel, X) -> np.ndarray:
    """Mean of per-tree leaf values: class-1 probability or regression mean."""
    if isinstance(X, FeatureMatrix):
        X = X.X
    X = np.ascontiguousarray(np.asarray(X, dtype=np.float64))
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise DataError(f"model expects {model.n_features} features, got {X.shape[1]}")
    out = np.zeros(X.shape[0], dtype=np.float64)
    for tree in model.trees:
        add_tree_predictions(X, tree.feature, tree.threshold, tree.left, tree.right, tree.value, out)
    return out / len(model.trees)


def oob_predictions(model: ForestModel, fm: FeatureMatrix) -> np.ndarray:
    """Out-of-bag prediction per row (NaN where a row was in every bootstrap).

    ``fm`` must be the training matrix; bootstrap membership is recomputed
    from the model's seed over the canonical row order.
    """
    n = fm.X.shape[0]
    order = np.asarray(sorted(range(n), key=lambda i: fm.ids[i]), dtype=np.int64)
    Xs = np.ascontiguousarray(fm.X[order])
    sums = np.zeros(n)
    counts = np.zeros(n)
    for t, tree in enumerate(model.trees):
        boot = bootstrap_indices(n, model.config, t)
        in_bag = np.zeros(n, dtype=bool)
        in_bag[boot] = True
        oob = ~in_bag
        if not oob.any():
            continue
        part = np.zeros(int(oob.sum()))
        add_tree_predictions(
            np.ascontiguousarray(Xs[oob]),
            tree.feature, tree.threshold, tree.left, tree.right, tree.value,
            part,
        )
        sums[oob] += part
        counts[oob] += 1
    with np.errstate(invalid="ignore"):
        preds_sorted = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    out = np.empty(n)
    out[order] = preds_sorted
    return out


def forest_to_dict(model: ForestModel) -> dict:
    return {
        "format": FOREST_FORMAT,
        "version": FOREST_VERSION,
        "kind": model.kind,
        "n_features": model.n_features,
        "config": asdict(model.config),
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "value": t.value.tolist(),
            }
            for t in model.trees
        ],
    }


def forest_from_dict(obj: dict) -> ForestModel:
    if obj.get("format") != FOREST_FORMAT:
        raise DataError(f"not a forest file (format={obj.get('format')!r})")
    if obj.get("version") != FOREST_VERSION:
        raise DataError(f"unsupported forest version {obj.get('version')!r}")
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int64),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int64),
            right=np.asarray(t["right"], dtype=np.int64),
            value=np.asarray(t["value"], dtype=np.float64),
        )
        for t in obj["trees"]
    ]
    return ForestModel(
        kind=obj["kind"],
        trees=trees,
        n_features=int(obj["n_features"]),
        config=ForestConfig(**obj["config"]),
    )


def save_forest(model: ForestModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(forest_to_dict(model), fh, separators=(",", ":"))
        fh.write("\n")


def load_forest(path) -> ForestModel:
    with open(path, "r", encoding="utf-8") as fh:
        return forest_from_dict(json.load(fh))


def make_leaf_tree(leaf_value: float) -> Tree:
    """A single-leaf tree; handy for hand-built models."""
    return Tree(
        feature=np.asarray([-1], dtype=np.int64),
        threshold=np.asarray([0.0]),
        left=np.asarray([-1], dtype=np.int64),
        right=np.asarray([-1], dtype=np.int64),
        value=np.asarray([float(leaf_value)]),
    )


def make_stump_tree(feature: int, threshold: float, left_value: float, right_value: float) -> Tree:
    """A depth-1 tree: x[feature] <= threshold -> left_value, else right_value."""
    return Tree(
        feature=np.asarray([feature, -1, -1], dtype=np.int64),
        threshold=np.asarray([float(threshold), 0.0, 0.0]),
        left=np.asarray([1, -1, -1], dtype=np.int64),
        right=np.asarray([2, -1, -1], dtype=np.int64),
        value=np.asarray([0.0, float(left_value), float(right_value)]),
    )
