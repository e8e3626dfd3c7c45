import json

import numpy as np
import pytest

from cascadekit.errors import DataError
from cascadekit.forest import (
    FeatureMatrix,
    ForestConfig,
    ForestModel,
    forest_from_dict,
    forest_to_dict,
    make_stump_tree,
    oob_predictions,
    predict,
    save_forest,
    load_forest,
    train_forest,
)


def separable_data(n=200, seed=0):
    # two clusters with a clear gap around the 0.5 threshold
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    x = np.where(u < 0.5, u * 0.9, 0.55 + (u - 0.5) * 0.9)
    y = (x > 0.5).astype(float)
    fm = FeatureMatrix(ids=[f"r{i:04d}" for i in range(n)], X=x[:, None])
    return fm, y


def test_separable_feature_is_learned():
    fm, y = separable_data()
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=50, seed=1))
    preds = predict(model, fm)
    assert np.all(preds[y == 1] >= 0.9)
    assert np.all(preds[y == 0] <= 0.1)


def test_constant_targets_give_constant_zero():
    fm, _ = separable_data(n=40)
    model = train_forest(fm, np.zeros(40), "classifier", ForestConfig(n_trees=20, seed=2))
    assert np.all(predict(model, fm) == 0.0)


def test_same_seed_is_bit_identical():
    fm, y = separable_data(n=120, seed=3)
    p1 = predict(train_forest(fm, y, "classifier", ForestConfig(n_trees=30, seed=7)), fm)
    p2 = predict(train_forest(fm, y, "classifier", ForestConfig(n_trees=30, seed=7)), fm)
    assert np.array_equal(p1, p2)


def test_row_order_does_not_matter():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((150, 6))
    y = (X[:, 2] > 0).astype(float)
    ids = [f"r{i:04d}" for i in range(150)]
    fm = FeatureMatrix(ids=ids, X=X)
    base = predict(train_forest(fm, y, "classifier", ForestConfig(n_trees=25, seed=5)), X)
    perm = rng.permutation(150)
    fm_p = FeatureMatrix(ids=[ids[i] for i in perm], X=X[perm])
    shuffled = predict(train_forest(fm_p, y[perm], "classifier", ForestConfig(n_trees=25, seed=5)), X)
    assert np.array_equal(base, shuffled)


def test_regressor_constant_target():
    fm, _ = separable_data(n=60)
    model = train_forest(fm, np.full(60, 0.37), "regressor", ForestConfig(n_trees=40, seed=6))
    preds = predict(model, np.asarray([[0.1], [0.9], [5.0]]))
    assert preds == pytest.approx([0.37, 0.37, 0.37], abs=1e-12)


def test_regressor_predictions_within_target_range():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((200, 4))
    y = X[:, 0] * 2 + rng.standard_normal(200) * 0.1
    fm = FeatureMatrix(ids=[f"r{i:04d}" for i in range(200)], X=X)
    model = train_forest(fm, y, "regressor", ForestConfig(n_trees=30, seed=8))
    preds = predict(model, rng.standard_normal((50, 4)) * 3)
    assert preds.min() >= y.min() - 1e-12
    assert preds.max() <= y.max() + 1e-12


def test_hand_built_stump():
    # x0 < 2 -> 0.2, else 0.8
    tree = make_stump_tree(feature=0, threshold=2.0, left_value=0.2, right_value=0.8)
    model = ForestModel(kind="classifier", trees=[tree], n_features=1, config=ForestConfig(n_trees=1))
    assert predict(model, np.asarray([[5.0]]))[0] == 0.8
    assert predict(model, np.asarray([[1.0]]))[0] == 0.2


def test_classifier_outputs_bounded():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((100, 3))
    y = (rng.random(100) > 0.5).astype(float)
    fm = FeatureMatrix(ids=[f"r{i:04d}" for i in range(100)], X=X)
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=20, seed=10))
    preds = predict(model, rng.standard_normal((40, 3)))
    assert np.all((preds >= 0.0) & (preds <= 1.0))


def test_feature_count_mismatch():
    fm, y = separable_data(n=30)
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=5, seed=11))
    with pytest.raises(DataError, match="features"):
        predict(model, np.zeros((3, 2)))


def test_classifier_rejects_non_binary_targets():
    fm, _ = separable_data(n=30)
    with pytest.raises(DataError, match="0 or 1"):
        train_forest(fm, np.linspace(0, 2, 30), "classifier")


def test_oob_error_below_ten_percent():
    rng = np.random.default_rng(12)
    X = rng.standard_normal((500, 2))
    y = (X[:, 0] + 0.2 * X[:, 1] > 0).astype(float)
    fm = FeatureMatrix(ids=[f"r{i:04d}" for i in range(500)], X=X)
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=80, seed=13))
    oob = oob_predictions(model, fm)
    valid = ~np.isnan(oob)
    err = np.mean((oob[valid] > 0.5) != y[valid])
    assert err < 0.10


def test_serialization_round_trip_exact(tmp_path):
    rng = np.random.default_rng(14)
    X = rng.standard_normal((80, 5))
    y = (X[:, 1] > 0).astype(float)
    fm = FeatureMatrix(ids=[f"r{i:04d}" for i in range(80)], X=X)
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=12, seed=15))
    path = tmp_path / "forest.json"
    save_forest(model, path)
    back = load_forest(path)
    assert np.array_equal(predict(model, X), predict(back, X))
    assert forest_to_dict(model) == forest_to_dict(back)
    # format version is checked
    obj = json.loads(path.read_text())
    obj["format"] = "something-else"
    with pytest.raises(DataError, match="format"):
        forest_from_dict(obj)


def test_single_feature_constant_becomes_leaf():
    fm = FeatureMatrix(ids=["a", "b", "c", "d"], X=np.ones((4, 1)))
    y = np.asarray([0.0, 1.0, 0.0, 1.0])
    model = train_forest(fm, y, "classifier", ForestConfig(n_trees=10, seed=16))
    preds = predict(model, np.ones((2, 1)))
    assert np.all((preds >= 0.0) & (preds <= 1.0))
