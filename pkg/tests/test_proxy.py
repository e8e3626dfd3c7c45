import numpy as np
import pytest

from cascadekit.calibration import auroc
from cascadekit.errors import DataError, UsageError
from cascadekit.forest import ForestConfig, ForestModel, make_leaf_tree
from cascadekit.proxy import (
    build_forward_targets,
    forward_confidence,
    forward_confidences,
    load_proxy,
    oracle_forward_confidence,
    out_of_fold_forward_values,
    save_proxy,
    subsample_proxy_train,
    train_forward_proxy,
    ForwardProxy,
)
from cascadekit.records import Dataset, assign_folds
from cascadekit.synth import WorldConfig, generate_world
from cascadekit.evaluation import large_correct_vector

from brute import brute_bin_accuracies, brute_bin_index, brute_entropy
from factories import make_dataset, make_record


class TestTargets:
    def test_all_correct_gives_all_ones(self):
        records = []
        rng = np.random.default_rng(0)
        for i in range(20):
            true = int(rng.integers(0, 4))
            probs = np.full(4, 0.05)
            probs[true] = 0.85
            probs += rng.random(4) * 1e-3
            probs /= probs.sum()
            records.append(
                make_record(rid=f"r{i:03d}", true_label=true, large_probs=probs, embedding=rng.standard_normal(3))
            )
        ds = Dataset.from_records(records)
        pairs, binning = build_forward_targets(ds, "binned-accuracy")
        assert all(t == 1.0 for _, t in pairs)
        assert binning is not None

    def test_individual_mode_is_max_prob(self):
        ds = make_dataset(n=12, seed=1)
        pairs, binning = build_forward_targets(ds, "individual-probability")
        assert binning is None
        for (rid, t), r in zip(pairs, ds.records):
            assert t == pytest.approx(float(r.large_final_probs.max()), abs=1e-15)

    def test_binned_targets_match_brute_force(self):
        rng = np.random.default_rng(2)
        records = []
        for i in range(100):
            true = int(rng.integers(0, 4))
            sharp = rng.random() < 0.6
            raw = rng.random(4) + (8.0 if sharp else 0.3) * np.eye(4)[true if sharp else rng.integers(0, 4)]
            probs = raw / raw.sum()
            records.append(
                make_record(rid=f"r{i:03d}", true_label=true, large_probs=probs, embedding=rng.standard_normal(3))
            )
        ds = Dataset.from_records(records)
        pairs, _ = build_forward_targets(ds, "binned-accuracy")
        entropies = [brute_entropy(list(r.large_final_probs)) for r in ds.records]
        correct = [1.0 if int(np.argmax(r.large_final_probs)) == r.true_label else 0.0 for r in ds.records]
        accs = brute_bin_accuracies(entropies, correct)
        lo, hi = min(entropies), max(entropies)
        for (rid, t), h in zip(pairs, entropies):
            assert t == pytest.approx(accs[brute_bin_index(h, lo, hi, 10)], abs=1e-12)

    def test_missing_large_probs_rejected(self):
        ds = make_dataset(n=12, with_large=False)
        with pytest.raises(DataError, match="large_final_probs"):
            build_forward_targets(ds, "binned-accuracy")


class TestTrainAndPredict:
    def test_constant_targets_predict_constant(self):
        rng = np.random.default_rng(3)
        records = []
        for i in range(30):
            probs = np.full(4, 0.25)  # uniform: every prediction "wrong" unless argmax==true
            records.append(
                make_record(rid=f"r{i:03d}", true_label=1, large_probs=probs, embedding=rng.standard_normal(4))
            )
        ds = Dataset.from_records(records)
        # all large predictions identical (argmax index 0 vs true 1): binned targets all 0
        proxy = train_forward_proxy(ds, config=ForestConfig(n_trees=10, seed=4))
        vals = forward_confidences(proxy, ds)
        assert np.allclose(vals, 0.0, atol=1e-12)

    def test_missing_embeddings_rejected(self):
        ds = make_dataset(n=12, with_embedding=False)
        with pytest.raises(DataError, match="embedding"):
            train_forward_proxy(ds)

    def test_zero_dim_embeddings_rejected(self):
        records = [
            make_record(rid=f"r{i}", large_probs=[0.7, 0.1, 0.1, 0.1], embedding=np.zeros(0))
            for i in range(12)
        ]
        ds = Dataset.from_records(records)
        with pytest.raises(DataError, match="dimension 0"):
            train_forward_proxy(ds)

    def test_forward_confidence_is_input_only(self):
        ds = make_dataset(n=20, seed=5)
        proxy = train_forward_proxy(ds, config=ForestConfig(n_trees=10, seed=6))
        r = ds.records[3]
        with_large = forward_confidence(proxy, r)
        stripped = make_record(
            rid=r.id,
            true_label=0,
            layer_ids=r.layer_ids,
            logits=np.zeros_like(r.small_layer_logits),
            large_probs=None,
            embedding=r.input_embedding,
        )
        assert forward_confidence(proxy, stripped) == with_large

    def test_clipping_of_out_of_range_leaves(self):
        model = ForestModel(
            kind="regressor", trees=[make_leaf_tree(1.2)], n_features=3, config=ForestConfig(n_trees=1)
        )
        proxy = ForwardProxy(model=model, target_mode="individual-probability", binning=None, train_mse=0.0)
        r = make_record(embedding=[0.1, 0.2, 0.3])
        assert forward_confidence(proxy, r) == 1.0

    def test_binned_targets_take_few_distinct_values(self):
        ds = make_dataset(n=60, seed=7)
        pairs, _ = build_forward_targets(ds, "binned-accuracy")
        assert len({t for _, t in pairs}) <= 10

    def test_embedding_signal_recovers_large_correctness(self):
        # embedding coordinate 0 drives large-model correctness
        ds = generate_world(WorldConfig(n=2500, a_small=0.7, a_large=0.8, layer_signal=0.5, embed_signal=2.5, seed=8))
        ds = assign_folds(ds, 5, seed=9)
        values = out_of_fold_forward_values(ds, k_folds=5, config=ForestConfig(n_trees=60, min_leaf=10, seed=10))
        score = auroc(values, large_correct_vector(ds))
        assert score is not None and score > 0.7

    def test_serialization_round_trip(self, tmp_path):
        ds = make_dataset(n=20, seed=11)
        proxy = train_forward_proxy(ds, config=ForestConfig(n_trees=8, seed=12))
        path = tmp_path / "proxy.json"
        save_proxy(proxy, path)
        back = load_proxy(path)
        assert np.array_equal(forward_confidences(proxy, ds), forward_confidences(back, ds))
        assert back.target_mode == proxy.target_mode
        assert back.train_mse == proxy.train_mse


class TestOracle:
    def test_values(self):
        assert oracle_forward_confidence(make_record(large_probs=[0.6, 0.3, 0.05, 0.05])) == 0.6
        assert oracle_forward_confidence(make_record(large_probs=[0.25] * 4)) == 0.25
        assert oracle_forward_confidence(make_record(large_probs=[0, 0, 1.0, 0])) == 1.0

    def test_missing_probs(self):
        with pytest.raises(DataError, match="large_final_probs"):
            oracle_forward_confidence(make_record())

    def test_bounds(self):
        ds = make_dataset(n=30, seed=13)
        for r in ds.records:
            v = oracle_forward_confidence(r)
            assert 1.0 / r.n_labels - 1e-12 <= v <= 1.0


class TestSubsample:
    def test_full_fraction_is_identity(self):
        ds = make_dataset(n=15)
        assert subsample_proxy_train(ds, 1.0, seed=1) is ds

    def test_quarter_of_400(self):
        ds = make_dataset(n=400)
        sub = subsample_proxy_train(ds, 0.25, seed=2)
        assert len(sub) == 100

    def test_deterministic(self):
        ds = make_dataset(n=50)
        a = subsample_proxy_train(ds, 0.4, seed=3)
        b = subsample_proxy_train(ds, 0.4, seed=3)
        assert a.ids == b.ids

    def test_fraction_out_of_range(self):
        ds = make_dataset(n=10)
        with pytest.raises(UsageError):
            subsample_proxy_train(ds, 0.0, seed=1)
        with pytest.raises(UsageError):
            subsample_proxy_train(ds, 1.5, seed=1)
