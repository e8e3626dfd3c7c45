import math

import pytest

from cascadekit.calibration import auroc
from cascadekit.errors import UsageError
from cascadekit.evaluation import large_accuracy, large_correct_vector, small_accuracy
from cascadekit.forest import ForestConfig
from cascadekit.proxy import out_of_fold_forward_values
from cascadekit.records import assign_folds, load_dataset, save_dataset, validate_record
from cascadekit.synth import WorldConfig, generate_world


def test_records_pass_all_invariants():
    ds = generate_world(WorldConfig(n=50, seed=0))
    shape = ds.shape()
    for r in ds.records:
        assert validate_record(r, shape) == []
    assert ds.embedding_dim == 8
    assert len(ds.layer_ids) == 5


def test_target_accuracies_within_binomial_bounds():
    for seed in (1, 2):
        cfg = WorldConfig(n=8000, a_small=0.72, a_large=0.86, embed_signal=1.5, seed=seed)
        ds = generate_world(cfg)
        for got, want in ((small_accuracy(ds), 0.72), (large_accuracy(ds), 0.86)):
            sigma = math.sqrt(want * (1 - want) / cfg.n)
            assert abs(got - want) < 3 * sigma


def test_near_perfect_small_accuracy():
    ds = generate_world(WorldConfig(n=1000, a_small=1.0 - 1e-9, seed=3))
    assert small_accuracy(ds) >= 0.99


def test_serialization_is_byte_identical(tmp_path):
    cfg = WorldConfig(n=60, seed=4)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_dataset(generate_world(cfg), p1)
    save_dataset(generate_world(cfg), p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert len(load_dataset(p1)) == 60


def test_no_embedding_signal_means_uninformative_proxy():
    ds = generate_world(WorldConfig(n=5000, a_small=0.7, a_large=0.85, embed_signal=0.0, seed=5))
    ds = assign_folds(ds, 5, seed=1)
    values = out_of_fold_forward_values(ds, k_folds=5, config=ForestConfig(n_trees=40, min_leaf=10, seed=2))
    score = auroc(values, large_correct_vector(ds))
    assert abs(score - 0.5) < 0.05


def test_config_validation():
    with pytest.raises(UsageError):
        generate_world(WorldConfig(n=0))
    with pytest.raises(UsageError):
        generate_world(WorldConfig(n=10, a_small=1.0))
    with pytest.raises(UsageError):
        generate_world(WorldConfig(n=10, n_labels=1))
    with pytest.raises(UsageError):
        generate_world(WorldConfig(n=10, layer_signal=-0.5))


def test_two_label_worlds_work():
    ds = generate_world(WorldConfig(n=200, n_labels=2, layers=3, seed=6))
    assert ds.n_labels == 2
    for r in ds.records[:20]:
        assert r.small_layer_logits.shape == (3, 2)
        assert abs(float(r.large_final_probs.sum()) - 1.0) < 1e-9


def test_prompt_lengths_positive():
    ds = generate_world(WorldConfig(n=300, seed=7))
    assert all(r.prompt_length is not None and r.prompt_length > 0 for r in ds.records)
