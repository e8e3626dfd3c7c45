import numpy as np
import pytest

from cascadekit.deferral import DeferralScores, train_deferral
from cascadekit.errors import DataError, UsageError
from cascadekit.evaluation import (
    CostModel,
    DeferralCurve,
    auc,
    bootstrap_auc_ci,
    cost_reduction,
    deferral_curve,
    deferred_prompt_length,
    large_accuracy,
    oracle_curve,
    rate_to_match,
    save_curve,
    small_accuracy,
)
from cascadekit.forest import ForestConfig
from cascadekit.records import Dataset, assign_folds
from cascadekit.proxy import out_of_fold_forward_values
from cascadekit.synth import WorldConfig, generate_world

from brute import brute_trapezoid
from factories import make_dataset, make_record


def hand_dataset():
    """n=4: small correct on r0,r1; large correct everywhere."""
    records = []
    for i, small_right in enumerate([True, True, False, False]):
        true = 1
        logits = np.zeros((2, 4))
        logits[1, true if small_right else 3] = 4.0
        probs = np.asarray([0.04, 0.88, 0.04, 0.04])
        records.append(
            make_record(
                rid=f"r{i}", layer_ids=(0, 8), true_label=true, logits=logits,
                large_probs=probs, prompt_length=10 * (i + 1),
            )
        )
    return Dataset.from_records(records)


def scores_for(ds, values, method="maxprob"):
    return DeferralScores(
        method, ds.ids, np.asarray(values, dtype=float), np.full(len(ds), -1, dtype=np.int64)
    )


class TestDeferralCurve:
    def test_hand_case(self):
        ds = hand_dataset()
        s = scores_for(ds, [0.1, 0.2, 0.9, 0.8])  # small-wrong pair deferred first
        curve = deferral_curve(s, ds)
        assert np.array_equal(curve.rates, [0.0, 0.25, 0.5, 0.75, 1.0])
        assert curve.accuracies == pytest.approx([0.5, 0.75, 1.0, 1.0, 1.0], abs=0)

    def test_endpoints_are_model_accuracies(self, small_world):
        s = train_deferral(small_world, "maxprob")
        curve = deferral_curve(s, small_world)
        assert curve.accuracies[0] == small_accuracy(small_world)
        assert curve.accuracies[-1] == large_accuracy(small_world)

    def test_rates_strictly_increasing(self, small_world):
        curve = deferral_curve(train_deferral(small_world, "rand", seed=1), small_world)
        assert np.all(np.diff(curve.rates) > 0)

    def test_requires_large_outputs(self):
        ds = make_dataset(n=6, with_large=False)
        s = scores_for(ds, np.linspace(0, 1, 6))
        with pytest.raises(DataError):
            deferral_curve(s, ds)


class TestAuc:
    def test_constant_curve(self):
        curve = DeferralCurve("x", np.linspace(0, 1, 11), np.full(11, 0.75))
        assert auc(curve, 0.2) == pytest.approx(0.15, abs=1e-12)

    def test_straight_line(self):
        curve = DeferralCurve("x", np.linspace(0, 1, 101), np.linspace(0.7, 0.9, 101))
        assert auc(curve, 1.0) == pytest.approx(0.8, abs=1e-12)

    def test_hand_curve_value(self):
        # trapezoid over (0,.5)(.25,.75)(.5,1)(.75,1)(1,1):
        # 0.15625 + 0.21875 + 0.25 + 0.25 = 0.875
        ds = hand_dataset()
        s = scores_for(ds, [0.1, 0.2, 0.9, 0.8])
        curve = deferral_curve(s, ds)
        assert auc(curve, 1.0) == pytest.approx(0.875, abs=1e-12)
        expected = brute_trapezoid(list(curve.rates), list(curve.accuracies))
        assert auc(curve, 1.0) == pytest.approx(expected, abs=1e-12)

    def test_additivity(self, small_world):
        curve = deferral_curve(train_deferral(small_world, "maxprob"), small_world)
        total = auc(curve, 1.0)
        assert total == pytest.approx(auc(curve, 0.4) + (total - auc(curve, 0.4)), abs=1e-12)
        # segment sums over a fractional cut equal the full integral
        assert auc(curve, 0.37) + (auc(curve, 1.0) - auc(curve, 0.37)) == pytest.approx(total, abs=1e-12)

    def test_upper_out_of_range(self):
        curve = DeferralCurve("x", np.linspace(0, 1, 5), np.full(5, 0.5))
        with pytest.raises(UsageError):
            auc(curve, 0.0)
        with pytest.raises(UsageError):
            auc(curve, 1.2)


class TestOracleCurve:
    def test_all_gains_rises_then_flat(self):
        records = []
        for i in range(5):
            logits = np.zeros((2, 4))
            logits[1, 2] = 4.0  # small predicts 2, true is 1
            probs = np.asarray([0.05, 0.85, 0.05, 0.05])
            records.append(make_record(rid=f"g{i}", layer_ids=(0, 8), true_label=1,
                                        logits=logits, large_probs=probs))
        ds = Dataset.from_records(records)
        curve = oracle_curve(ds)
        assert curve.accuracies == pytest.approx([0.0, 0.2, 0.4, 0.6, 0.8, 1.0], abs=0)

    def test_no_gains_no_losses_flat(self):
        records = []
        for i in range(4):
            logits = np.zeros((2, 4))
            logits[1, 1] = 4.0
            probs = np.asarray([0.05, 0.85, 0.05, 0.05])
            records.append(make_record(rid=f"t{i}", layer_ids=(0, 8), true_label=1,
                                        logits=logits, large_probs=probs))
        ds = Dataset.from_records(records)
        curve = oracle_curve(ds)
        assert np.all(curve.accuracies == 1.0)

    @pytest.mark.parametrize("seed", range(4))
    def test_dominates_random_scores(self, seed):
        rng = np.random.default_rng(seed)
        ds = make_dataset(n=50, seed=seed)
        oc = oracle_curve(ds)
        for trial in range(3):
            s = scores_for(ds, rng.random(50))
            curve = deferral_curve(s, ds)
            assert np.all(oc.accuracies >= curve.accuracies - 1e-15)


class TestRateToMatch:
    def test_identical_curves(self, small_world):
        curve = deferral_curve(train_deferral(small_world, "maxprob"), small_world)
        r1 = rate_to_match(curve, curve, 0.2)
        assert r1 is not None and r1 <= 0.2

    def test_hand_case(self):
        n = 10
        rates = np.linspace(0, 1, n + 1)
        slow = DeferralCurve("b", rates, np.linspace(0.5, 0.9, n + 1))
        fast_acc = np.minimum(0.5 + 2 * np.linspace(0, 1, n + 1) * 0.4, 0.9)
        fast = DeferralCurve("a", rates, fast_acc)
        # slow reaches 0.58 at rate 0.2; fast reaches it by rate 0.1
        assert rate_to_match(fast, slow, 0.2) == pytest.approx(0.1)

    def test_unreachable_returns_none(self):
        rates = np.linspace(0, 1, 5)
        low = DeferralCurve("a", rates, np.full(5, 0.4))
        high = DeferralCurve("b", rates, np.full(5, 0.9))
        assert rate_to_match(low, high, 0.5) is None


class TestCostReduction:
    def test_table_values(self):
        cm = CostModel(70.0 / 13.0)
        assert cost_reduction(0.2, 0.1407, cm) == pytest.approx(0.154, abs=0.001)
        assert cost_reduction(0.4, 0.1511, cm) == pytest.approx(0.425, abs=0.001)
        assert cost_reduction(0.2, 0.0864, cm) == pytest.approx(0.294, abs=0.001)

    def test_equal_rates_zero(self):
        assert cost_reduction(0.3, 0.3, CostModel()) == 0.0

    def test_negative_when_r1_larger(self):
        assert cost_reduction(0.2, 0.3, CostModel()) < 0.0

    def test_invalid_ratio(self):
        with pytest.raises(UsageError):
            CostModel(0.0)


class TestBootstrap:
    def test_self_comparison_not_significant(self, small_world):
        s = train_deferral(small_world, "maxprob")
        res = bootstrap_auc_ci(s, s, small_world, upper=0.2, n_resamples=200, seed=3)
        assert res.mean == 0.0
        assert not res.significant

    def test_deterministic(self, small_world):
        a = train_deferral(small_world, "maxprob")
        b = train_deferral(small_world, "rand", seed=9)
        r1 = bootstrap_auc_ci(a, b, small_world, upper=0.4, n_resamples=100, seed=4)
        r2 = bootstrap_auc_ci(a, b, small_world, upper=0.4, n_resamples=100, seed=4)
        assert (r1.mean, r1.lo, r1.hi, r1.significant) == (r2.mean, r2.lo, r2.hi, r2.significant)

    def test_built_in_advantage_is_significant(self):
        ds = generate_world(
            WorldConfig(n=2000, a_small=0.7, a_large=0.85, layer_signal=1.2, embed_signal=1.5, seed=17)
        )
        ds = assign_folds(ds, 5, seed=1)
        fv = out_of_fold_forward_values(ds, k_folds=5, config=ForestConfig(n_trees=40, min_leaf=10, seed=2))
        s_bidir = train_deferral(ds, "bidir", forward_values=fv, k_folds=5, seed=3,
                                 forest=ForestConfig(n_trees=60, min_leaf=5))
        s_max = train_deferral(ds, "maxprob")
        res = bootstrap_auc_ci(s_bidir, s_max, ds, upper=0.2, n_resamples=500, seed=5)
        assert res.significant and res.lo > 0


class TestPromptLength:
    def test_equal_lengths(self):
        ds = hand_dataset()
        s = scores_for(ds, [0.4, 0.3, 0.2, 0.1])
        # lengths are 10,20,30,40; defer all -> dataset mean
        assert deferred_prompt_length(s, ds, 1.0) == pytest.approx(25.0)

    def test_hand_ordering(self):
        records = [
            make_record(rid="a", layer_ids=(0, 8), logits=np.zeros((2, 4)),
                        large_probs=[0.7, 0.1, 0.1, 0.1], prompt_length=10),
            make_record(rid="b", layer_ids=(0, 8), logits=np.zeros((2, 4)),
                        large_probs=[0.7, 0.1, 0.1, 0.1], prompt_length=20),
            make_record(rid="c", layer_ids=(0, 8), logits=np.zeros((2, 4)),
                        large_probs=[0.7, 0.1, 0.1, 0.1], prompt_length=30),
        ]
        ds = Dataset.from_records(records)
        s = scores_for(ds, [0.9, 0.1, 0.8])
        assert deferred_prompt_length(s, ds, 2 / 3) == pytest.approx(20.0)

    def test_missing_lengths(self):
        ds = make_dataset(n=4)
        ds.records[2].prompt_length = None
        s = scores_for(ds, [0.1, 0.2, 0.3, 0.4])
        with pytest.raises(DataError, match="prompt_length"):
            deferred_prompt_length(s, ds, 0.5)


def test_curve_export(tmp_path, small_world):
    curve = deferral_curve(train_deferral(small_world, "maxprob"), small_world)
    path = tmp_path / "curve.tsv"
    save_curve(curve, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "rate\taccuracy"
    assert len(lines) == len(small_world) + 2
    rate, acc = lines[1].split("\t")
    assert float(rate) == 0.0
    assert float(acc) == curve.accuracies[0]
