import numpy as np
import pytest
from scipy.special import expit

from cascade_bandits.cascade import RankedAction, expected_cascade_reward
from cascade_bandits.envgen import (
    BanditInstance,
    PriorSpec,
    env_step,
    misspecified_prior,
    sample_beta_instances,
    sample_linear_instance,
    sample_logistic_instance,
)


class TestPriorSpec:
    def test_scalar_broadcast(self):
        a, b = PriorSpec(2.0, 5.0).item_arrays(4)
        np.testing.assert_array_equal(a, np.full(4, 2.0))
        np.testing.assert_array_equal(b, np.full(4, 5.0))

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            PriorSpec(0.0, 1.0)

    def test_round_trip(self):
        spec = PriorSpec(np.array([1.0, 2.0]), 10.0, shift=3)
        again = PriorSpec.from_dict(spec.to_dict())
        for got, want in zip(again.item_arrays(2), spec.item_arrays(2)):
            np.testing.assert_array_equal(got, want)
        assert again.shift == 3


class TestMisspecifiedPrior:
    def test_zero_shift_recovers_truth(self):
        spec = misspecified_prior(0)
        a, b = spec.item_arrays(3)
        np.testing.assert_array_equal(a, np.ones(3))
        np.testing.assert_array_equal(b, np.full(3, 10.0))

    def test_maximal_shift(self):
        a, b = misspecified_prior(8).item_arrays(1)
        assert (a[0], b[0]) == (9.0, 2.0)

    def test_prior_mean_monotone_in_shift(self):
        means = [(1.0 + c) / 11.0 for c in range(9)]
        got = []
        for c in range(9):
            a, b = misspecified_prior(c).item_arrays(1)
            got.append(a[0] / (a[0] + b[0]))
        np.testing.assert_allclose(got, means)

    def test_rejects_out_of_range(self):
        for c in (-1, 9):
            with pytest.raises(ValueError):
                misspecified_prior(c)


class TestBetaInstances:
    def test_default_count_is_400(self):
        instances = sample_beta_instances(30, 3, rng=np.random.default_rng(0))
        assert len(instances) == 400

    def test_means_inside_unit_interval(self):
        instances = sample_beta_instances(10, 2, n_outer=3, n_inner=4, rng=np.random.default_rng(1))
        for inst in instances:
            assert inst.means.min() > 0.0 and inst.means.max() < 1.0
            assert inst.prior is not None

    def test_beta_mean_monte_carlo(self):
        # DERIVED: Beta(5, 10) has mean 1/3
        rng = np.random.default_rng(2)
        draws = rng.beta(5.0, 10.0, 100_000)
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - 1.0 / 3.0) < 3 * se

    def test_protocol_keeps_items_moderately_attractive(self):
        # every per-item prior mean b1/(b1+10) sits in [1/11, 1/2], and the
        # mixture mean of the draws matches (1/10) sum_b b/(b+10)
        instances = sample_beta_instances(30, 3, rng=np.random.default_rng(3))
        for inst in instances:
            a, b = inst.prior.item_arrays(inst.L)
            prior_means = a / (a + b)
            assert prior_means.min() >= 1 / 11 - 1e-12
            assert prior_means.max() <= 0.5 + 1e-12
        draws = np.concatenate([inst.means for inst in instances])[:10_000]
        mixture_mean = np.mean([b / (b + 10.0) for b in range(1, 11)])
        se = draws.std() / np.sqrt(draws.size)
        assert abs(draws.mean() - mixture_mean) < 4 * se


class TestLinearInstance:
    def test_unit_norms(self):
        inst = sample_linear_instance(12, 3, 5, np.random.default_rng(4))
        assert np.linalg.norm(inst.theta) == pytest.approx(1.0)
        np.testing.assert_allclose(np.linalg.norm(inst.features, axis=1), 1.0)

    def test_scores_already_in_unit_interval(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            inst = sample_linear_instance(8, 2, 4, rng)
            raw = inst.features @ inst.theta
            assert raw.min() >= 0.0 and raw.max() <= 1.0
            np.testing.assert_array_equal(inst.means, raw)

    def test_best_reward_matches_enumeration(self):
        import itertools

        inst = sample_linear_instance(6, 3, 4, np.random.default_rng(6))
        best = max(
            expected_cascade_reward(inst.means[list(c)])
            for c in itertools.combinations(range(6), 3)
        )
        from cascade_bandits.cascade import best_action

        top = best_action(inst.means, 3)
        assert expected_cascade_reward(inst.means[list(top.items)]) == pytest.approx(best)


class TestLogisticInstance:
    def test_prior_mean_equals_attraction(self):
        inst = sample_logistic_instance(9, 3, 4, np.random.default_rng(7))
        a, b = inst.prior.item_arrays(9)
        np.testing.assert_allclose(a / (a + b), inst.means, atol=1e-12)

    def test_sigmoid_range(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            inst = sample_logistic_instance(8, 2, 3, rng)
            assert inst.means.min() >= 0.5 - 1e-12
            assert inst.means.max() <= expit(1.0) + 1e-12

    def test_seed_determinism(self):
        a = sample_logistic_instance(5, 2, 3, np.random.default_rng(9))
        b = sample_logistic_instance(5, 2, 3, np.random.default_rng(9))
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.features, b.features)


class TestEnvStep:
    def test_zero_means_no_click(self):
        inst = BanditInstance("bernoulli", 4, 2, means=np.zeros(4))
        fb = env_step(inst, RankedAction((1, 3)), np.random.default_rng(0))
        assert fb.click_position == 2
        assert not fb.clicked

    def test_monte_carlo_reward(self):
        inst = BanditInstance("bernoulli", 3, 3, means=np.array([0.2, 0.4, 0.3]))
        action = RankedAction((0, 1, 2))
        rng = np.random.default_rng(10)
        n = 10_000
        wins = sum(env_step(inst, action, rng).clicked for _ in range(n))
        expected = expected_cascade_reward(inst.means)
        se = np.sqrt(expected * (1 - expected) / n)
        assert abs(wins / n - expected) < 3 * se

    def test_seed_determinism(self):
        inst = BanditInstance("bernoulli", 4, 2, means=np.array([0.5, 0.1, 0.9, 0.3]))
        action = RankedAction((2, 0))
        a = [env_step(inst, action, np.random.default_rng(11)) for _ in range(5)]
        b = [env_step(inst, action, np.random.default_rng(11)) for _ in range(5)]
        assert a == b

    def test_never_reveals_unexamined_values(self):
        inst = BanditInstance("bernoulli", 5, 4, means=np.full(5, 0.7))
        rng = np.random.default_rng(12)
        for _ in range(100):
            fb = env_step(inst, RankedAction((0, 1, 2, 3)), rng)
            for j in range(4):
                if not fb.examined[j]:
                    assert fb.values[j] == 0.0

    def test_common_randomness_across_actions(self):
        # the same env stream yields the same attraction realization no
        # matter which list is shown
        inst = BanditInstance("bernoulli", 4, 2, means=np.array([0.5, 0.5, 0.5, 0.5]))
        fb_a = env_step(inst, RankedAction((0, 1)), np.random.default_rng(13))
        fb_b = env_step(inst, RankedAction((1, 0)), np.random.default_rng(13))
        assert fb_a.values[0] == fb_b.values[1] or fb_a.click_position == 1

    def test_gaussian_mode_masks_and_thresholds(self):
        inst = BanditInstance(
            "linear", 3, 3, d=2,
            means=np.array([0.9, 0.1, 0.2]),
            theta=np.array([1.0, 0.0]),
            features=np.array([[0.9, 0.0], [0.1, 0.0], [0.2, 0.0]]),
            feedback_mode="gaussian", noise_std=0.01, click_threshold=0.5,
        )
        fb = env_step(inst, RankedAction((1, 0, 2)), np.random.default_rng(14))
        assert fb.click_position == 2  # the 0.9 item trips the threshold
        assert fb.values[0] == pytest.approx(0.1, abs=0.05)
        assert fb.values[2] == 0.0
        assert fb.examined == (True, True, False)


class TestSerialization:
    def test_round_trip_bit_exact(self):
        rng = np.random.default_rng(15)
        for inst in (
            sample_logistic_instance(6, 2, 3, rng),
            sample_linear_instance(5, 2, 4, rng, feedback_mode="gaussian", noise_std=0.3),
            BanditInstance("bernoulli", 3, 2, means=rng.random(3), prior=PriorSpec(1.0, 10.0)),
        ):
            again = BanditInstance.from_json(inst.to_json())
            np.testing.assert_array_equal(again.means, inst.means)
            assert (again.kind, again.L, again.K, again.d) == (
                inst.kind, inst.L, inst.K, inst.d,
            )
            if inst.features is not None:
                np.testing.assert_array_equal(again.features, inst.features)
            if inst.theta is not None:
                np.testing.assert_array_equal(again.theta, inst.theta)
            if inst.kind == "linear":
                assert again.feedback_mode == inst.feedback_mode
                assert again.noise_std == inst.noise_std
            # a second trip through JSON is byte-identical
            assert again.to_json() == inst.to_json()

    def test_rejects_unknown_version(self):
        doc = BanditInstance("bernoulli", 2, 1, means=np.array([0.5, 0.5])).to_dict()
        doc["version"] = 99
        with pytest.raises(ValueError):
            BanditInstance.from_dict(doc)
