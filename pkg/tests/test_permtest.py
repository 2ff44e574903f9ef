import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from latentperm import PermutationConfig, exact_null, mrpp_delta, permutation_test
from oracles import (
    naive_auc_statistic,
    naive_exact_null,
    naive_mean_difference,
    naive_mrpp,
)

MICRO = np.array([[0.0], [2.0], [10.0], [14.0]])
MICRO_LABELS = [0, 0, 1, 1]


def small_config(**kw):
    base = dict(permutations=500, sample_size=2, seed=123)
    base.update(kw)
    return PermutationConfig(**base)


class TestExactMode:
    def test_micro_case(self):
        report = permutation_test(MICRO, MICRO_LABELS, small_config(exact=True, keep_null=True))
        assert report.observed == pytest.approx(3.0, abs=1e-12)
        assert report.permutations == 6
        assert sorted(report.null_sample) == pytest.approx([3, 3, 11, 11, 11, 11], abs=1e-12)
        assert report.p_value == pytest.approx(1 / 3)
        assert report.flags.exact_mode

    def test_sizes_2_2_enumerates_six(self, rng):
        X = rng.standard_normal((4, 2))
        values = exact_null(X, MICRO_LABELS, small_config())
        assert values.size == 6

    def test_bound_enforced(self):
        labels = [0] * 15 + [1] * 15
        X = np.zeros((30, 1))
        assert math.comb(30, 15) > 10**6
        with pytest.raises(ValueError, match="exceeds"):
            exact_null(X, labels, small_config())

    def test_matches_naive_enumeration(self, rng):
        oracle_fn = {
            "mrpp": lambda X, a: naive_mrpp(X, a),
            "auc": naive_auc_statistic,
            "mean-difference": naive_mean_difference,
        }
        for statistic in ("mrpp", "auc", "mean-difference"):
            X = rng.standard_normal((7, 2))
            labels = [0, 0, 0, 1, 1, 1, 1]
            got = np.sort(exact_null(X, labels, small_config(statistic=statistic)))
            want = np.sort(naive_exact_null(X, np.asarray(labels), oracle_fn[statistic]))
            np.testing.assert_allclose(got, want, atol=1e-10)

    def test_exact_p_includes_observed(self, rng):
        X = rng.standard_normal((6, 1))
        report = permutation_test(X, [0, 0, 0, 1, 1, 1], small_config(exact=True))
        assert report.p_value > 0.0


class TestMonteCarlo:
    def test_micro_case_converges_to_exact(self):
        config = PermutationConfig(permutations=3000, sample_size=2, seed=7)
        report = permutation_test(MICRO, MICRO_LABELS, config)
        p_exact = 1 / 3
        bound = 3 * math.sqrt(p_exact * (1 - p_exact) / 3000)
        assert abs(report.p_value - p_exact) <= bound

    def test_determinism_bit_identical(self, rng):
        X = rng.standard_normal((20, 2))
        labels = [0] * 10 + [1] * 10
        config = small_config(keep_null=True)
        a = permutation_test(X, labels, config)
        b = permutation_test(X, labels, config)
        assert a == b

    def test_worker_count_never_changes_report(self, rng):
        X = rng.standard_normal((30, 2))
        labels = [0] * 15 + [1] * 15
        config = PermutationConfig(permutations=997, sample_size=15, seed=5, keep_null=True)
        reports = [permutation_test(X, labels, config, workers=w) for w in (1, 2, 5)]
        assert reports[0] == reports[1] == reports[2]

    def test_add_one_rule_bounds(self, rng):
        # even a wildly separated observed value yields p > 0
        X = np.vstack([np.zeros((5, 1)), np.full((5, 1), 100.0)])
        labels = [0] * 5 + [1] * 5
        report = permutation_test(X, labels, small_config(permutations=200))
        assert 0.0 < report.p_value <= 1.0
        assert report.p_value == (1 + report.extreme_count) / 201

    def test_label_flip_gives_identical_report(self, rng):
        X = rng.standard_normal((14, 3))
        labels = np.asarray([0] * 6 + [1] * 8)
        for statistic in ("mrpp", "auc", "mean-difference"):
            config = small_config(statistic=statistic, keep_null=True)
            a = permutation_test(X, labels, config)
            b = permutation_test(X, 1 - labels, config)
            assert a == b

    def test_mc_matches_exact_within_binomial_error(self, rng):
        hits = 0
        trials = 50
        for _ in range(trials):
            n0, n1 = int(rng.integers(2, 6)), int(rng.integers(2, 6))
            X = rng.standard_normal((n0 + n1, 2))
            labels = [0] * n0 + [1] * n1
            exact = permutation_test(X, labels, small_config(exact=True)).p_value
            mc = permutation_test(
                X, labels, PermutationConfig(permutations=3000, sample_size=2, seed=11)
            ).p_value
            bound = 3 * math.sqrt(exact * (1 - exact) / 3000)
            if abs(mc - exact) <= bound + 2 / 3001:
                hits += 1
        assert hits >= int(0.9 * trials)

    def test_affine_map_preserves_mrpp_p_value(self, rng):
        X = rng.standard_normal((16, 2))
        labels = [0] * 8 + [1] * 8
        config = small_config()
        base = permutation_test(X, labels, config)
        mapped = permutation_test(X * 3.5 + 11.0, labels, config)
        assert mapped.p_value == base.p_value
        assert mapped.extreme_count == base.extreme_count

    def test_null_sample_kept_on_request(self, rng):
        X = rng.standard_normal((8, 1))
        labels = [0] * 4 + [1] * 4
        report = permutation_test(X, labels, small_config(permutations=64, keep_null=True))
        assert report.null_sample is not None
        assert len(report.null_sample) == 64
        assert permutation_test(X, labels, small_config(permutations=64)).null_sample is None

    def test_calibration_under_null_small(self):
        # observed assignment drawn from the null: p-values should look uniform
        pvals = []
        for seed in range(500):
            rng = np.random.default_rng(seed)
            X = rng.standard_normal((12, 2))
            labels = [0] * 6 + [1] * 6
            config = PermutationConfig(permutations=199, sample_size=6, seed=seed)
            pvals.append(permutation_test(X, labels, config).p_value)
        assert kstest(pvals, "uniform").statistic < 0.1

    def test_three_group_mrpp_runs(self, rng):
        X = rng.standard_normal((12, 2))
        labels = [0] * 4 + [1] * 4 + [2] * 4
        report = permutation_test(X, labels, small_config(permutations=100, sample_size=4))
        assert 0 < report.p_value <= 1.0

    def test_orientation_auc_counts_large_values(self, rng):
        X = np.vstack([np.zeros((6, 1)), np.ones((6, 1)) * 9])
        labels = [0] * 6 + [1] * 6
        report = permutation_test(X, labels, small_config(statistic="auc", permutations=400))
        # perfectly separated: only permutations recovering the split tie it
        assert report.observed == 1.0
        assert report.p_value < 0.05


class TestConfigValidation:
    def test_permutations_positive(self):
        with pytest.raises(ValueError, match="permutations"):
            PermutationConfig(permutations=0)

    def test_mrpp_needs_sample_size_two(self):
        with pytest.raises(ValueError, match="sample_size"):
            PermutationConfig(sample_size=1, statistic="mrpp")

    def test_unknown_statistic(self):
        with pytest.raises(ValueError, match="statistic"):
            PermutationConfig(statistic="anova")


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["mrpp", "auc", "mean-difference"]))
def test_p_value_always_in_unit_interval(seed, statistic):
    rng = np.random.default_rng(seed)
    n0, n1 = int(rng.integers(2, 7)), int(rng.integers(2, 7))
    X = rng.standard_normal((n0 + n1, 2))
    labels = [0] * n0 + [1] * n1
    config = PermutationConfig(permutations=97, sample_size=2, seed=seed, statistic=statistic)
    report = permutation_test(X, labels, config)
    assert 0.0 < report.p_value <= 1.0


def test_observed_delta_consistent_with_public_function(rng):
    X = rng.standard_normal((10, 3))
    labels = [0] * 5 + [1] * 5
    report = permutation_test(X, labels, small_config(permutations=10))
    assert report.observed == mrpp_delta(X, labels)
