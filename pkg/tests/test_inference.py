import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import stats

from taxoscore.inference import (AlignmentError, comparison_statistic, cvm_2samp_statistic,
                                 forecast_comparison_test, frequency_chi2, normality_gof, normality_statistic,
                                 trimmed_test, two_sample_distance_test, yearly_rejection_proportions)
from taxoscore.scoring import ScoreKind, ScoreSeries, WeightKind

scores = arrays(float, st.integers(2, 60), elements=st.floats(0, 100, allow_subnormal=False))


def series(values, ids=None, weight=WeightKind.EQUAL):
    ids = ids or tuple(f"e{i}" for i in range(len(values)))
    return ScoreSeries("M", ScoreKind.RCRPS, weight, ids, np.asarray(values, float))


class TestComparison:
    def test_identical_scores(self):
        s = np.array([0.2, 0.4, 0.9])
        r = forecast_comparison_test(s, s)
        assert r.statistic == 0.0 and r.p_value == 0.5 and not r.reject_05

    @given(a=scores, data=st.data())
    @settings(max_examples=80, deadline=None)
    def test_antisymmetric(self, a, data):
        b = data.draw(arrays(float, a.shape, elements=st.floats(0, 100, allow_subnormal=False)))
        assert forecast_comparison_test(a, b).statistic == -forecast_comparison_test(b, a).statistic

    def test_common_shift_leaves_statistic_unchanged(self):
        rng = np.random.default_rng(0)
        a, b = rng.random(50), rng.random(50)
        base = forecast_comparison_test(a, b).statistic
        assert forecast_comparison_test(a + 7.0, b + 7.0).statistic == pytest.approx(base, rel=1e-10)

    def test_constant_advantage_uses_uncentered_scale(self):
        # sigma is the root mean square of the differences, so a constant gap gives sqrt(n)
        r = forecast_comparison_test(np.zeros(25), np.ones(25))
        assert r.statistic == pytest.approx(5.0) and r.reject_01

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(1)
        a, b = rng.gamma(2, size=80), rng.gamma(2.2, size=80)
        d = b - a
        assert forecast_comparison_test(a, b).statistic == pytest.approx(
            math.sqrt(80) * d.mean() / math.sqrt(np.mean(d ** 2)), rel=1e-12)

    def test_vectorized_statistic(self):
        d = np.random.default_rng(2).normal(size=(4, 30))
        t, _, _ = comparison_statistic(d, axis=1)
        for row, val in zip(d, t):
            assert comparison_statistic(row)[0] == pytest.approx(val)

    def test_misaligned_series(self):
        with pytest.raises(AlignmentError):
            forecast_comparison_test(series([1, 2]), series([1, 2], ids=("e0", "x")))
        with pytest.raises(AlignmentError):
            forecast_comparison_test(series([1, 2]), series([1, 2], weight=WeightKind.RIGHT))
        with pytest.raises(AlignmentError):
            forecast_comparison_test(np.ones(3), np.ones(4))

    @pytest.mark.parametrize("n", [1_000, 10_000])
    def test_size_under_null(self, n):
        rng = np.random.default_rng(3)
        rej = 0
        for _ in range(10):
            t, _, _ = comparison_statistic(rng.normal(size=(1_000, n)))
            rej += int(np.count_nonzero(t > 1.64))
        assert 0.04 <= rej / 10_000 <= 0.06


class TestSummaries:
    def test_yearly_proportion(self):
        rs = [forecast_comparison_test(np.zeros(9), np.full(9, v)) for v in (1, 1, 1, 0, 0, 0, 0, 0, 0)]
        p = yearly_rejection_proportions(rs)
        assert (p.rejections, p.total) == (3, 9)
        assert float(p) == pytest.approx(1 / 3)

    def test_trimmed_full_sample_equals_plain_test(self):
        rng = np.random.default_rng(4)
        a, b, y = rng.random(40), rng.random(40), rng.random(40)
        res = trimmed_test(a, b, y)
        assert res[1.0] == forecast_comparison_test(a, b)

    def test_trimmed_keeps_floor_count_of_smallest(self):
        y = np.arange(10.0)[::-1]
        res = trimmed_test(np.zeros(10), np.arange(10.0), y, trim_quantiles=(0.55,))
        assert res[0.55].n == 5
        # the five smallest realizations sit at the end, where b - a = 5..9
        assert res[0.55].mean_diff == pytest.approx(7.0)

    def test_half_of_hundred(self):
        y = np.random.default_rng(12).random(100)
        assert trimmed_test(np.zeros(100), np.ones(100), y)[0.5].n == 50

    def test_trimmed_alignment(self):
        with pytest.raises(AlignmentError):
            trimmed_test(np.zeros(5), np.zeros(5), np.zeros(4))


class TestNormality:
    @pytest.mark.parametrize("name,oracle", [
        ("KS", lambda x: stats.ks_1samp(x, stats.norm.cdf).statistic),
        ("CvM", lambda x: stats.cramervonmises(x, "norm").statistic),
        ("AD", None),
    ])
    def test_statistics_match_scipy(self, name, oracle):
        x = np.random.default_rng(5).normal(0.1, 1.1, 70)
        ours = normality_statistic(x, name)[0]
        if oracle is None:
            u = np.sort(stats.norm.cdf(x))
            i = np.arange(1, 71)
            ref = -70 - np.mean((2 * i - 1) * (np.log(u) + np.log1p(-u[::-1])))
        else:
            ref = oracle(x)
        assert ours == pytest.approx(ref, rel=1e-10)

    def test_p_values_are_uniform(self):
        rng = np.random.default_rng(6)
        p = [normality_gof(rng.standard_normal(50), "AD", n_mc=1000, seed=k) for k in range(1000)]
        assert stats.kstest(p, "uniform").pvalue > 0.05

    @pytest.mark.parametrize("name", ["KS", "CvM", "AD"])
    def test_detects_shift(self, name):
        x = np.random.default_rng(7).normal(1.0, 1, 500)
        assert normality_gof(x, name, n_mc=2000) < 0.01

    def test_seeded(self):
        x = np.random.default_rng(13).standard_normal(40)
        assert normality_gof(x, n_mc=10_000, seed=5) == normality_gof(x, n_mc=10_000, seed=5)

    def test_rejects_tiny_inputs(self):
        with pytest.raises(ValueError):
            normality_gof(np.zeros(3))
        with pytest.raises(ValueError):
            normality_gof(np.zeros(20), n_mc=10)


class TestTwoSample:
    def test_identical_multisets(self):
        a = np.array([3.0, 1, 2, 2, 5])
        for kind in ("KS", "CvM"):
            assert two_sample_distance_test(a, a[::-1], kind) == (0.0, 1.0)

    def test_cvm_matches_scipy(self):
        rng = np.random.default_rng(8)
        a, b = rng.normal(size=30), rng.normal(0.3, size=45)
        assert cvm_2samp_statistic(a, b) == pytest.approx(stats.cramervonmises_2samp(a, b).statistic, rel=1e-10)

    def test_ks_matches_scipy(self):
        rng = np.random.default_rng(9)
        a, b = rng.normal(size=30), rng.normal(size=40)
        ref = stats.ks_2samp(a, b)
        assert two_sample_distance_test(a, b, "KS") == (pytest.approx(ref.statistic), pytest.approx(ref.pvalue))

    def test_separated_samples(self):
        rng = np.random.default_rng(14)
        assert two_sample_distance_test(rng.normal(size=200), rng.normal(3, size=200))[1] < 0.001

    def test_ks_size(self):
        rng = np.random.default_rng(15)
        rej = sum(two_sample_distance_test(rng.normal(size=60), rng.normal(size=60))[1] < 0.05
                  for _ in range(10_000))
        assert 0.04 <= rej / 10_000 <= 0.06

    def test_cvm_bootstrap_separates(self):
        rng = np.random.default_rng(10)
        _, p_same = two_sample_distance_test(rng.normal(size=60), rng.normal(size=60), "CvM", n_boot=500)
        _, p_diff = two_sample_distance_test(rng.normal(size=60), rng.normal(1.5, size=60), "CvM", n_boot=500)
        assert p_diff < 0.01 < p_same


class TestFrequencyChi2:
    def test_identical_counts(self):
        assert frequency_chi2([5, 10, 0, 3], [5, 10, 0, 3]).p_value == 1.0

    def test_disjoint_counts(self):
        r = frequency_chi2([100, 0], [0, 100])
        assert r.p_value < 1e-10 and r.dof == 1

    def test_matches_scipy_contingency(self):
        a, b = [12, 30, 7, 0], [20, 25, 10, 0]
        chi2, p, dof, _ = stats.chi2_contingency([a[:3], b[:3]], correction=False)
        r = frequency_chi2(a, b)
        assert (r.statistic, r.p_value, r.dof) == (pytest.approx(chi2), pytest.approx(p), dof)

    def test_size(self):
        rng = np.random.default_rng(11)
        probs = [0.4, 0.3, 0.2, 0.1]
        rej = sum(frequency_chi2(rng.multinomial(500, probs), rng.multinomial(500, probs)).p_value < 0.05
                  for _ in range(10_000))
        assert 0.04 <= rej / 10_000 <= 0.06

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            frequency_chi2([1, 2], [1, 2, 3])
        with pytest.raises(ValueError):
            frequency_chi2([0, 0], [1, 2])
