import numpy as np
import pytest
from hypothesis import given, strategies as st

from dploc import dp_core
from dploc.dp_core import (
    Budget, LaplaceScale, Method, laplace_quantile, laplace_sample,
    laplace_samples, resolve_budget, sanitize_count, sanitize_counts,
)
from dploc.errors import InvalidParameter
from dploc.rng import stream


def laplace_cdf(x, b):
    # analytic CDF, independent of the inverse-CDF sampler
    x = np.asarray(x, dtype=float)
    return np.where(x < 0, 0.5 * np.exp(x / b), 1.0 - 0.5 * np.exp(-x / b))


class TestLaplaceQuantile:
    def test_median_is_mu(self):
        assert laplace_quantile(0.0, 0.5, 1.0) == 0.0
        assert laplace_quantile(3.25, 0.5, 0.7) == 3.25

    def test_frozen_values(self):
        # oracle: -ln(0.2)/0.5 and 2 + ln(0.5), evaluated independently
        assert laplace_quantile(0.0, 0.9, 0.5) == pytest.approx(3.2188758248682006, abs=1e-12)
        assert laplace_quantile(2.0, 0.25, 1.0) == pytest.approx(1.3068528194400546, abs=1e-12)

    @pytest.mark.parametrize("F", [-0.1, 0.0, 1.0, 1.5])
    def test_rejects_bad_F(self, F):
        with pytest.raises(InvalidParameter):
            laplace_quantile(0.0, F, 1.0)

    def test_rejects_bad_eps(self):
        with pytest.raises(InvalidParameter):
            laplace_quantile(0.0, 0.5, 0.0)

    @given(st.floats(0.001, 0.999), st.floats(0.001, 0.999),
           st.floats(-10, 10), st.floats(0.01, 50))
    def test_strictly_increasing_in_F(self, f1, f2, mu, eps):
        lo, hi = sorted((f1, f2))
        if hi - lo < 1e-9:  # adjacent floats can round to the same quantile
            return
        assert laplace_quantile(mu, lo, eps) < laplace_quantile(mu, hi, eps)


class TestLaplaceSample:
    def test_moments_b1(self):
        rng = stream(7, "test.lap")
        x = laplace_samples(1.0, 1_000_000, rng)
        assert abs(x.mean()) < 0.01
        assert x.var() == pytest.approx(2.0, rel=0.02)

    def test_negative_fraction(self):
        rng = stream(8, "test.lap")
        x = laplace_samples(1.0, 1_000_000, rng)
        assert np.mean(x < 0) == pytest.approx(0.5, abs=0.002)

    def test_quantile_consistency_b2(self):
        rng = stream(9, "test.lap")
        x = laplace_samples(LaplaceScale(2.0), 1_000_000, rng)
        q90 = laplace_quantile(0.0, 0.9, 0.5)
        assert np.mean(x < q90) == pytest.approx(0.9, abs=0.002)

    def test_empirical_cdf_matches_analytic(self):
        b = 1.5
        rng = stream(10, "test.lap")
        x = laplace_samples(b, 1_000_000, rng)
        for k in (-2, -1, 0, 1, 2):
            emp = np.mean(x <= k * b)
            assert emp == pytest.approx(float(laplace_cdf(k * b, b)), abs=0.005)

    def test_scalar_path_matches_distribution(self):
        rng = stream(11, "test.lap")
        x = np.array([laplace_sample(1.0, rng) for _ in range(20_000)])
        assert abs(x.mean()) < 0.05
        assert np.mean(x < 0) == pytest.approx(0.5, abs=0.02)

    def test_rejects_nonpositive_scale(self):
        rng = stream(12, "test.lap")
        with pytest.raises(InvalidParameter):
            laplace_sample(0.0, rng)
        with pytest.raises(InvalidParameter):
            laplace_sample(-1.0, rng)
        with pytest.raises(InvalidParameter):
            LaplaceScale(-2.0)

    def test_zero_noise_hook(self):
        rng = stream(13, "test.lap")
        with dp_core.zero_noise():
            assert laplace_sample(1.0, rng) == 0.0
            assert not laplace_samples(1.0, 100, rng).any()
        assert laplace_samples(1.0, 100, rng).any()


class TestSanitizeCount:
    @pytest.mark.parametrize("x,expected", [(-3.2, 0), (4.6, 5), (0.0, 0),
                                            (4.5, 5), (0.5, 1), (-0.4, 0), (2.49, 2)])
    def test_examples(self, x, expected):
        assert sanitize_count(x) == expected

    @given(st.floats(-1e6, 1e6))
    def test_idempotent(self, x):
        assert sanitize_count(sanitize_count(x)) == sanitize_count(x)

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_monotone(self, a, b):
        lo, hi = sorted((a, b))
        assert sanitize_count(lo) <= sanitize_count(hi)

    def test_vectorized_agrees(self):
        xs = np.array([-3.2, 4.6, 0.0, 4.5, 0.5, -0.4, 17.2])
        assert list(sanitize_counts(xs)) == [sanitize_count(x) for x in xs]


class TestResolveBudget:
    def test_paper_defaults(self):
        assert resolve_budget(Method.UGRID_KDE, 1.0) == Budget(1.0, 0.6, 0.0, 0.4)
        b = resolve_budget(Method.ROAD, 1.0)
        assert b.eps1 == pytest.approx(1 / 3, abs=1e-12)
        assert b.eps2 == pytest.approx(1 / 3, abs=1e-12)
        assert b.eps3 == pytest.approx(1 / 3, abs=1e-12)
        b = resolve_budget("Clust-KDE", 2.0)
        assert (b.eps1, b.eps2, b.eps3) == (0.5, 1.0, 0.5)

    def test_all_methods_table(self):
        expected = {
            Method.UGRID_UNI: (1.0, 0.0, 0.0),
            Method.UGRID_WUD: (1.0, 0.0, 0.0),
            Method.UGRID_KDE: (0.6, 0.0, 0.4),
            Method.AGRID_UNI: (0.5, 0.5, 0.0),
            Method.AGRID_WUD: (0.5, 0.5, 0.0),
            Method.AGRID_KDE: (0.4, 0.4, 0.2),
            Method.CLUST_UNI: (2 / 3, 1 / 3, 0.0),
            Method.CLUST_WUD: (2 / 3, 1 / 3, 0.0),
            Method.CLUST_KDE: (0.25, 0.5, 0.25),
            Method.ROAD: (1 / 3, 1 / 3, 1 / 3),
        }
        for m, (f1, f2, f3) in expected.items():
            b = resolve_budget(m, 1.0)
            assert b.eps1 == pytest.approx(f1, abs=1e-12)
            assert b.eps2 == pytest.approx(f2, abs=1e-12)
            assert b.eps3 == pytest.approx(f3, abs=1e-12)

    @given(st.sampled_from(list(Method)), st.floats(1e-3, 1e3))
    def test_components_sum_and_nonnegative(self, method, eps):
        b = resolve_budget(method, eps)
        assert b.eps1 >= 0 and b.eps2 >= 0 and b.eps3 >= 0
        assert abs((b.eps1 + b.eps2 + b.eps3) - eps) <= 1e-12 * eps

    def test_unknown_method(self):
        with pytest.raises(InvalidParameter):
            resolve_budget("Quadtree-KDE", 1.0)
        with pytest.raises(InvalidParameter):
            resolve_budget(Method.ROAD, 0.0)

    def test_budget_validation(self):
        with pytest.raises(InvalidParameter):
            Budget(1.0, 0.5, 0.2, 0.2)
        with pytest.raises(InvalidParameter):
            Budget(1.0, 1.2, -0.1, -0.1)

    def test_method_parsing(self):
        assert Method.parse("road") is Method.ROAD
        assert Method.parse("UGrid-KDE").partition == "ugrid"
        assert Method.parse("UGrid-KDE").generator == "kde"
        assert Method.CLUST_WUD.partition == "cluster"
        assert Method.CLUST_WUD.generator == "wud"
