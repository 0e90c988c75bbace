import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sigdrawdown.errors import DomainError, SizeError
from sigdrawdown.evaluate import (TAIL_LEVELS, bm_baseline, compare, increment_sigma,
                                  ks_statistic, qq_points, quantiles, write_histogram_csv,
                                  write_qq_csv, write_scatter_csv)

samples = arrays(np.float64, st.integers(1, 40), elements=st.floats(-1e3, 1e3))
# integer-valued, so the transform below stays strictly increasing in floating point
int_samples = arrays(np.float64, st.integers(1, 40), elements=st.integers(-1000, 1000))


class TestKs:
    def test_equal(self):
        assert ks_statistic([1, 2, 3], [3, 2, 1]) == 0

    def test_disjoint(self):
        assert ks_statistic([0, 1], [5, 6, 7]) == 1

    def test_hand_value(self):
        assert ks_statistic([0, 1], [0.5]) == 0.5

    def test_against_scipy(self):
        from scipy.stats import ks_2samp

        rng = np.random.default_rng(0)
        a, b = rng.normal(size=300), rng.normal(0.2, 1.3, size=170)
        assert ks_statistic(a, b) == pytest.approx(ks_2samp(a, b).statistic, abs=1e-15)

    def test_empty(self):
        with pytest.raises(SizeError):
            ks_statistic([], [1])

    @given(samples, samples)
    def test_symmetric_and_bounded(self, a, b):
        k = ks_statistic(a, b)
        assert k == ks_statistic(b, a)
        assert 0 <= k <= 1

    @given(int_samples, int_samples)
    def test_monotone_transform(self, a, b):
        f = lambda x: np.arctan(x / 100.0) * 3 + 1  # noqa: E731
        assert ks_statistic(f(a), f(b)) == pytest.approx(ks_statistic(a, b), abs=1e-12)


class TestQuantiles:
    def test_median(self):
        assert quantiles([1, 2, 3], [0.5])[0] == 2

    def test_type7(self):
        x = np.array([3.0, 1.0, 4.0, 1.5, 9.0])
        s = np.sort(x)
        for q in (0.1, 0.37, 0.9):
            h = (len(s) - 1) * q
            lo = int(np.floor(h))
            want = s[lo] + (h - lo) * (s[min(lo + 1, len(s) - 1)] - s[lo])
            assert quantiles(x, [q])[0] == pytest.approx(want)

    def test_bad_level(self):
        with pytest.raises(DomainError):
            quantiles([1, 2], [1.2])

    @given(samples)
    def test_self_qq_on_bisector(self, a):
        pts = qq_points(a, a)
        assert np.array_equal(pts[:, 1], pts[:, 2])
        assert np.all(np.diff(pts[:, 1]) >= 0)

    @given(samples, st.floats(-10, 10))
    def test_shift(self, a, c):
        pts = qq_points(a + c, a)
        assert np.allclose(pts[:, 1] - pts[:, 2], c, atol=1e-9)


class TestComparison:
    def test_tails(self):
        rng = np.random.default_rng(1)
        a, b = rng.normal(size=1000), rng.normal(size=1000)
        c = compare(a, b)
        assert c.tail_levels == TAIL_LEVELS
        assert c.tail_abs_error.shape == (3,)
        assert 0 <= c.ks <= 1

    def test_increment_sigma(self):
        b = np.array([[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]])
        assert increment_sigma(b) == 1.0


class TestBaseline:
    def test_zero_sigma(self):
        assert np.all(bm_baseline(0.0, 20, 50, seed=0) == 0)

    def test_deterministic(self):
        assert np.array_equal(bm_baseline(0.01, 20, 100, 4), bm_baseline(0.01, 20, 100, 4))

    def test_below_heavy_tailed_autocorrelated_data(self):
        # AR(1) increments with t(3) shocks: persistence and fat tails widen drawdowns
        rng = np.random.default_rng(7)
        n, k, phi = 20, 20000, 0.5
        eps = rng.standard_t(3, size=(k, n - 1))
        inc = np.zeros_like(eps)
        for t in range(n - 1):
            inc[:, t] = (phi * inc[:, t - 1] if t else 0) + eps[:, t]
        paths = np.column_stack([np.zeros(k), np.cumsum(0.01 * inc, axis=1)]) + 1
        from sigdrawdown.drawdown import drawdown_target

        emp = drawdown_target(paths)
        base = bm_baseline(increment_sigma(paths), n, k, seed=1)
        assert quantiles(base, [0.99])[0] < quantiles(emp, [0.99])[0]


class TestCsv:
    def test_outputs(self, tmp_path):
        a, b = np.arange(10.0), np.arange(10.0) + 1
        write_qq_csv(tmp_path / "qq.csv", a, b, levels=[0.5])
        assert list(csv.reader(open(tmp_path / "qq.csv"))) == [
            ["q", "synthetic", "actual"], ["0.5", "4.5", "5.5"]]
        write_scatter_csv(tmp_path / "s.csv", a, b)
        assert len(open(tmp_path / "s.csv").readlines()) == 11
        with pytest.raises(SizeError):
            write_scatter_csv(tmp_path / "s.csv", a, b[:3])
        write_histogram_csv(tmp_path / "h.csv", {"x": a, "y": b}, bins=4)
        rows = list(csv.reader(open(tmp_path / "h.csv")))
        assert rows[0] == ["lo", "hi", "x", "y"]
        assert sum(int(r[2]) for r in rows[1:]) == 10
