from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigdrawdown.errors import SizeError
from sigdrawdown.paths import time_augment
from sigdrawdown.signature import (TruncatedSignature, batch_feature_jacobian, batch_features,
                                   batch_jacobian, batch_signature, chen_product,
                                   exp_level_oracle, features, num_terms, path_signature,
                                   segment_signature, signature_jacobian, words)

BACKENDS = ["numba", "numpy"]


# independent oracle: levels as dense tensors, products by outer products
def _oracle_segment(h, M):
    levels = [np.ones(())]
    for m in range(1, M + 1):
        levels.append(np.multiply.outer(levels[-1], h) * (1.0 / m) if m > 1 else h.copy())
    return levels


def _oracle_mul(a, b, M):
    out = []
    for m in range(M + 1):
        acc = np.zeros(a[m].shape if m else ())
        for i in range(m + 1):
            acc = acc + np.multiply.outer(a[i], b[m - i])
        out.append(acc)
    return out


def oracle_signature(points, M):
    pts = np.asarray(points, dtype=float)
    sig = _oracle_segment(pts[1] - pts[0], M)
    for k in range(2, len(pts)):
        sig = _oracle_mul(sig, _oracle_segment(pts[k] - pts[k - 1], M), M)
    return np.concatenate([lvl.ravel() for lvl in sig[1:]])


def random_points(rng, n, d=2):
    return np.cumsum(rng.normal(size=(n, d)), axis=0)


class TestCounting:
    def test_num_terms(self):
        assert num_terms(2, 3) == 14
        assert num_terms(1, 5) == 5
        assert num_terms(2, 10) == 2046

    def test_word_order(self):
        w = words(2, 2)
        assert w == [(1,), (2,), (1, 1), (1, 2), (2, 1), (2, 2)]


class TestSegments:
    def test_one_dimensional_exponential(self):
        s = segment_signature([2.0], 3)
        assert np.allclose(s.coeffs, [2, 2, 4 / 3], atol=1e-15)

    def test_two_dimensional_segment(self):
        s = segment_signature([1.0, 0.5], 2)
        assert np.allclose(s.level(1), [1, 0.5])
        assert np.allclose(s.level(2), [0.5, 0.25, 0.25, 0.125])

    def test_zero_increment(self):
        s = segment_signature([0.0, 0.0], 4)
        assert np.all(s.coeffs == 0)
        assert s.level(0).tolist() == [1.0]

    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
    def test_exp_oracle_through_path(self, x):
        pts = np.linspace(0, x, 7)[:, None]
        assert np.allclose(path_signature(pts, 10).coeffs, exp_level_oracle(x, 10),
                           rtol=0, atol=1e-12)


class TestChen:
    @pytest.mark.parametrize("backend", BACKENDS)
    def test_identity_element(self, backend):
        a = segment_signature([0.3, -1.1], 4)
        out = chen_product(a, TruncatedSignature.identity(2, 4), backend=backend)
        assert np.array_equal(out.coeffs, a.coeffs)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_collinear_segments(self, backend):
        a = segment_signature([1.0, 0.0], 2)
        ab = chen_product(a, a, backend=backend)
        assert ab.level(2)[0] == pytest.approx(2.0)
        assert np.allclose(ab.coeffs, segment_signature([2.0, 0.0], 2).coeffs)

    @pytest.mark.parametrize("backend", BACKENDS)
    def test_associativity(self, backend):
        rng = np.random.default_rng(0)
        a, b, c = (segment_signature(rng.normal(size=2), 4) for _ in range(3))
        left = chen_product(chen_product(a, b, backend), c, backend)
        right = chen_product(a, chen_product(b, c, backend), backend)
        assert np.allclose(left.coeffs, right.coeffs, rtol=0, atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(SizeError):
            chen_product(segment_signature([1.0, 0.0], 2), segment_signature([1.0, 0.0], 3))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.integers(3, 12), st.integers(1, 5))
    def test_concatenation(self, seed, n, M):
        rng = np.random.default_rng(seed)
        pts = random_points(rng, n)
        k = int(rng.integers(1, n - 1))
        whole = path_signature(pts, M)
        parts = chen_product(path_signature(pts[:k + 1], M), path_signature(pts[k:], M))
        assert np.allclose(whole.coeffs, parts.coeffs, rtol=1e-10, atol=1e-10)


class TestPathSignature:
    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("M", [1, 3, 5])
    def test_matches_oracle(self, backend, M):
        pts = random_points(np.random.default_rng(M), 9)
        got = path_signature(pts, M, backend=backend).coeffs
        assert np.allclose(got, oracle_signature(pts, M), rtol=1e-12, atol=1e-12)

    def test_two_points_is_segment(self):
        pts = np.array([[0.0, 1.0], [1.0, 1.7]])
        assert np.allclose(path_signature(pts, 4).coeffs, segment_signature([1.0, 0.7], 4).coeffs)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 0.95))
    def test_interior_point_on_segment(self, seed, frac):
        pts = random_points(np.random.default_rng(seed), 5)
        mid = pts[1] + frac * (pts[2] - pts[1])
        refined = np.vstack([pts[:2], mid, pts[2:]])
        assert np.allclose(path_signature(pts, 4).coeffs, path_signature(refined, 4).coeffs,
                           rtol=0, atol=1e-12 * max(1.0, np.abs(pts).max() ** 4))

    def test_level_one_is_total_increment(self):
        a = time_augment([1.0, 1.3, 0.8, 1.1])
        f = features(path_signature(a, 1))
        assert np.allclose(f, [1.0, 0.1])
        assert f.size == num_terms(2, 1)

    def test_features_stable(self):
        a = time_augment([1.0, 1.3, 0.8, 1.1])
        assert np.array_equal(features(path_signature(a, 4)), features(path_signature(a, 4)))

    def test_batch_features_match_single(self):
        v = np.random.default_rng(3).normal(size=(4, 10))
        got = batch_features(v, 3)
        for i in range(4):
            assert np.allclose(got[i], features(path_signature(time_augment(v[i]), 3)))

    def test_bad_batch_shape(self):
        with pytest.raises(SizeError):
            batch_signature(np.zeros((3, 1, 2)), 2)


class TestJacobian:
    def test_level_one_value_row(self):
        v = np.array([1.0, 1.5, 0.7, 1.2])
        jac = signature_jacobian(time_augment(v), 1).jacobian
        assert jac.shape == (2, 4)
        assert np.allclose(jac[0], 0.0)
        assert np.allclose(jac[1], [-1, 0, 0, 1])

    @pytest.mark.parametrize("backend", BACKENDS)
    @pytest.mark.parametrize("M", [2, 4, 6])
    def test_finite_differences(self, backend, M):
        v = 1 + 0.1 * np.cumsum(np.random.default_rng(M).normal(size=12))
        jac = batch_feature_jacobian(v[None], M, backend=backend)[0]
        h = 1e-6
        num = np.empty_like(jac)
        for j in range(v.size):
            e = np.zeros_like(v)
            e[j] = h
            num[:, j] = (batch_features(v + e, M)[0] - batch_features(v - e, M)[0]) / (2 * h)
        err = np.abs(num - jac).max() / np.abs(jac).max()
        assert err < 1e-5

    def test_constant_path_is_finite(self):
        jac = signature_jacobian(time_augment(np.ones(6)), 4).jacobian
        assert np.all(np.isfinite(jac))

    def test_time_coordinate_jacobian(self):
        pts = random_points(np.random.default_rng(8), 6)
        jac = batch_jacobian(pts[None], 3, coord=0)[0]
        h = 1e-6
        for j in range(6):
            e = np.zeros_like(pts)
            e[j, 0] = h
            num = (path_signature(pts + e, 3).coeffs - path_signature(pts - e, 3).coeffs) / (2 * h)
            assert np.allclose(num, jac[:, j], atol=1e-6)


class TestExpOracle:
    def test_values(self):
        assert np.allclose(exp_level_oracle(2.0, 4), [2.0 ** m / factorial(m) for m in range(1, 5)])
