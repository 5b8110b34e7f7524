import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bae_ood.errors import NumericError
from bae_ood.likelihood import (
    CLAMP,
    LikelihoodKind,
    bernoulli_ll,
    cont_bernoulli_ll,
    gaussian_ll,
    log_cb_normalizer,
    max_ll_curve,
    nll_and_grad,
)

mpmath.mp.dps = 50
interior = st.floats(min_value=1e-3, max_value=1 - 1e-3)
pixel = st.floats(min_value=0.0, max_value=1.0)


def _mp_log_c(lam):
    lam = mpmath.mpf(lam)
    u = 1 - 2 * lam
    if u == 0:
        return mpmath.limit(lambda t: mpmath.log(2 * mpmath.atanh(t) / t), 0)
    return mpmath.log(2 * mpmath.atanh(u) / u)


class TestBernoulli:
    def test_midpoint(self):
        assert bernoulli_ll([0.5], [0.5]) == pytest.approx(math.log(0.5), abs=1e-15)

    def test_zero_pixel_at_clamp_floor(self):
        assert bernoulli_ll([0.0], [CLAMP]) == pytest.approx(0.0, abs=1e-6)

    def test_high_precision_oracle(self):
        x, xh = (1.0, 0.3), (0.9, 0.4)
        expected = sum(
            mpmath.mpf(a) * mpmath.log(b) + (1 - mpmath.mpf(a)) * mpmath.log(1 - mpmath.mpf(b))
            for a, b in zip(x, xh)
        ) / 2
        assert bernoulli_ll(x, xh) == pytest.approx(float(expected), abs=1e-12)

    def test_rejects_boundary_reconstruction(self):
        with pytest.raises(NumericError):
            bernoulli_ll([0.2], [1.0])

    def test_batch_rows(self, rng):
        x = rng.uniform(size=(3, 5))
        xh = rng.uniform(0.1, 0.9, size=(3, 5))
        out = bernoulli_ll(x, xh)
        assert out.shape == (3,)
        assert out[1] == bernoulli_ll(x[1], xh[1])

    @given(x=interior, a=interior, b=interior)
    def test_maximum_at_reconstruction_equal_input(self, x, a, b):
        if abs(a - x) > 1e-6:
            assert bernoulli_ll([x], [a]) < bernoulli_ll([x], [x])

    @given(x=pixel, xh=interior)
    def test_symmetry(self, x, xh):
        assert bernoulli_ll([x], [xh]) == pytest.approx(bernoulli_ll([1 - x], [1 - xh]), abs=1e-12)

    @given(x=pixel, xh=interior)
    def test_nonpositive(self, x, xh):
        assert bernoulli_ll([x], [xh]) <= 0.0


class TestContinuousBernoulli:
    def test_normalizer_at_half(self):
        assert log_cb_normalizer(0.5) == pytest.approx(float(_mp_log_c(0.5)), abs=1e-15)
        assert float(_mp_log_c(0.5)) == pytest.approx(math.log(2), abs=1e-15)

    def test_normalizer_at_point_nine(self):
        oracle = float(_mp_log_c(0.9))
        assert oracle == pytest.approx(1.0104, abs=1e-4)
        assert log_cb_normalizer(0.9) == pytest.approx(oracle, abs=1e-13)

    @pytest.mark.parametrize("lam", [0.5 - 9e-5, 0.5 - 1e-6, 0.5 + 3e-5, 0.5 + 1.1e-4, 0.3, 1e-7, 1 - 1e-7])
    def test_normalizer_matches_extended_precision(self, lam):
        assert log_cb_normalizer(lam) == pytest.approx(float(_mp_log_c(lam)), rel=1e-12)

    @given(x=pixel, xh=interior)
    def test_offset_at_least_log_two(self, x, xh):
        assert cont_bernoulli_ll([x], [xh]) - bernoulli_ll([x], [xh]) >= math.log(2) - 1e-12

    def test_normalizer_derivative(self):
        from bae_ood.likelihood import _dlog_cb_normalizer

        for lam in [0.2, 0.5 + 5e-5, 0.5, 0.77]:
            h = 1e-6
            fd = (float(_mp_log_c(lam + h)) - float(_mp_log_c(lam - h))) / (2 * h)
            assert float(_dlog_cb_normalizer(lam)) == pytest.approx(fd, abs=1e-7)


class TestGaussian:
    def test_perfect_reconstruction(self, rng):
        x = rng.uniform(size=9)
        assert gaussian_ll(x, x) == 0.0

    def test_unit_error(self):
        assert gaussian_ll([1.0], [0.0]) == -0.5

    def test_equals_half_negative_mse(self, rng):
        x, xh = rng.uniform(size=16), rng.uniform(size=16)
        mse = sum((a - b) ** 2 for a, b in zip(x, xh)) / 16
        assert gaussian_ll(x, xh) == pytest.approx(-mse / 2, abs=1e-15)

    @given(st.lists(st.tuples(pixel, pixel), min_size=1, max_size=20))
    def test_relation_property(self, pairs):
        x, xh = np.array(pairs).T
        assert gaussian_ll(x, xh) == pytest.approx(-np.mean((x - xh) ** 2) / 2, abs=1e-15)
        assert gaussian_ll(x, xh) <= 0.0


class TestNllGrad:
    @pytest.mark.parametrize("kind", list(LikelihoodKind))
    def test_gradient_matches_differences(self, kind, rng):
        x = rng.uniform(size=(3, 4))
        xh = rng.uniform(0.1, 0.9, size=(3, 4))
        loss, grad = nll_and_grad(kind, x, xh)
        from bae_ood.likelihood import log_likelihood

        assert loss == pytest.approx(-np.mean(log_likelihood(kind, x, xh)), rel=1e-12)
        h = 1e-6
        for idx in np.ndindex(xh.shape):
            up, down = xh.copy(), xh.copy()
            up[idx] += h
            down[idx] -= h
            fd = (nll_and_grad(kind, x, up)[0] - nll_and_grad(kind, x, down)[0]) / (2 * h)
            assert grad[idx] == pytest.approx(fd, rel=1e-6, abs=1e-9)


class TestMaxCurve:
    def test_bernoulli_endpoints_and_midpoint(self):
        curve = dict(max_ll_curve("bernoulli", [0.0, 0.5, 1.0]))
        assert curve[0.0] == 0.0 and curve[1.0] == 0.0
        assert curve[0.5] == pytest.approx(math.log(0.5), abs=1e-12)

    def test_gaussian_flat(self):
        assert all(v == 0.0 for _, v in max_ll_curve("gaussian", np.linspace(0, 1, 37)))

    def test_bernoulli_matches_dense_grid(self):
        grid = np.linspace(0, 1, 101)
        cand = np.linspace(0, 1, 10001)[1:-1]
        cand = np.concatenate([[CLAMP], cand, [1 - CLAMP]])
        for x, value in max_ll_curve("bernoulli", grid):
            brute = np.max(x * np.log(cand) + (1 - x) * np.log1p(-cand))
            assert value == pytest.approx(brute, abs=1e-6)

    def test_cb_matches_dense_grid(self):
        grid = np.linspace(0, 1, 21)
        cand = np.concatenate([[CLAMP], np.linspace(0, 1, 200001)[1:-1], [1 - CLAMP]])
        ll = lambda x: x * np.log(cand) + (1 - x) * np.log1p(-cand) + log_cb_normalizer(cand)
        for x, value in max_ll_curve("cb", grid):
            brute = np.max(ll(x))
            assert value >= brute - 1e-12
            assert value == pytest.approx(brute, abs=1e-6)

    def test_boundary_dominance(self):
        grid = np.linspace(0, 1, 51)
        curve = max_ll_curve("bernoulli", grid)
        interior_best = max(v for x, v in curve if 0 < x < 1)
        assert curve[0][1] == 0 == curve[-1][1]
        assert interior_best < 0

    def test_cb_above_bernoulli_plus_log2(self):
        grid = np.linspace(0, 1, 41)
        for (x, b), (_, c) in zip(max_ll_curve("bernoulli", grid), max_ll_curve("cb", grid)):
            assert c >= b + math.log(2) - 1e-12

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            max_ll_curve("bernoulli", [1.5])
