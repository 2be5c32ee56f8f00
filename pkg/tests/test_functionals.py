import math

import numpy as np
import pytest

from lcdebias.exceptions import InvalidParameter, TooRough
from lcdebias.functionals import builtin_functional, functional_from_spec, holder_order_k

W = np.array([0.5, -1.0, 2.0])


def _all():
    return [builtin_functional("linear", W), builtin_functional("quadratic"), builtin_functional("sin_linear", W),
            builtin_functional("neg_exp_sq")]


class TestBuiltins:
    def test_sin_linear_at_orthogonal_point(self):
        f = builtin_functional("sin_linear", [1.0, 1.0])
        th = np.array([1.0, -1.0])
        assert f.value(th) == 0.0
        np.testing.assert_array_equal(f.gradient(th), [1.0, 1.0])

    def test_quadratic(self):
        f = builtin_functional("quadratic")
        assert f.value(np.ones(2)) == 2.0
        np.testing.assert_array_equal(f.gradient(np.ones(2)), [2.0, 2.0])

    def test_neg_exp_sq_at_zero(self):
        f = builtin_functional("neg_exp_sq")
        assert f.value(np.zeros(3)) == 1.0
        np.testing.assert_array_equal(f.gradient(np.zeros(3)), np.zeros(3))

    @pytest.mark.parametrize("f", _all(), ids=lambda f: f.name)
    def test_gradient_finite_differences(self, f):
        probes = np.random.default_rng(0).normal(size=(100, 3))
        h = 1e-6
        eye = np.eye(3)
        fd = np.stack([(f.value(probes + h * eye[i]) - f.value(probes - h * eye[i])) / (2 * h) for i in range(3)], -1)
        g = f.gradient(probes)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(g), 1.0)) <= 1e-5

    @pytest.mark.parametrize("f", _all(), ids=lambda f: f.name)
    def test_bounds(self, f):
        probes = np.random.default_rng(1).normal(scale=3.0, size=(500, 3))
        if not f.bounded:
            assert f.cs_norm_bound == math.inf
            return
        assert np.all(np.abs(f.value(probes)) <= f.cs_norm_bound)
        assert np.all(np.linalg.norm(f.gradient(probes), axis=-1) <= f.cs_norm_bound)

    def test_sin_linear_first_derivative_norm(self):
        f = builtin_functional("sin_linear", W)
        probes = np.random.default_rng(2).normal(size=(1000, 3))
        assert np.all(np.linalg.norm(f.gradient(probes), axis=-1) <= np.linalg.norm(W) * (1 + 1e-15))

    def test_vectorised(self):
        f = builtin_functional("sin_linear", W)
        x = np.zeros((4, 5, 3))
        assert f.value(x).shape == (4, 5)
        assert f.gradient(x).shape == (4, 5, 3)

    def test_invalid(self):
        with pytest.raises(InvalidParameter):
            builtin_functional("linear")
        with pytest.raises(InvalidParameter):
            builtin_functional("linear", [0.0, 0.0])
        with pytest.raises(InvalidParameter):
            builtin_functional("sin_linear", [1.0, np.nan])
        with pytest.raises(InvalidParameter):
            builtin_functional("cubic")
        with pytest.raises(InvalidParameter):
            builtin_functional("linear", [1.0, 2.0], dim=3)

    def test_from_spec(self):
        f = functional_from_spec({"functional": "sin_linear", "w_norm": 2.0}, dim=4)
        assert np.linalg.norm(f.params["w"]) == pytest.approx(2.0)
        assert functional_from_spec(f.spec(), dim=4).params == f.params
        with pytest.raises(InvalidParameter):
            functional_from_spec({"functional": "quadratic", "shift": 1})


class TestHolderOrder:
    @pytest.mark.parametrize("s, k", [(2.5, 1), (3.0, 1), (4.2, 3), (1.5, 0), (2.0, 0)])
    def test_examples(self, s, k):
        assert holder_order_k(s) == k
        rho = s - k - 1
        assert 0 < rho <= 1

    def test_from_spec(self):
        assert holder_order_k(builtin_functional("neg_exp_sq", s=4.2)) == 3

    def test_too_rough(self):
        with pytest.raises(TooRough):
            holder_order_k(1.0)
        with pytest.raises(InvalidParameter):
            holder_order_k(builtin_functional("quadratic"))
