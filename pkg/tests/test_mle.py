import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize
from sklearn.base import clone

from lcdebias.exceptions import DimensionMismatch, InvalidParameter, NotConverged
from lcdebias.mle import ConvergenceWarning, LocationMLE, fit_mle, objective
from lcdebias.model import GaussianPotential, ProductPotential, RadialSmoothPotential, family_from_spec
from lcdebias.sampler import make_sampler, sample_data


def _data(pot, n, seed, theta=None):
    theta = np.zeros(pot.dim) if theta is None else theta
    return sample_data(make_sampler(pot), theta, n, rng=seed)


class TestObjective:
    def test_gaussian_stationary_at_mean(self):
        x = np.random.default_rng(0).normal(size=(40, 3))
        _, g, H = objective(GaussianPotential(3), x, x.mean(axis=0))
        assert np.linalg.norm(g) <= 1e-14
        np.testing.assert_array_equal(H, np.eye(3))

    def test_single_point(self, potential):
        x = np.full((1, potential.dim), 0.3)
        v, g, _ = objective(potential, x, x[0])
        z = np.zeros(potential.dim)
        assert v == potential.value(z)
        np.testing.assert_array_equal(g, -potential.gradient(z))

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            objective(GaussianPotential(2), np.zeros((3, 3)), np.zeros(2))
        with pytest.raises(InvalidParameter):
            objective(GaussianPotential(2), np.zeros((0, 2)), np.zeros(2))


class TestFitMle:
    def test_gaussian_is_sample_mean(self):
        x = np.random.default_rng(1).normal(size=(25, 4)) + 3.0
        res = fit_mle(GaussianPotential(4), x, theta0=np.full(4, -10.0))
        np.testing.assert_allclose(res.theta_hat, x.mean(axis=0), atol=1e-10)
        assert res.converged and res.grad_norm <= 1e-10

    def test_symmetric_pair(self):
        a = 1.7
        res = fit_mle(ProductPotential(1), np.array([[-a], [a]]))
        assert abs(res.theta_hat[0]) <= 1e-10

    def test_bisection_oracle(self):
        pot = ProductPotential(1)
        x = _data(pot, 15, 2)
        score = lambda th: float(np.sum(pot.gradient(x - th)))  # noqa: E731
        root = optimize.brentq(score, -10, 10, xtol=1e-14)
        assert fit_mle(pot, x).theta_hat[0] == pytest.approx(root, abs=1e-10)

    def test_monotone_descent_and_start_independence(self, potential):
        x = _data(potential, 60, 3, theta=np.full(potential.dim, 2.0))
        a = fit_mle(potential, x, theta0=np.zeros(potential.dim))
        b = fit_mle(potential, x)
        assert np.all(np.diff(a.objective_trace) <= 0)
        assert np.all(np.diff(b.objective_trace) <= 0)
        np.testing.assert_allclose(a.theta_hat, b.theta_hat, atol=1e-8)
        assert a.hessian_min_eig >= 0

    def test_not_converged(self):
        pot = RadialSmoothPotential(2)
        x = _data(pot, 30, 4) + 5.0
        with pytest.warns(ConvergenceWarning):
            res = fit_mle(pot, x, theta0=np.array([40.0, -40.0]), max_iter=1)
        assert not res.converged
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            with pytest.raises(NotConverged):
                fit_mle(pot, x, theta0=np.array([40.0, -40.0]), max_iter=1, raise_on_failure=True)

    @pytest.mark.parametrize("spec", [{"family": "gaussian", "dim": 2}, {"family": "product_logcosh", "dim": 3},
                                      {"family": "radial_smooth", "dim": 2}], ids=lambda s: s["family"])
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), shift=st.lists(st.floats(-50, 50), min_size=3, max_size=3))
    def test_equivariance(self, spec, seed, shift):
        pot = family_from_spec(spec)
        u = np.asarray(shift[: pot.dim])
        x = _data(pot, 20, seed)
        a = fit_mle(pot, x).theta_hat
        b = fit_mle(pot, x + u).theta_hat
        np.testing.assert_allclose(b, a + u, atol=1e-8)


class TestLocationMLE:
    def test_estimator_api(self):
        x = np.random.default_rng(5).normal(size=(30, 2))
        est = LocationMLE(potential="product_logcosh", tol=1e-12)
        assert est.get_params()["tol"] == 1e-12
        est.fit(x)
        assert est.theta_hat_.shape == (2,)
        assert est.n_iter_ >= 1
        np.testing.assert_allclose(est.transform(x), x - est.theta_hat_)
        assert np.isfinite(est.score(x))
        c = clone(est)
        assert c.get_params() == est.get_params()
        assert not hasattr(c, "theta_hat_")

    def test_spec_dict_potential(self):
        x = np.random.default_rng(6).normal(size=(30, 3))
        est = LocationMLE(potential={"family": "radial_smooth", "scale": 0.5}).fit(x)
        assert est.potential_.dim == 3
