import math

import numpy as np
import pytest
from sklearn.base import clone

from lcdebias.biasreduce import (
    BootstrapDebiasedEstimator,
    binomial_weights_bk,
    binomial_weights_fk,
    estimate_bk,
    estimate_fk,
    estimate_fk_at,
    run_chains,
    simulate_chain,
)
from lcdebias.exceptions import AllReplicatesFailed, InvalidParameter
from lcdebias.functionals import FunctionalSpec, builtin_functional
from lcdebias.mle import fit_mle
from lcdebias.model import GaussianPotential, ProductPotential, RadialSmoothPotential
from lcdebias.sampler import make_sampler, sample_data


def constant_functional(c=2.5):
    return FunctionalSpec("constant", lambda th: np.full(np.shape(th)[:-1], c),
                          lambda th: np.zeros(np.shape(th)), smoothness_s=math.inf, cs_norm_bound=c)


class TestWeights:
    def test_fk_examples(self):
        assert binomial_weights_fk(0) == [1]
        assert binomial_weights_fk(1) == [2, -1]
        assert binomial_weights_fk(2) == [3, -3, 1]

    def test_bk_examples(self):
        assert binomial_weights_bk(1) == [-1, 1]
        assert binomial_weights_bk(2) == [1, -2, 1]
        assert binomial_weights_bk(3) == [-1, 3, -3, 1]

    @pytest.mark.parametrize("k", range(0, 9))
    def test_sums(self, k):
        assert sum(binomial_weights_fk(k)) == 1
        assert sum(binomial_weights_bk(k)) == (1 if k == 0 else 0)

    @pytest.mark.parametrize("k", range(0, 7))
    def test_fk_is_alternating_sum_of_bk(self, k):
        total = np.zeros(k + 1, dtype=int)
        for j in range(k + 1):
            total[: j + 1] += (-1) ** j * np.array(binomial_weights_bk(j))
        assert total.tolist() == binomial_weights_fk(k)

    def test_negative(self):
        with pytest.raises(InvalidParameter):
            binomial_weights_fk(-1)


class TestChains:
    def test_k0_path(self):
        pot = ProductPotential(2)
        path = simulate_chain(pot, make_sampler(pot), 10, np.array([1.0, 2.0]), 0, rng=0)
        np.testing.assert_array_equal(path.states, [[1.0, 2.0]])

    @pytest.mark.parametrize("mode", ["equivariant", "nested"])
    def test_start_and_length(self, mode):
        pot = RadialSmoothPotential(2)
        path = simulate_chain(pot, make_sampler(pot), 15, np.array([0.5, -0.5]), 3, mode=mode, rng=1)
        assert path.states.shape == (4, 2)
        np.testing.assert_array_equal(path.states[0], [0.5, -0.5])

    def test_gaussian_chain_spread(self):
        pot = GaussianPotential(3)
        n, k, R = 40, 3, 10_000
        start = np.array([1.0, -2.0, 0.5])
        states, ok = run_chains(pot, make_sampler(pot), n, start, k, R, rng=2)
        assert ok.all()
        for j in range(1, k + 1):
            sq = np.sum((states[:, j] - start) ** 2, axis=-1)
            assert abs(sq.mean() - j * 3 / n) <= 3 * sq.std(ddof=1) / math.sqrt(R)

    def test_nested_matches_equivariant_in_law(self):
        pot = GaussianPotential(2)
        s = make_sampler(pot)
        start = np.array([0.3, 0.7])
        R = 10_000
        a, _ = run_chains(pot, s, 50, start, 2, R, mode="equivariant", rng=3)
        b, _ = run_chains(pot, s, 50, start, 2, R, mode="nested", rng=4)
        xa, xb = a[:, 2], b[:, 2]
        se_mean = np.sqrt(xa.var(axis=0, ddof=1) / R + xb.var(axis=0, ddof=1) / R)
        assert np.all(np.abs(xa.mean(axis=0) - xb.mean(axis=0)) <= 3 * se_mean)
        va, vb = xa.var(axis=0, ddof=1), xb.var(axis=0, ddof=1)
        se_var = np.sqrt(2 * va**2 / (R - 1) + 2 * vb**2 / (R - 1))
        assert np.all(np.abs(va - vb) <= 3 * se_var)

    def test_shared_prefix(self):
        pot = ProductPotential(2)
        s = make_sampler(pot)
        short, _ = run_chains(pot, s, 20, np.zeros(2), 1, 5, rng=5)
        long, _ = run_chains(pot, s, 20, np.zeros(2), 3, 5, rng=5)
        np.testing.assert_array_equal(short, long[:, :2])


class TestEstimateFk:
    def test_k0_is_plugin(self):
        pot = ProductPotential(2)
        x = sample_data(make_sampler(pot), np.ones(2), 30, rng=0)
        f = builtin_functional("sin_linear", [1.0, 2.0])
        est = estimate_fk(pot, make_sampler(pot), x, f, 0, R=50, rng=1)
        assert est.value == float(f.value(fit_mle(pot, x).theta_hat))
        assert est.se == 0.0

    def test_gaussian_quadratic_unbiased(self):
        pot = GaussianPotential(5)
        s = make_sampler(pot)
        f = builtin_functional("quadratic")
        theta = np.array([0.5, -0.2, 0.1, 0.0, 0.3])
        n, outer = 100, 2000
        ss = np.random.SeedSequence(6)
        plug, fk = [], []
        for child in ss.spawn(outer):
            x = sample_data(s, theta, n, rng=np.random.default_rng(child))
            est = estimate_fk(pot, s, x, f, 1, R=200, rng=child)
            plug.append(est.per_order[0])
            fk.append(est.value)
        err_plug = np.array(plug) - f.value(theta)
        err_fk = np.array(fk) - f.value(theta)
        se_fk = err_fk.std(ddof=1) / math.sqrt(outer)
        se_plug = err_plug.std(ddof=1) / math.sqrt(outer)
        assert abs(err_fk.mean()) <= 3 * se_fk
        assert abs(err_plug.mean() - 5 / n) <= 3 * se_plug

    def test_representation_consistency(self):
        pot = RadialSmoothPotential(2)
        s = make_sampler(pot)
        f = builtin_functional("neg_exp_sq")
        x = sample_data(s, np.array([0.2, 0.4]), 25, rng=7)
        est = estimate_fk(pot, s, x, f, 3, R=40, rng=8)
        value = est.per_order[0]
        for j in range(1, 4):
            bk = estimate_bk(pot, s, est.start, f, j, 25, R=40, rng=8)
            assert bk.value == est.per_order[j]
            value = value + (-1) ** j * bk.value
        assert value == est.value
        weights = binomial_weights_fk(3)
        states, _ = run_chains(pot, s, 25, est.start, 3, 40, rng=8)
        alt = np.mean(f.value(states) @ np.array(weights, dtype=float))
        assert alt == pytest.approx(est.value, abs=1e-12)

    def test_equivariance_of_estimator(self):
        pot = ProductPotential(2)
        s = make_sampler(pot)
        u = np.array([3.0, -1.5])
        w = np.array([0.7, 1.1])
        f = builtin_functional("sin_linear", w)
        shifted = FunctionalSpec("shifted", lambda th: f.value(np.asarray(th) + u),
                                 lambda th: f.gradient(np.asarray(th) + u), 3.0, f.cs_norm_bound)
        x = sample_data(s, np.zeros(2), 30, rng=9)
        a = estimate_fk(pot, s, x + u, f, 2, R=50, rng=10)
        b = estimate_fk(pot, s, x, shifted, 2, R=50, rng=10)
        assert a.value == pytest.approx(b.value, abs=1e-8)

    def test_deterministic(self):
        pot = ProductPotential(1)
        s = make_sampler(pot)
        x = sample_data(s, np.zeros(1), 20, rng=0)
        f = builtin_functional("sin_linear", [1.0])
        a = estimate_fk(pot, s, x, f, 2, R=30, rng=11)
        b = estimate_fk(pot, s, x, f, 2, R=30, rng=11)
        assert a == b or (a.value == b.value and a.per_order == b.per_order)

    def test_all_chains_fail(self):
        pot = RadialSmoothPotential(2)
        with pytest.raises(AllReplicatesFailed):
            estimate_fk_at(pot, make_sampler(pot), np.zeros(2), builtin_functional("neg_exp_sq"), 1, 10, R=5, rng=0,
                           max_iter=0)

    def test_invalid_arguments(self):
        pot = GaussianPotential(1)
        s = make_sampler(pot)
        f = builtin_functional("quadratic")
        with pytest.raises(InvalidParameter):
            estimate_fk_at(pot, s, np.zeros(1), f, -1, 10)
        with pytest.raises(InvalidParameter):
            estimate_fk_at(pot, s, np.zeros(1), f, 1, 10, R=0)
        with pytest.raises(InvalidParameter):
            estimate_fk_at(pot, s, np.zeros(1), f, 1, 10, mode="sideways")


class TestEstimateBk:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_constant_functional_exact_zero(self, k):
        pot = ProductPotential(2)
        bk = estimate_bk(pot, make_sampler(pot), np.ones(2), constant_functional(), k, 10, R=20, rng=1)
        assert bk.value == 0.0

    def test_gaussian_sin_first_order(self):
        pot = GaussianPotential(2)
        w = np.array([1.2, 1.6])
        n = 10
        theta = np.array([0.4, 0.3])
        f = builtin_functional("sin_linear", w)
        bk = estimate_bk(pot, make_sampler(pot), theta, f, 1, n, R=40_000, rng=2)
        a = float(w @ w) / n
        assert abs(bk.value - (math.exp(-a / 2) - 1) * math.sin(w @ theta)) <= 3 * bk.se

    def test_gaussian_quadratic_second_order(self):
        pot = GaussianPotential(3)
        bk = estimate_bk(pot, make_sampler(pot), np.ones(3), builtin_functional("quadratic"), 2, 20, R=20_000, rng=3)
        assert abs(bk.value) <= 3 * bk.se

    @pytest.mark.parametrize("k", [1, 2])
    def test_symmetric_noise_linear(self, k):
        pot = ProductPotential(2)
        f = builtin_functional("linear", [1.0, -2.0])
        bk = estimate_bk(pot, make_sampler(pot), np.zeros(2), f, k, 30, R=5_000, rng=4)
        assert abs(bk.value) <= 3 * bk.se


class TestBootstrapDebiasedEstimator:
    def test_api(self):
        x = np.random.default_rng(0).normal(size=(40, 2))
        f = builtin_functional("sin_linear", [1.0, 0.5])
        est = BootstrapDebiasedEstimator(functional=f, k=2, n_chains=50, random_state=3)
        est.fit(x)
        assert est.predict().shape == (1,)
        assert est.value_ == est.estimate_.value
        again = clone(est).fit(x)
        assert again.value_ == est.value_
        assert est.get_params()["n_chains"] == 50

    def test_mean_base_matches_mle_for_gaussian(self):
        x = np.random.default_rng(1).normal(size=(40, 2))
        f = builtin_functional("quadratic")
        a = BootstrapDebiasedEstimator(functional=f, k=1, n_chains=30, random_state=4).fit(x)
        b = BootstrapDebiasedEstimator(functional=f, k=1, n_chains=30, random_state=4, base="mean").fit(x)
        assert a.value_ == pytest.approx(b.value_, abs=1e-12)

    def test_requires_functional(self):
        with pytest.raises(InvalidParameter):
            BootstrapDebiasedEstimator().fit(np.zeros((5, 1)))
