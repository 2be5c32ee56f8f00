import io
import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import stats

from lcdebias.diagnostics import (
    CSV_HEADER,
    ExperimentConfig,
    concentration_diagnostic,
    mean_based_estimator,
    normality_diagnostic,
    run_risk_experiment,
)
from lcdebias.biasreduce import estimate_fk
from lcdebias.exceptions import DegenerateSample, InvalidParameter
from lcdebias.functionals import builtin_functional
from lcdebias.model import GaussianPotential, ProductPotential
from lcdebias.sampler import make_sampler, sample_data


def sin_peak_theta(w):
    """A point with <w, theta> = pi/2."""
    w = np.asarray(w, dtype=float)
    return (math.pi / 2) * w / float(w @ w)


class TestNormality:
    def test_exact_normals(self):
        sigma, n = 2.0, 50
        e = np.random.default_rng(0).normal(scale=sigma / math.sqrt(n), size=10_000)
        assert normality_diagnostic(e, sigma, n).w2 <= 0.05

    def test_ks_dkw(self):
        N = 5000
        e = np.random.default_rng(1).normal(size=N)
        res = normality_diagnostic(e, 1.0)
        assert res.ks <= math.sqrt(math.log(2 / 0.01) / (2 * N))
        assert res.ks == pytest.approx(stats.kstest(e, "norm").statistic, abs=1e-12)

    def test_degenerate(self):
        with pytest.raises(DegenerateSample):
            normality_diagnostic(np.full(200, 0.3), 1.0)
        with pytest.raises(InvalidParameter):
            normality_diagnostic(np.arange(50.0), 1.0)
        with pytest.raises(InvalidParameter):
            normality_diagnostic(np.arange(500.0), 0.0)


class TestConcentration:
    def test_gaussian_chi_square_mean(self):
        pot = GaussianPotential(10)
        rep = concentration_diagnostic(pot, make_sampler(pot), np.ones(10), 1000, 2000, rng=2)
        assert abs(rep.mean_scaled_sq - 1.0) <= 3 * rep.mean_scaled_sq_se
        assert 0.9 <= rep.quantiles[0.5] <= 1.0
        q = [rep.quantiles[p] for p in sorted(rep.quantiles)]
        assert q == sorted(q)
        assert not rep.flagged

    def test_needs_reps(self):
        pot = GaussianPotential(1)
        with pytest.raises(InvalidParameter):
            concentration_diagnostic(pot, make_sampler(pot), np.zeros(1), 10, 50)


class TestMeanBased:
    def test_gaussian_coincides_with_mle(self):
        pot = GaussianPotential(3)
        s = make_sampler(pot)
        f = builtin_functional("sin_linear", [1.0, 0.5, -0.3])
        x = sample_data(s, np.zeros(3), 40, rng=0)
        a = mean_based_estimator(x, f, 2, 50, s, rng=3)
        b = estimate_fk(pot, s, x, f, 2, R=50, rng=3)
        assert a.value == pytest.approx(b.value, abs=1e-12)

    def test_k0_plugin(self):
        pot = ProductPotential(2)
        s = make_sampler(pot)
        f = builtin_functional("quadratic")
        x = sample_data(s, np.ones(2), 40, rng=1)
        est = mean_based_estimator(x, f, 0, 50, s, rng=2)
        assert est.value == float(f.value(x.mean(axis=0)))


def _small_config(**kw):
    base = dict(family={"family": "gaussian"}, grid=[(50, 2), (80, 3)],
                functional={"functional": "sin_linear", "w_norm": 1.5}, k_values=(0, 1, 2),
                estimators=("plugin_mle", "fk_mle", "fk_mean", "plugin_mean"), outer_reps=120, R=20, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


class TestRiskExperiment:
    def test_report_identities(self):
        rep = run_risk_experiment(_small_config())
        assert len(rep.rows) == 2 * (2 + 2 * 3)
        for r in rep.rows:
            assert r.rmse**2 == pytest.approx(r.bias**2 + r.variance, rel=1e-10)
            assert r.efficiency > 0
            assert r.reps == 120

    def test_csv_header_and_determinism(self):
        cfg = _small_config()
        a = run_risk_experiment(cfg).to_csv()
        with ThreadPoolExecutor(max_workers=4) as pool:
            b = run_risk_experiment(cfg, executor=pool).to_csv()
        assert a == b
        assert a.splitlines()[0] == ",".join(CSV_HEADER)
        assert a.splitlines()[0] == "n,d,k,estimator,functional,bias,bias_se,variance,rmse,sigma_f,efficiency,w2,ks,reps,seed"

    def test_gaussian_mean_and_mle_agree(self):
        rep = run_risk_experiment(_small_config(grid=[(40, 2)], outer_reps=30))
        for k in (1, 2):
            assert rep.row("fk_mle", k).bias == pytest.approx(rep.row("fk_mean", k).bias, abs=1e-12)

    def test_gaussian_sin_bias_matches_closed_form(self):
        w = np.array([2.0, 0.0, 0.0, 0.0, 0.0])
        n = 100
        theta = np.array([0.3, 0.1, -0.2, 0.0, 0.4])
        cfg = ExperimentConfig(family={"family": "gaussian"}, grid=[(n, 5)],
                               functional={"functional": "sin_linear", "w": w.tolist()}, k_values=(1,),
                               estimators=("plugin_mle", "fk_mle"), outer_reps=1000, R=100, theta_truth=theta.tolist(),
                               seed=12)
        rep = run_risk_experiment(cfg)
        a = float(w @ w) / n
        for est, k in (("plugin_mle", 0), ("fk_mle", 1)):
            row = rep.row(est, k)
            analytic = (-1) ** k * (math.exp(-a / 2) - 1) ** (k + 1) * math.sin(w @ theta)
            assert abs(row.bias - analytic) <= 3 * row.bias_se

    def test_gaussian_linear_efficiency(self):
        w = np.ones(10) / math.sqrt(10)
        cfg = ExperimentConfig(family={"family": "gaussian"}, grid=[(2000, 10)],
                               functional={"functional": "linear", "w": w.tolist()}, k_values=(1,),
                               estimators=("plugin_mle",), outer_reps=2000, R=1, seed=13)
        row = run_risk_experiment(cfg).row("plugin_mle", 0)
        assert row.sigma_f == pytest.approx(1.0)
        assert 0.95 <= row.efficiency <= 1.05

    def test_efficiency_decreases_toward_one(self):
        cfg = ExperimentConfig(family={"family": "gaussian"}, grid=[(500, 2), (2000, 2), (8000, 2)],
                               functional={"functional": "sin_linear", "w": [2.0, 1.0]}, k_values=(1,),
                               estimators=("fk_mle",), outer_reps=400, R=20, theta_truth=[0.1, 0.2], seed=14)
        rows = [r for r in run_risk_experiment(cfg).rows]
        eff = np.array([r.efficiency for r in rows])
        se = []
        for r in rows:
            sq = r.errors**2
            se.append(r.efficiency * sq.std(ddof=1) / (2 * sq.mean() * math.sqrt(sq.size)))
        se = np.array(se)
        for i in range(2):
            assert eff[i + 1] <= eff[i] + 3 * math.hypot(se[i], se[i + 1])
        assert abs(eff[-1] - 1) <= 3 * se[-1] + 0.03

    def test_bias_slope(self):
        w = [2.0]
        d = 1
        grid = [(int(round(d / r)), d) for r in (0.02, 0.05, 0.1)]
        cfg = ExperimentConfig(family={"family": "gaussian"}, grid=grid, functional={"functional": "sin_linear", "w": w},
                               k_values=(1,), estimators=("plugin_mle", "fk_mle"), outer_reps=20_000, R=10,
                               theta_truth=sin_peak_theta(w).tolist(), seed=15)
        rep = run_risk_experiment(cfg)
        x = np.log([d / n for n, _ in grid])
        for est, k in (("plugin_mle", 0), ("fk_mle", 1)):
            y = np.log([abs(rep.row(est, k, n=n).bias) for n, _ in grid])
            slope = np.polyfit(x, y, 1)[0]
            assert slope >= (k + 1) - 0.3, (est, slope)

    def test_config_validation(self):
        with pytest.raises(InvalidParameter):
            _small_config(grid=[])
        with pytest.raises(InvalidParameter):
            _small_config(estimators=("magic",))
        with pytest.raises(InvalidParameter):
            _small_config(outer_reps=0)
        with pytest.raises(InvalidParameter):
            run_risk_experiment(_small_config(theta_truth="somewhere"))

    def test_zero_gradient_gives_nan_efficiency(self):
        w = [1.0, 0.0]
        cfg = _small_config(grid=[(30, 2)], functional={"functional": "sin_linear", "w": w}, k_values=(1,),
                            estimators=("plugin_mle",), theta_truth=sin_peak_theta(w).tolist(), outer_reps=20)
        row = run_risk_experiment(cfg).rows[0]
        assert math.isnan(row.efficiency)
        text = run_risk_experiment(cfg).to_csv()
        assert "nan" in text.splitlines()[1]
