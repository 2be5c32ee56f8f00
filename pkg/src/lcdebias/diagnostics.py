"""Monte Carlo experiment harness: bias, risk, efficiency and normal approximation.

Every grid cell and outer replicate draws from its own keyed substream
``(cell, replicate, tag)``, and results are collected in replicate order, so
reports are identical for any executor or worker count.
"""

import csv
import io
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _random
from .biasreduce import estimate_fk_at
from .exceptions import AllReplicatesFailed, DegenerateSample, InvalidParameter, MleFailure
from .functionals import functional_from_spec
from .mle import fit_mle_batch
from .model import family_from_spec, sigma_f
from .sampler import make_sampler, sample_data, sample_many

ESTIMATORS = ("plugin_mle", "fk_mle", "fk_mean", "plugin_mean")
CSV_HEADER = (
    "n", "d", "k", "estimator", "functional", "bias", "bias_se", "variance", "rmse",
    "sigma_f", "efficiency", "w2", "ks", "reps", "seed",
)
# efficiency and normalised errors are undefined when f'(theta) is numerically zero
SIGMA_FLOOR = 1e-12
_SPHERE = re.compile(r"^\s*random_sphere\(\s*([0-9.eE+-]+)\s*\)\s*$")


@dataclass(frozen=True)
class ExperimentConfig:
    family: dict
    grid: tuple
    functional: dict
    k_values: tuple = (1,)
    estimators: tuple = ("plugin_mle", "fk_mle")
    outer_reps: int = 2000
    R: int = 200
    theta_truth: object = "random_sphere(1.0)"
    seed: int = 0
    mode: str = "equivariant"
    tol: float = 1e-10
    max_iter: int = 100

    def __post_init__(self):
        problems = []
        grid = tuple((int(n), int(d)) for n, d in self.grid)
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "k_values", tuple(int(k) for k in self.k_values))
        object.__setattr__(self, "estimators", tuple(self.estimators))
        if not grid:
            problems.append("grid must be nonempty")
        if any(n < 1 or d < 1 for n, d in grid):
            problems.append("grid entries need n >= 1 and d >= 1")
        if not self.k_values or min(self.k_values) < 0:
            problems.append("k_values must be nonempty and non-negative")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad or not self.estimators:
            problems.append(f"estimators must be a nonempty subset of {ESTIMATORS}")
        if self.outer_reps < 2 or self.R < 1:
            problems.append("outer_reps >= 2 and R >= 1 required")
        if problems:
            raise InvalidParameter("; ".join(problems))


@dataclass
class RiskRow:
    n: int
    d: int
    k: int
    estimator: str
    functional: str
    bias: float
    bias_se: float
    variance: float
    rmse: float
    sigma_f: float
    efficiency: float
    w2: float
    ks: float
    reps: int
    seed: int
    errors: np.ndarray = field(repr=False, default=None)
    failures: int = 0

    def as_record(self):
        return {name: getattr(self, name) for name in CSV_HEADER}


@dataclass
class RiskReport:
    rows: list
    config: ExperimentConfig = None

    def row(self, estimator, k=None, n=None, d=None):
        for r in self.rows:
            if r.estimator == estimator and (k is None or r.k == k) and (n is None or r.n == n) and (
                d is None or r.d == d
            ):
                return r
        raise KeyError((estimator, k, n, d))

    def to_csv(self, fh=None):
        """Write the report as CSV with the fixed header; returns the text if ``fh`` is None."""
        own = fh is None
        fh = io.StringIO() if own else fh
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow([_fmt(v) for v in r.as_record().values()])
        return fh.getvalue() if own else None


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


@dataclass(frozen=True)
class NormalityResult:
    w2: float
    ks: float


def normality_diagnostic(errors, sigma, n=1):
    """Distance of ``sqrt(n) * errors / sigma`` from the standard normal.

    ``w2`` is the root-mean-square gap between order statistics and the
    normal quantiles at ``(i - 1/2) / N``; ``ks`` the Kolmogorov-Smirnov
    distance. Pass ``n=1`` when the errors are already scaled.
    """
    errors = np.asarray(errors, dtype=float)
    if errors.size < 100:
        raise InvalidParameter("normality_diagnostic needs at least 100 errors")
    if not sigma > 0:
        raise InvalidParameter("sigma must be positive")
    if np.all(errors == errors[0]):
        raise DegenerateSample("all errors are equal")
    z = np.sort(math.sqrt(n) * errors / sigma)
    N = z.size
    i = np.arange(1, N + 1)
    q = stats.norm.ppf((i - 0.5) / N)
    w2 = float(np.sqrt(np.mean((z - q) ** 2)))
    cdf = stats.norm.cdf(z)
    ks = float(max(np.max(i / N - cdf), np.max(cdf - (i - 1) / N)))
    return NormalityResult(w2, ks)


@dataclass(frozen=True)
class ConcentrationReport:
    quantiles: dict
    mean_scaled_sq: float
    mean_scaled_sq_se: float
    bound: float
    flagged: bool
    failures: int = 0

    def to_dict(self):
        return {
            "quantiles": {str(k): v for k, v in self.quantiles.items()},
            "mean_scaled_sq": self.mean_scaled_sq,
            "mean_scaled_sq_se": self.mean_scaled_sq_se,
            "bound": self.bound,
            "flagged": self.flagged,
            "failures": self.failures,
        }


def concentration_diagnostic(potential, sampler, theta, n, reps, rng=None, levels=(0.5, 0.9, 0.99), batch=100,
                             tol=1e-10, max_iter=100):
    """Quantiles of ``sqrt(n/d) ||theta_hat - theta||`` over ``reps`` datasets.

    Flags the run when the 0.99 quantile exceeds ``10 sqrt(M) / m``. Also
    reports the mean of ``(n/d) ||theta_hat - theta||^2`` with its standard
    error.
    """
    if reps < 100:
        raise InvalidParameter("concentration_diagnostic needs reps >= 100")
    ss = _random.as_seed_sequence(rng)
    theta = np.asarray(theta, dtype=float)
    d = potential.dim
    scaled = []
    failures = 0
    for start in range(0, reps, batch):
        idx = range(start, min(start + batch, reps))
        data = theta + sample_many(sampler, [_random.generator(ss, r) for r in idx], n)
        res = fit_mle_batch(potential, data, tol=tol, max_iter=max_iter)
        failures += int((~res.converged).sum())
        err = np.linalg.norm(res.theta_hat - theta, axis=-1)[res.converged]
        scaled.append(math.sqrt(n / d) * err)
    scaled = np.concatenate(scaled)
    sq = scaled**2
    qs = {float(p): float(np.quantile(scaled, p)) for p in levels}
    bound = 10.0 * math.sqrt(potential.M) / potential.m
    flagged = qs.get(0.99, float(np.quantile(scaled, 0.99))) > bound
    return ConcentrationReport(qs, float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size)), bound, flagged,
                               failures)


def mean_based_estimator(data, functional, k, R, sampler, rng=None, mode="equivariant"):
    """``f_k`` built on the sample mean: the data estimate and every chain step use means."""
    data = np.asarray(data, dtype=float)
    return estimate_fk_at(sampler.potential, sampler, data.mean(axis=0), functional, k, data.shape[0], R=R,
                          mode=mode, rng=rng, base="mean")


def resolve_theta(spec, d, ss, cell):
    """Truth for a cell: an explicit point or ``"random_sphere(r)"``."""
    if isinstance(spec, str):
        m = _SPHERE.match(spec)
        if not m:
            raise InvalidParameter(f"theta_truth string must look like 'random_sphere(r)', got {spec!r}")
        z = _random.generator(ss, cell, _random.THETA).standard_normal(d)
        return float(m.group(1)) * z / np.linalg.norm(z)
    theta = np.asarray(spec, dtype=float)
    if theta.shape != (d,):
        raise InvalidParameter(f"theta_truth has shape {theta.shape}, expected ({d},)")
    return theta


def _partial_sums(per_order, k):
    value = per_order[0]
    for i in range(1, k + 1):
        value = value + (-1) ** i * per_order[i]
    return value


class _Cell:
    def __init__(self, config, ss, index, n, d):
        self.config, self.ss, self.index, self.n, self.d = config, ss, index, n, d
        self.potential = family_from_spec({**config.family, "dim": d})
        self.sampler = make_sampler(self.potential)
        self.functional = functional_from_spec(config.functional, dim=d)
        self.theta = resolve_theta(config.theta_truth, d, ss, index)
        self.f_true = float(self.functional.value(self.theta))
        self.sigma_f = sigma_f(self.potential.fisher_oracle(), self.functional, self.theta)
        self.kmax = max(config.k_values)

    def keys(self):
        out = []
        for est in self.config.estimators:
            if est.startswith("plugin"):
                out.append((est, 0))
            else:
                out.extend((est, k) for k in self.config.k_values)
        return out

    def replicate(self, r):
        cfg = self.config
        data = sample_data(self.sampler, self.theta, self.n, _random.generator(self.ss, self.index, r, _random.DATA))
        chain_ss = _random.substream(self.ss, self.index, r, _random.CHAIN)
        out = {}
        need_mle = any(e.endswith("_mle") for e in cfg.estimators)
        theta_hat = None
        if need_mle:
            res = fit_mle_batch(self.potential, data[None], tol=cfg.tol, max_iter=cfg.max_iter)
            theta_hat = res.theta_hat[0] if res.converged[0] else None
        xbar = data.mean(axis=0)
        for est, k in self.keys():
            base = "mle" if est.endswith("_mle") else "mean"
            point = theta_hat if base == "mle" else xbar
            if point is None:
                out[(est, k)] = math.nan
                continue
            if est.startswith("plugin"):
                out[(est, k)] = float(self.functional.value(point)) - self.f_true
        for base in ("mle", "mean"):
            est = f"fk_{base}"
            if est not in cfg.estimators:
                continue
            point = theta_hat if base == "mle" else xbar
            if point is None:
                continue
            try:
                fk = estimate_fk_at(self.potential, self.sampler, point, self.functional, self.kmax, self.n,
                                    R=cfg.R, mode=cfg.mode, rng=chain_ss, base=base, tol=cfg.tol,
                                    max_iter=cfg.max_iter)
            except (AllReplicatesFailed, MleFailure):
                for k in cfg.k_values:
                    out[(est, k)] = math.nan
                continue
            for k in cfg.k_values:
                # same chains, same accumulation order as a separate order-k run
                out[(est, k)] = float(_partial_sums(fk.per_order, k)) - self.f_true if fk.valid else math.nan
        return out


def _summarise(cell, est, k, errors, seed):
    good = errors[np.isfinite(errors)]
    N = good.size
    if N < 2:
        nan = math.nan
        return RiskRow(cell.n, cell.d, k, est, cell.functional.name, nan, nan, nan, nan, cell.sigma_f, nan, nan,
                       nan, N, seed, errors, errors.size - N)
    bias = float(good.mean())
    variance = float(np.mean((good - bias) ** 2))
    rmse = float(np.sqrt(np.mean(good**2)))
    bias_se = float(good.std(ddof=1) / math.sqrt(N))
    if cell.sigma_f > SIGMA_FLOOR:
        efficiency = math.sqrt(cell.n) * rmse / cell.sigma_f
        try:
            norm = normality_diagnostic(good, cell.sigma_f, cell.n)
            w2, ks = norm.w2, norm.ks
        except (DegenerateSample, InvalidParameter):
            w2 = ks = math.nan
    else:
        efficiency = w2 = ks = math.nan
    return RiskRow(cell.n, cell.d, k, est, cell.functional.name, bias, bias_se, variance, rmse, cell.sigma_f,
                   efficiency, w2, ks, N, seed, errors, errors.size - N)


def run_risk_experiment(config, executor=None):
    """Run every grid cell and estimator of ``config``.

    Parameters
    ----------
    config : ExperimentConfig
    executor : concurrent.futures.Executor, optional
        Used to map over outer replicates; results do not depend on it.

    Returns
    -------
    RiskReport
        One row per (cell, estimator, k); plug-in estimators report ``k = 0``.
        Errors are ``estimate - f(theta)``; ``variance`` uses ``1/N`` so that
        ``rmse^2 = bias^2 + variance``.
    """
    ss = _random.as_seed_sequence(config.seed)
    mapper = map if executor is None else executor.map
    rows = []
    for index, (n, d) in enumerate(config.grid):
        cell = _Cell(config, ss, index, n, d)
        results = list(mapper(cell.replicate, range(config.outer_reps)))
        for est, k in cell.keys():
            errors = np.array([res[(est, k)] for res in results])
            rows.append(_summarise(cell, est, k, errors, config.seed))
    return RiskReport(rows, config)

