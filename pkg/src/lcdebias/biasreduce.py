"""Iterated parametric bootstrap bias reduction along the bootstrap chain.

With ``T g(theta) = E_theta g(theta_hat)`` and ``B = T - I``, the order-k
estimator is ``f_k = sum_{j<=k} (-1)^j B^j f``. ``B^j f`` at a point is the
expected j-th finite difference of ``f`` along a bootstrap chain started
there, so ``f_k`` is estimated by averaging over ``R`` simulated chains.

Two chain constructions are available. ``nested`` refits the MLE on fresh
data drawn at the current state. ``equivariant`` adds MLEs of pure noise to
the start point, which has the same law because the MLE commutes with
translations.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from . import _random
from .exceptions import AllReplicatesFailed, InvalidParameter, MleFailure
from .mle import _check_data, fit_mle, fit_mle_batch, resolve_potential
from .sampler import make_sampler, sample_many

MODES = ("equivariant", "nested")
BASES = ("mle", "mean")
# fraction of dropped chains above which an estimate is flagged invalid
MAX_DROP_FRACTION = 0.01


def binomial_weights_fk(k):
    """Weights ``(-1)^j C(k+1, j+1)``, j = 0..k, of ``f(theta^(j))`` in ``f_k``."""
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    return [(-1) ** j * math.comb(k + 1, j + 1) for j in range(k + 1)]


def binomial_weights_bk(k):
    """Weights ``(-1)^(k-j) C(k, j)``, j = 0..k: the k-th forward difference."""
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    return [(-1) ** (k - j) * math.comb(k, j) for j in range(k + 1)]


@dataclass(frozen=True)
class ChainPath:
    states: np.ndarray
    mode: str
    seed_key: tuple = ()


@dataclass(frozen=True)
class FkEstimate:
    """Monte Carlo estimate of ``f_k`` at ``start``.

    ``per_order[j]`` estimates ``(B^j f)(start)`` from the same chains
    (``per_order[0]`` is ``f(start)``) and ``value`` is their alternating
    sum. ``replications`` counts the chains kept; ``dropped`` those removed
    because an inner MLE did not converge.
    """

    value: float
    se: float
    replications: int
    k: int
    per_order: tuple
    mode: str
    start: np.ndarray = field(repr=False, default=None)
    dropped: int = 0
    valid: bool = True

    def to_dict(self):
        return {
            "value": self.value,
            "se": self.se,
            "k": self.k,
            "R": self.replications,
            "per_order": list(self.per_order),
            "mode": self.mode,
            "dropped": self.dropped,
            "valid": self.valid,
            "theta_hat": None if self.start is None else self.start.tolist(),
        }


@dataclass(frozen=True)
class BkEstimate:
    value: float
    se: float
    replications: int
    k: int
    dropped: int = 0


def _check_mode(mode, base="mle"):
    if mode not in MODES:
        raise InvalidParameter(f"mode must be one of {MODES}, got {mode!r}")
    if base not in BASES:
        raise InvalidParameter(f"base must be one of {BASES}, got {base!r}")


def _point_estimate(potential, data, base, tol, max_iter):
    """Location estimates for a batch ``(B, n, d)`` and a convergence mask."""
    if base == "mean":
        return data.mean(axis=1), np.ones(data.shape[0], dtype=bool)
    res = fit_mle_batch(potential, data, tol=tol, max_iter=max_iter)
    return res.theta_hat, res.converged


def run_chains(potential, sampler, n, start, k, R, mode="equivariant", rng=None, base="mle", tol=1e-10, max_iter=100):
    """Simulate ``R`` bootstrap chains of length ``k`` from ``start``.

    The noise for chain ``r`` at step ``j`` comes from the substream keyed
    ``(r, j)`` below ``rng``, so chains of different lengths share their
    common prefix exactly.

    Returns
    -------
    states : ndarray, shape (R, k + 1, d)
    ok : ndarray of bool, shape (R,)
        False where some inner fit failed to converge.
    """
    _check_mode(mode, base)
    start = np.asarray(start, dtype=float)
    ss = _random.as_seed_sequence(rng)
    d = potential.dim
    states = np.empty((R, k + 1, d))
    states[:, 0] = start
    ok = np.ones(R, dtype=bool)
    for j in range(1, k + 1):
        noise = sample_many(sampler, [_random.generator(ss, r, j) for r in range(R)], n)
        if mode == "equivariant":
            inc, conv = _point_estimate(potential, noise, base, tol, max_iter)
            states[:, j] = states[:, j - 1] + inc
        else:
            est, conv = _point_estimate(potential, states[:, j - 1, None, :] + noise, base, tol, max_iter)
            states[:, j] = est
        ok &= conv
    return states, ok


def simulate_chain(potential, sampler, n, start, k, mode="equivariant", rng=None, tol=1e-10, max_iter=100):
    """One bootstrap chain ``theta^(0) = start, ..., theta^(k)``.

    Raises :class:`~lcdebias.exceptions.MleFailure` if an inner fit does not
    converge.
    """
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    ss = _random.as_seed_sequence(rng)
    states, ok = run_chains(potential, sampler, n, start, k, 1, mode=mode, rng=ss, tol=tol, max_iter=max_iter)
    if not ok[0]:
        raise MleFailure("an inner MLE fit did not converge")
    return ChainPath(states=states[0], mode=mode, seed_key=tuple(ss.spawn_key))


def order_differences(fvals, k):
    """Per-chain finite differences ``sum_j (-1)^(i-j) C(i,j) f(theta^(j))`` for i = 1..k.

    ``fvals`` has shape ``(R, >= k + 1)``; the result has shape ``(R, k)``.
    Terms are accumulated in increasing ``j``, so the same column is produced
    whatever the chain length.
    """
    R = fvals.shape[0]
    out = np.empty((R, k))
    for i in range(1, k + 1):
        acc = np.zeros(R)
        for j, wt in enumerate(binomial_weights_bk(i)):
            acc = acc + wt * fvals[:, j]
        out[:, i - 1] = acc
    return out


def _mean(col):
    return float(np.mean(np.ascontiguousarray(col)))


def _kept(ok):
    kept = int(ok.sum())
    if kept == 0:
        raise AllReplicatesFailed("every bootstrap chain had a failed inner fit")
    return kept


def _fk_from_chains(functional, start, states, ok, k, mode, dropped_total):
    fstart = float(functional.value(start))
    kept = _kept(ok)
    fvals = functional.value(states[ok])
    diffs = order_differences(fvals, k)
    per_order = [fstart] + [_mean(diffs[:, i]) for i in range(k)]
    value = fstart
    for i in range(1, k + 1):
        value = value + (-1) ** i * per_order[i]
    signs = np.array([(-1) ** i for i in range(1, k + 1)], dtype=float)
    corr = diffs @ signs
    se = float(np.std(corr, ddof=1) / math.sqrt(kept)) if kept > 1 else math.nan
    dropped = dropped_total - kept
    return FkEstimate(
        value=float(value),
        se=se,
        replications=kept,
        k=k,
        per_order=tuple(per_order),
        mode=mode,
        start=np.array(start, dtype=float),
        dropped=dropped,
        valid=dropped <= MAX_DROP_FRACTION * dropped_total,
    )


def estimate_fk_at(potential, sampler, start, functional, k, n, R=200, mode="equivariant", rng=None, base="mle",
                   tol=1e-10, max_iter=100):
    """``f_k`` at a given point, from ``R`` chains of sample size ``n``."""
    if k < 0:
        raise InvalidParameter("k must be non-negative")
    start = np.asarray(start, dtype=float)
    if k == 0:
        return FkEstimate(float(functional.value(start)), 0.0, 0, 0, (float(functional.value(start)),), mode,
                          start=start.copy())
    if R < 1:
        raise InvalidParameter("R must be at least 1")
    states, ok = run_chains(potential, sampler, n, start, k, R, mode=mode, rng=rng, base=base, tol=tol,
                            max_iter=max_iter)
    return _fk_from_chains(functional, start, states, ok, k, mode, R)


def estimate_fk(potential, sampler, data, functional, k, R=200, mode="equivariant", rng=None, tol=1e-10,
                max_iter=100):
    """Bias-reduced estimate ``f_k(theta_hat)`` from a dataset.

    Fits ``theta_hat`` once, then averages the alternating sum of chain
    differences over ``R`` chains started at ``theta_hat``. ``k = 0`` is the
    plug-in ``f(theta_hat)`` with ``se = 0``.

    Parameters
    ----------
    potential, sampler
        The model and its noise sampler.
    data : ndarray, shape (n, d)
    functional : FunctionalSpec
    k : int
        Order of the Neumann partial sum.
    R : int, default=200
        Number of chains.
    mode : {"equivariant", "nested"}
    rng : int, SeedSequence or Generator
        Chain ``r`` at step ``j`` uses the substream keyed ``(r, j)``.

    Returns
    -------
    FkEstimate
    """
    data = _check_data(potential, data)
    res = fit_mle(potential, data, tol=tol, max_iter=max_iter)
    if not res.converged:
        raise MleFailure("the MLE on the observed data did not converge")
    return estimate_fk_at(potential, sampler, res.theta_hat, functional, k, data.shape[0], R=R, mode=mode, rng=rng,
                          tol=tol, max_iter=max_iter)


def estimate_bk(potential, sampler, start, functional, k, n, R=200, mode="equivariant", rng=None, base="mle",
                tol=1e-10, max_iter=100):
    """Monte Carlo ``(B^k f)(start)``: the mean k-th difference of ``f`` along ``R`` chains.

    With the same ``rng`` the chains coincide with those behind
    :func:`estimate_fk`, and the two agree bit for bit.
    """
    if k < 1:
        raise InvalidParameter("estimate_bk needs k >= 1")
    if R < 1:
        raise InvalidParameter("R must be at least 1")
    start = np.asarray(start, dtype=float)
    states, ok = run_chains(potential, sampler, n, start, k, R, mode=mode, rng=rng, base=base, tol=tol,
                            max_iter=max_iter)
    kept = _kept(ok)
    col = order_differences(functional.value(states[ok]), k)[:, k - 1]
    se = float(np.std(col, ddof=1) / math.sqrt(kept)) if kept > 1 else math.nan
    return BkEstimate(_mean(col), se, kept, k, dropped=R - kept)


class BootstrapDebiasedEstimator(BaseEstimator):
    """Bias-reduced plug-in estimator ``f_k(theta_hat)`` with the scikit-learn API.

    Parameters
    ----------
    functional : FunctionalSpec
    potential : Potential, str or dict, default="gaussian"
    k : int, default=1
    n_chains : int, default=200
        Number of bootstrap chains ``R``.
    mode : {"equivariant", "nested"}, default="equivariant"
    base : {"mle", "mean"}, default="mle"
        Location estimator used for the data and along the chains.
    random_state : int, SeedSequence or None
    tol, max_iter
        Passed to the MLE solver.

    Attributes
    ----------
    estimate_ : FkEstimate
    value_, se_ : float
    theta_hat_ : ndarray
    """

    def __init__(self, functional=None, potential="gaussian", k=1, n_chains=200, mode="equivariant", base="mle",
                 random_state=None, tol=1e-10, max_iter=100):
        self.functional = functional
        self.potential = potential
        self.k = k
        self.n_chains = n_chains
        self.mode = mode
        self.base = base
        self.random_state = random_state
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        if self.functional is None:
            raise InvalidParameter("functional is required")
        _check_mode(self.mode, self.base)
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.potential_ = resolve_potential(self.potential, X.shape[1])
        sampler = make_sampler(self.potential_)
        if self.base == "mle":
            self.estimate_ = estimate_fk(self.potential_, sampler, X, self.functional, self.k, R=self.n_chains,
                                         mode=self.mode, rng=self.random_state, tol=self.tol,
                                         max_iter=self.max_iter)
        else:
            self.estimate_ = estimate_fk_at(self.potential_, sampler, X.mean(axis=0), self.functional, self.k,
                                            X.shape[0], R=self.n_chains, mode=self.mode, rng=self.random_state,
                                            base="mean")
        self.value_ = self.estimate_.value
        self.se_ = self.estimate_.se
        self.theta_hat_ = self.estimate_.start
        return self

    def predict(self, X=None):
        """The fitted estimate of ``f(theta)``, as a length-1 array."""
        check_is_fitted(self)
        return np.array([self.value_])
