"""Maximum likelihood for location families by damped Newton iteration.

The solver works on a batch of independent problems at once (data of shape
``(B, n, d)``); a single fit is a batch of one. Each problem follows its own
iterate sequence, so results do not depend on what else is in the batch.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import DimensionMismatch, InvalidParameter, NotConverged
from .model import Potential, family_from_spec

ARMIJO = 1e-4
BACKTRACK = 0.5
RIDGE = 1e-12
MAX_BACKTRACKS = 60


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class MleResult:
    theta_hat: np.ndarray
    grad_norm: float
    iterations: int
    hessian_min_eig: float
    converged: bool
    objective_trace: tuple = field(default=(), repr=False)

    def to_dict(self):
        return {
            "theta_hat": self.theta_hat.tolist(),
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "hessian_min_eig": self.hessian_min_eig,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class MleBatch:
    """Per-problem solver output for a batch; arrays have leading size ``B``."""

    theta_hat: np.ndarray
    grad_norm: np.ndarray
    iterations: np.ndarray
    hessian_min_eig: np.ndarray
    converged: np.ndarray


def _check_data(potential, data):
    data = np.asarray(data, dtype=float)
    if data.ndim != 2 or data.shape[0] < 1:
        raise InvalidParameter("data must be a non-empty (n, d) array")
    if data.shape[1] != potential.dim:
        raise DimensionMismatch(f"data has {data.shape[1]} columns but the potential has dim {potential.dim}")
    return data


def objective(potential, data, theta):
    """Empirical objective ``(1/n) sum_j V(X_j - theta)`` with gradient and Hessian in ``theta``.

    Returns
    -------
    value : float
    grad : ndarray, shape (d,)
        ``-(1/n) sum_j V'(X_j - theta)``.
    hess : ndarray, shape (d, d)
        ``(1/n) sum_j V''(X_j - theta)``.
    """
    data = _check_data(potential, data)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (potential.dim,):
        raise DimensionMismatch(f"theta must have shape ({potential.dim},)")
    z = data - theta
    value = float(np.mean(potential.value(z)))
    grad = -np.mean(potential.gradient(z), axis=0)
    hess = potential.mean_hessian(z)
    return value, grad, 0.5 * (hess + hess.T)


def _eval(potential, data, theta):
    z = data - theta[:, None, :]
    return potential.value(z).mean(axis=-1), -potential.gradient(z).mean(axis=-2), z


def _newton_direction(hess, grad):
    """Solve ``H p = -g`` per problem; ridge on failed factorisation, gradient step as last resort."""
    d = grad.shape[-1]
    step = np.empty_like(grad)
    for ridge in (0.0, RIDGE):
        H = hess + ridge * np.eye(d)
        try:
            np.linalg.cholesky(H)
            return np.linalg.solve(H, -grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            pass
    # mixed batch: handle problems one at a time
    for b in range(grad.shape[0]):
        for ridge in (0.0, RIDGE):
            try:
                np.linalg.cholesky(hess[b] + ridge * np.eye(d))
                step[b] = np.linalg.solve(hess[b] + ridge * np.eye(d), -grad[b])
                break
            except np.linalg.LinAlgError:
                continue
        else:
            step[b] = -grad[b]
    return step


def fit_mle_batch(potential, data, tol=1e-10, max_iter=100, theta0=None, record=False):
    """Solve ``B`` independent MLE problems.

    Parameters
    ----------
    potential : Potential
    data : ndarray, shape (B, n, d)
    tol : float
        Stop when ``||grad|| <= tol`` or the step is below ``tol (1 + ||theta||)``.
    max_iter : int
    theta0 : ndarray, shape (B, d), optional
        Starting points; the per-problem sample mean by default.
    record : bool
        Also return the accepted objective values per problem.
    """
    data = np.asarray(data, dtype=float)
    B, n, d = data.shape
    if d != potential.dim:
        raise DimensionMismatch(f"data has dimension {d} but the potential has dim {potential.dim}")
    theta = data.mean(axis=1) if theta0 is None else np.array(theta0, dtype=float).reshape(B, d)
    val, grad, z = _eval(potential, data, theta)
    gnorm = np.linalg.norm(grad, axis=-1)
    converged = gnorm <= tol
    failed = np.zeros(B, dtype=bool)
    iters = np.zeros(B, dtype=int)
    trace = [[v] for v in val] if record else None

    for _ in range(max_iter):
        active = np.flatnonzero(~converged & ~failed)
        if active.size == 0:
            break
        th, g, v = theta[active], grad[active], val[active]
        step = _newton_direction(potential.mean_hessian(data[active] - th[:, None, :]), g)
        slope = np.sum(g * step, axis=-1)
        tiny = np.linalg.norm(step, axis=-1) <= tol * (1.0 + np.linalg.norm(th, axis=-1))

        t = np.ones(active.size)
        new_th = th.copy()
        new_v, new_g = v.copy(), g.copy()
        pending = np.arange(active.size)
        for _ in range(MAX_BACKTRACKS):
            if pending.size == 0:
                break
            cand = th[pending] + t[pending, None] * step[pending]
            cv, cg, _ = _eval(potential, data[active[pending]], cand)
            armijo = cv <= v[pending] + ARMIJO * t[pending] * slope[pending]
            # at roundoff level Armijo cannot see progress; accept a full Newton
            # step that does not raise the objective and reduces the gradient
            flat = (t[pending] == 1.0) & (cv <= v[pending])
            flat &= np.linalg.norm(cg, axis=-1) < np.linalg.norm(g[pending], axis=-1)
            ok = armijo | flat
            acc = pending[ok]
            new_th[acc], new_v[acc], new_g[acc] = cand[ok], cv[ok], cg[ok]
            pending = pending[~ok]
            t[pending] *= BACKTRACK
        stuck = np.zeros(active.size, dtype=bool)
        stuck[pending] = True

        moved = ~stuck
        theta[active[moved]] = new_th[moved]
        val[active[moved]] = new_v[moved]
        grad[active[moved]] = new_g[moved]
        iters[active[moved]] += 1
        if record:
            for j in np.flatnonzero(moved):
                trace[active[j]].append(float(new_v[j]))
        new_gnorm = np.linalg.norm(grad[active], axis=-1)
        gnorm[active] = new_gnorm
        small_step = np.linalg.norm(t[:, None] * step, axis=-1) <= tol * (1.0 + np.linalg.norm(new_th, axis=-1))
        converged[active] = (new_gnorm <= tol) | (moved & small_step) | (stuck & tiny)
        failed[active] = stuck & ~converged[active]

    hmin = np.linalg.eigvalsh(potential.mean_hessian(data - theta[:, None, :]))[..., 0]
    batch = MleBatch(theta, gnorm, iters, hmin, converged)
    return (batch, trace) if record else batch


def fit_mle(potential, data, tol=1e-10, max_iter=100, theta0=None, raise_on_failure=False):
    """MLE ``argmin_theta (1/n) sum_j V(X_j - theta)`` for one dataset.

    Starts from the sample mean unless ``theta0`` is given. A run that stops
    without meeting the tolerance returns the last iterate with
    ``converged=False`` and emits a :class:`ConvergenceWarning`, or raises
    :class:`~lcdebias.exceptions.NotConverged` when ``raise_on_failure``.
    """
    data = _check_data(potential, data)
    start = None if theta0 is None else np.asarray(theta0, dtype=float)[None, :]
    batch, trace = fit_mle_batch(potential, data[None], tol=tol, max_iter=max_iter, theta0=start, record=True)
    res = MleResult(
        theta_hat=batch.theta_hat[0].copy(),
        grad_norm=float(batch.grad_norm[0]),
        iterations=int(batch.iterations[0]),
        hessian_min_eig=float(batch.hessian_min_eig[0]),
        converged=bool(batch.converged[0]),
        objective_trace=tuple(trace[0]),
    )
    if not res.converged:
        msg = f"MLE stopped after {res.iterations} iterations with ||grad|| = {res.grad_norm:.3g}"
        if raise_on_failure:
            raise NotConverged(msg)
        warnings.warn(msg, ConvergenceWarning, stacklevel=2)
    return res


def resolve_potential(potential, dim):
    """Accept a Potential, a family name or a family spec dict."""
    if isinstance(potential, Potential):
        if potential.dim != dim:
            raise DimensionMismatch(f"potential has dim {potential.dim}, data has {dim} columns")
        return potential
    if potential is None:
        potential = "gaussian"
    if isinstance(potential, str):
        return family_from_spec({"family": potential, "dim": dim})
    return family_from_spec({"dim": dim, **potential})


class LocationMLE(BaseEstimator):
    """Location MLE as a scikit-learn estimator.

    Parameters
    ----------
    potential : Potential, str or dict, default="gaussian"
        The noise potential, a builtin family name, or a family spec without
        ``dim`` (taken from the data).
    tol : float, default=1e-10
    max_iter : int, default=100

    Attributes
    ----------
    theta_hat_ : ndarray of shape (n_features,)
    result_ : MleResult
    n_iter_ : int
    """

    def __init__(self, potential="gaussian", tol=1e-10, max_iter=100):
        self.potential = potential
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.potential_ = resolve_potential(self.potential, X.shape[1])
        self.result_ = fit_mle(self.potential_, X, tol=self.tol, max_iter=self.max_iter)
        self.theta_hat_ = self.result_.theta_hat
        self.n_iter_ = self.result_.iterations
        return self

    def transform(self, X):
        """Centre observations at the fitted location."""
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return X - self.theta_hat_

    def score(self, X, y=None):
        """Average log-likelihood of ``X`` at ``theta_hat_``, up to the normalising constant."""
        check_is_fitted(self)
        X = check_array(X, dtype=np.float64)
        return -float(np.mean(self.potential_.value(X - self.theta_hat_)))
