"""Information-theoretic lower bounds.

Prior Fisher information by quadrature, equivariant van Trees bounds for the
location and for a smooth functional, and the closed-form local and global
minimax expressions. Bounds are returned unclamped, except the global rate
which is capped at 1 by definition.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameter, NonFinite, NonIntegrable, SingularMatrix
from .quadrature import adaptive_simpson

DENSITY_GUARD = 1e-300
QUAD_TOL = 1e-9


@dataclass(frozen=True)
class Prior1D:
    """Prior density on a bounded interval.

    Parameters
    ----------
    density, derivative : callable
        Vectorised ``pi(s)`` and ``pi'(s)``; both should vanish outside ``support``.
    support : tuple of float
        ``(a, b)`` with ``a < b``.
    name : str
    """

    density: object = field(repr=False)
    derivative: object = field(repr=False)
    support: tuple
    name: str = "prior"

    def __post_init__(self):
        a, b = self.support
        if not (math.isfinite(a) and math.isfinite(b) and a < b):
            raise InvalidParameter(f"prior support must be a bounded interval, got {self.support}")

    def rescaled(self, delta):
        """``pi_delta(s) = pi(s / delta) / delta``."""
        if not delta > 0:
            raise InvalidParameter("delta must be positive")
        p, dp = self.density, self.derivative
        a, b = self.support
        return Prior1D(
            lambda s: p(np.asarray(s, dtype=float) / delta) / delta,
            lambda s: dp(np.asarray(s, dtype=float) / delta) / delta**2,
            (a * delta, b * delta),
            f"{self.name}@{delta:g}",
        )

    def mass(self, tol=QUAD_TOL):
        a, b = self.support
        return adaptive_simpson(self.density, a, b, tol=tol)

    def expect(self, g, tol=QUAD_TOL):
        """``int g(s) pi(s) ds``, split at 0 so kinks of ``g(|s|)`` sit on a node."""
        a, b = self.support
        edges = [a, 0.0, b] if a < 0.0 < b else [a, b]
        return sum(adaptive_simpson(lambda s: g(s) * self.density(s), lo, hi, tol=tol) for lo, hi in zip(edges, edges[1:]))


def cos3_prior():
    """``pi(s) = (3/4) cos^3 s`` on ``[-pi/2, pi/2]``; its Fisher information is 9/2."""

    def density(s):
        s = np.asarray(s, dtype=float)
        return np.where(np.abs(s) <= np.pi / 2, 0.75 * np.cos(s) ** 3, 0.0)

    def derivative(s):
        s = np.asarray(s, dtype=float)
        return np.where(np.abs(s) <= np.pi / 2, -2.25 * np.cos(s) ** 2 * np.sin(s), 0.0)

    return Prior1D(density, derivative, (-np.pi / 2, np.pi / 2), "cos3")


def bump_prior(width=1.0):
    """Smooth compactly supported bump ``exp(-1 / (1 - (s/width)^2))``, normalised by quadrature."""
    if not width > 0:
        raise InvalidParameter("width must be positive")

    def raw(s):
        y = np.asarray(s, dtype=float) / width
        inside = np.abs(y) < 1.0
        q = np.where(inside, 1.0 - y * y, 1.0)
        return np.where(inside, np.exp(-1.0 / q), 0.0), y, q, inside

    z = adaptive_simpson(lambda s: raw(s)[0], -width, width, tol=1e-14)

    def density(s):
        return raw(s)[0] / z

    def derivative(s):
        p, y, q, inside = raw(s)
        return np.where(inside, p * (-2.0 * y / q**2) / width, 0.0) / z

    return Prior1D(density, derivative, (-width, width), "bump")


PRIORS = {"cos3": cos3_prior, "bump": bump_prior}


def prior_fisher_info(prior, tol=QUAD_TOL):
    """``J_pi = int pi'(s)^2 / pi(s) ds`` by adaptive Simpson.

    Points where ``pi < 1e-300`` contribute zero, which resolves the 0/0 at
    the boundary zeros of a smooth compactly supported prior.
    """
    a, b = prior.support

    def integrand(s):
        p = prior.density(s)
        dp = prior.derivative(s)
        safe = p >= DENSITY_GUARD
        return np.where(safe, dp * dp / np.where(safe, p, 1.0), 0.0)

    value = adaptive_simpson(integrand, a, b, tol=tol)
    if not math.isfinite(value):
        raise NonIntegrable(f"Fisher information of prior {prior.name} is not finite")
    return value


def _as_matrix(x, d=None):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return None if d is None else x * np.eye(d)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise InvalidParameter("expected a square matrix")
    return 0.5 * (x + x.T)


def _check_psd(a, what):
    if not np.all(np.isfinite(a)):
        raise NonFinite(f"{what} has non-finite entries")
    lo = np.linalg.eigvalsh(a)[0] if a.size else 0.0
    if lo < -1e-12 * max(1.0, np.abs(a).max()):
        raise InvalidParameter(f"{what} is not positive semidefinite (min eigenvalue {lo:.3g})")


def van_trees_theta(fisher, j_pi, delta, n):
    """Equivariant van Trees bound ``(1/n) tr((I + J_pi / (delta^2 n))^{-1})`` on ``E ||theta_hat - theta||^2``.

    Parameters
    ----------
    fisher : array_like, shape (d, d)
        Per-observation Fisher information, or a scalar for ``d = 1``.
    j_pi : float or array_like, shape (d, d)
        Prior Fisher information; a scalar means ``j_pi * I``, as for a
        product prior.
    delta : float
        Prior scale.
    n : int
        Sample size.
    """
    fisher = np.atleast_2d(np.asarray(fisher, dtype=float))
    fisher = _as_matrix(fisher)
    d = fisher.shape[0]
    j = _as_matrix(j_pi, d)
    if j.shape != fisher.shape:
        raise InvalidParameter("prior Fisher matrix must match the Fisher information")
    if not (delta > 0 and n > 0):
        raise InvalidParameter("delta and n must be positive")
    _check_psd(fisher, "Fisher information")
    _check_psd(j, "prior Fisher information")
    a = fisher + j / (delta * delta * n)
    try:
        chol = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix("I + J/(delta^2 n) is singular") from exc
    inv_chol = np.linalg.solve(chol, np.eye(d))
    # tr(A^{-1}) = ||L^{-1}||_F^2
    return float(np.sum(inv_chol * inv_chol)) / n


def van_trees_functional(sigma_inv_grad_norm, inv_grad_norm, j_pi, delta, n, modulus=None, prior=None):
    """Functional van Trees bound on ``sqrt(n)`` times the root risk.

    ``||I^{-1/2} f'|| - sqrt(J_pi / (delta^2 n)) ||I^{-1} f'|| - int omega(|s|) pi_delta(s) ds``.

    Parameters
    ----------
    sigma_inv_grad_norm : float
        ``||I^{-1/2} f'(theta_0)||``, i.e. ``sigma_f``.
    inv_grad_norm : float
        ``||I^{-1} f'(theta_0)||``.
    j_pi, delta, n
        Prior Fisher information, prior scale and sample size.
    modulus : callable, optional
        Vectorised, nondecreasing ``omega(r)`` with ``omega(0) = 0``. Omitted
        means ``omega = 0``.
    prior : Prior1D, optional
        Base prior; required when ``modulus`` is given.

    Returns
    -------
    float
        The bound as is; it can be negative.
    """
    for name, v in (("sigma_inv_grad_norm", sigma_inv_grad_norm), ("inv_grad_norm", inv_grad_norm), ("j_pi", j_pi)):
        if not v >= 0:
            raise InvalidParameter(f"{name} must be nonnegative")
    if not (delta > 0 and n > 0):
        raise InvalidParameter("delta and n must be positive")
    value = float(sigma_inv_grad_norm) - math.sqrt(j_pi / (delta * delta * n)) * float(inv_grad_norm)
    if modulus is not None:
        if prior is None:
            raise InvalidParameter("a modulus term needs the prior")
        if np.asarray(modulus(0.0), dtype=float) != 0.0:
            raise InvalidParameter("modulus must vanish at 0")

        def omega(t):
            return np.broadcast_to(np.asarray(modulus(delta * np.abs(t)), dtype=float), np.shape(t))

        # integrate against pi on the unit scale: int omega(|s|) pi_delta(s) ds = int omega(delta |t|) pi(t) dt
        penalty = prior.expect(omega)
        if not math.isfinite(penalty):
            raise NonIntegrable("modulus integral is not finite")
        value -= penalty
    return value


def local_minimax_bound(m, c, cs_over_sigma, rho, n):
    """Local minimax lower bound on ``sqrt(n)`` RMSE over ``sigma_f``.

    ``1 - 3 pi / (sqrt(8 m) c) - (2 / sqrt(m)) (||f||_{C^s} / sigma_f) (c / sqrt(n))^rho``.
    """
    if not (m > 0 and c > 0 and n > 0):
        raise InvalidParameter("m, c and n must be positive")
    if not 0 < rho <= 1:
        raise InvalidParameter("rho must lie in (0, 1]")
    return 1.0 - 3.0 * math.pi / (math.sqrt(8.0 * m) * c) - 2.0 / math.sqrt(m) * cs_over_sigma * (c / math.sqrt(n)) ** rho


def global_minimax_rate(n, d, s):
    """``max(n^{-1/2}, (d/n)^{s/2})`` capped at 1; the multiplicative constant is taken as 1."""
    if not (n >= 1 and d >= 1 and s > 0):
        raise InvalidParameter("need n, d >= 1 and s > 0")
    if math.isinf(s):
        second = 0.0 if d < n else 1.0
    else:
        second = (d / n) ** (s / 2.0)
    return min(max(n**-0.5, second), 1.0)


@dataclass(frozen=True)
class BoundReport:
    """A lower-bound evaluation with its inputs echoed."""

    bound_value: float
    inputs: dict
    formula_id: str

    def __post_init__(self):
        if not math.isfinite(self.bound_value):
            raise NonFinite(f"{self.formula_id} evaluated to {self.bound_value}")

    def to_dict(self):
        return {"formula_id": self.formula_id, "inputs": dict(self.inputs), "bound_value": self.bound_value}


def _modulus(spec):
    """``{"kind": "holder", "c": c1, "rho": r}`` gives ``omega(r) = c1 r^rho``; ``"linear"`` is ``rho = 1``."""
    spec = dict(spec)
    kind = spec.pop("kind", "holder")
    c1 = float(spec.pop("c", 1.0))
    rho = float(spec.pop("rho", 1.0))
    if spec:
        raise InvalidParameter(f"unknown modulus fields: {sorted(spec)}")
    if kind == "linear":
        rho = 1.0
    elif kind != "holder":
        raise InvalidParameter(f"unknown modulus kind {kind!r}")
    if c1 < 0 or not 0 < rho <= 1:
        raise InvalidParameter("modulus needs c >= 0 and rho in (0, 1]")
    return lambda r: c1 * np.asarray(r, dtype=float) ** rho


def _prior(name):
    try:
        return PRIORS[name]()
    except KeyError:
        raise InvalidParameter(f"unknown prior {name!r}; expected one of {sorted(PRIORS)}") from None


FORMULAS = ("prior_fisher_info", "van_trees_theta", "van_trees_functional", "local_minimax", "global_minimax_rate")


def evaluate_bound(formula_id, inputs):
    """Evaluate a bound from plain inputs and wrap it in a :class:`BoundReport`.

    Priors are referred to by name (``"cos3"`` or ``"bump"``), the Fisher
    matrix as nested lists or a scalar, and the modulus as a dict, see
    :func:`_modulus`.
    """
    try:
        return _evaluate(formula_id, dict(inputs))
    except KeyError as exc:
        raise InvalidParameter(f"{formula_id} needs input {exc.args[0]!r}") from None


def _evaluate(formula_id, p):
    if formula_id == "prior_fisher_info":
        prior = _prior(p.get("prior", "cos3"))
        delta = p.get("delta", 1.0)
        value = prior_fisher_info(prior.rescaled(delta) if delta != 1.0 else prior)
    elif formula_id == "van_trees_theta":
        j = p["j_pi"] if "j_pi" in p else prior_fisher_info(_prior(p.get("prior", "cos3")))
        p["j_pi"] = j
        value = van_trees_theta(p["fisher"], j, p["delta"], p["n"])
    elif formula_id == "van_trees_functional":
        prior = _prior(p.get("prior", "cos3"))
        j = p["j_pi"] if "j_pi" in p else prior_fisher_info(prior)
        p["j_pi"] = j
        modulus = _modulus(p["modulus"]) if p.get("modulus") else None
        value = van_trees_functional(p["sigma_f"], p["inv_grad_norm"], j, p["delta"], p["n"], modulus, prior)
    elif formula_id == "local_minimax":
        value = local_minimax_bound(p["m"], p["c"], p["cs_over_sigma"], p["rho"], p["n"])
    elif formula_id == "global_minimax_rate":
        value = global_minimax_rate(p["n"], p["d"], p["s"])
    else:
        raise InvalidParameter(f"unknown formula {formula_id!r}; expected one of {FORMULAS}")
    return BoundReport(float(value), p, formula_id)
