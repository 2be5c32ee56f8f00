"""Log-concave location families e^{-V(x - theta)} and model-level quantities.

A :class:`Potential` evaluates ``V``, its gradient and Hessian on arrays of
shape ``(..., d)`` and carries the regularity constants ``M`` (sup of the
Hessian norm), ``L`` (Lipschitz constant of the Hessian) and ``m`` (lower
eigenvalue bound of the Fisher information).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, xlogy

from . import _random
from ._onedim import LogDensity1D
from .exceptions import InvalidParameter, NonFinite, SingularFisher

FISHER_EIG_FLOOR = 1e-10


class Potential:
    """Convex potential ``V`` of a location family.

    Subclasses implement :meth:`value`, :meth:`gradient`, :meth:`hessian`,
    :meth:`fisher_oracle` and :meth:`noise_covariance`, and set the
    constants in ``__init__``. Instances are treated as immutable.
    """

    name = "potential"

    def __init__(self, dim, M, L, m, strongly_convex=False, poincare_upper=None):
        if int(dim) != dim or dim < 1:
            raise InvalidParameter(f"dim must be a positive integer, got {dim!r}")
        self.dim = int(dim)
        self.M = float(M)
        self.L = float(L)
        self.m = float(m)
        self.strongly_convex = bool(strongly_convex)
        self._poincare_upper = poincare_upper

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def hessian(self, x):
        raise NotImplementedError

    def mean_hessian(self, x):
        """Average Hessian over axis ``-2`` of ``x`` (shape ``(..., n, d)``)."""
        return self.hessian(x).mean(axis=-3)

    def fisher_oracle(self):
        """Fisher information computed deterministically (closed form or quadrature)."""
        raise NotImplementedError

    def noise_covariance(self):
        raise NotImplementedError

    @property
    def poincare_upper(self):
        """Heuristic ``||Sigma|| d^0.1`` upper value for the Poincare constant.

        Reported metadata only; nothing in the package depends on it.
        """
        if self._poincare_upper is not None:
            return float(self._poincare_upper)
        sigma = np.linalg.eigvalsh(self.noise_covariance())[-1]
        return float(sigma * self.dim**0.1)

    def spec(self):
        return {"family": self.name, "dim": self.dim}

    def __repr__(self):
        params = ", ".join(f"{k}={v!r}" for k, v in self.spec().items() if k != "family")
        return f"{type(self).__name__}({params})"


class GaussianPotential(Potential):
    """``V(x) = ||x||^2 / 2``: standard normal noise."""

    name = "gaussian"

    def __init__(self, dim):
        super().__init__(dim, M=1.0, L=0.0, m=1.0, strongly_convex=True)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * x, axis=-1)

    def gradient(self, x):
        return np.array(x, dtype=float)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape + (self.dim,)).copy()

    def mean_hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(np.eye(self.dim), x.shape[:-2] + (self.dim, self.dim)).copy()

    def fisher_oracle(self):
        return np.eye(self.dim)

    def noise_covariance(self):
        return np.eye(self.dim)


@dataclass(frozen=True)
class OneDimPotential:
    """Convex ``v`` on the real line with derivative oracles and bounds on ``v''``."""

    name: str
    v: object
    dv: object
    d2v: object
    sup_d2v: float
    lip_d2v: float
    params: dict = field(default_factory=dict)


def logcosh_1d(quadratic_weight=1.0):
    """``v(t) = w t^2/2 + log cosh t``; ``v'' = w + sech^2 t`` lies in ``(w, w + 1]``."""
    w = float(quadratic_weight)
    if not w > 0:
        raise InvalidParameter("quadratic_weight must be positive")

    def v(t):
        t = np.asarray(t, dtype=float)
        return 0.5 * w * t * t + np.logaddexp(t, -t) - np.log(2.0)

    def dv(t):
        t = np.asarray(t, dtype=float)
        return w * t + np.tanh(t)

    def d2v(t):
        th = np.tanh(np.asarray(t, dtype=float))
        return w + 1.0 - th * th

    # |v'''| = 2 sech^2 tanh peaks at tanh = 1/sqrt(3)
    return OneDimPotential(
        "logcosh", v, dv, d2v, sup_d2v=w + 1.0, lip_d2v=4.0 / (3.0 * np.sqrt(3.0)), params={"quadratic_weight": w}
    )


def quadratic_1d():
    """``v(t) = t^2/2``; the product family is then exactly Gaussian."""
    return OneDimPotential(
        "quadratic",
        lambda t: 0.5 * np.asarray(t, dtype=float) ** 2,
        lambda t: np.array(t, dtype=float),
        lambda t: np.ones_like(np.asarray(t, dtype=float)),
        sup_d2v=1.0,
        lip_d2v=0.0,
    )


class ProductPotential(Potential):
    """``V(x) = sum_i v(x_i)`` for a one-dimensional convex ``v``.

    ``m`` is ``E v''(xi_1)``, obtained by quadrature against ``e^{-v}``.
    """

    def __init__(self, dim, v=None):
        self.v = logcosh_1d() if v is None else v
        self.marginal = LogDensity1D(lambda t: -self.v.v(t))
        self._fisher_1d = self.marginal.expect(self.v.d2v)
        self._var_1d = self.marginal.expect(lambda t: t * t) - self.marginal.expect(lambda t: t) ** 2
        inf_d2v = float(np.min(self.v.d2v(np.linspace(self.marginal.lo, self.marginal.hi, 20001))))
        super().__init__(
            dim, M=self.v.sup_d2v, L=self.v.lip_d2v, m=self._fisher_1d, strongly_convex=inf_d2v > 0
        )

    @property
    def name(self):
        return f"product_{self.v.name}"

    def value(self, x):
        return np.sum(self.v.v(x), axis=-1)

    def gradient(self, x):
        return self.v.dv(x)

    def hessian(self, x):
        d2 = self.v.d2v(x)
        out = np.zeros(d2.shape + (self.dim,))
        idx = np.arange(self.dim)
        out[..., idx, idx] = d2
        return out

    def mean_hessian(self, x):
        d2 = self.v.d2v(x).mean(axis=-2)
        out = np.zeros(d2.shape + (self.dim,))
        idx = np.arange(self.dim)
        out[..., idx, idx] = d2
        return out

    def fisher_oracle(self):
        return self._fisher_1d * np.eye(self.dim)

    def spec(self):
        return {"family": self.name, "dim": self.dim, **self.v.params}

    def noise_covariance(self):
        return self._var_1d * np.eye(self.dim)


# Gauss-Legendre rule for integrating the smooth step on [0, y]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(64)


def _step(y):
    """C-infinity step: 0 for y <= 0, 1 for y >= 1, S(y) + S(1-y) = 1."""
    y = np.asarray(y, dtype=float)
    inner = (y > 0) & (y < 1)
    yc = np.where(inner, y, 0.5)
    s = expit(1.0 / (1.0 - yc) - 1.0 / yc)
    return np.where(inner, s, (y >= 1).astype(float))


def _step_d1(y):
    y = np.asarray(y, dtype=float)
    inner = (y > 0) & (y < 1)
    yc = np.where(inner, y, 0.5)
    g = 1.0 / yc - 1.0 / (1.0 - yc)
    q = 1.0 / yc**2 + 1.0 / (1.0 - yc) ** 2
    return np.where(inner, expit(-g) * expit(g) * q, 0.0)


def _step_d2(y):
    y = np.asarray(y, dtype=float)
    inner = (y > 0) & (y < 1)
    yc = np.where(inner, y, 0.5)
    g = 1.0 / yc - 1.0 / (1.0 - yc)
    s, s1m = expit(-g), expit(g)
    q = 1.0 / yc**2 + 1.0 / (1.0 - yc) ** 2
    dq = -2.0 / yc**3 + 2.0 / (1.0 - yc) ** 3
    ds = s * s1m * q
    return np.where(inner, ds * (1.0 - 2.0 * s) * q + s * s1m * dq, 0.0)


def _step_integral(y):
    """Antiderivative of the step with value 0 at 0; equals ``y - 1/2`` for ``y >= 1``."""
    y = np.asarray(y, dtype=float)
    inner = (y > 0) & (y < 1)
    out = np.where(y >= 1, y - 0.5, 0.0)
    if np.any(inner):
        yi = y[inner]
        nodes = 0.5 * yi[:, None] * (_GL_X + 1.0)
        out[inner] = 0.5 * yi * (_step(nodes) @ _GL_W)
    return out


class RadialSmoothPotential(Potential):
    """``V(x) = phi(||x||^2)`` with ``phi'' >= 0`` supported in ``[0, radius^2]``.

    ``phi'(t) = scale * S(t / radius^2)`` for a C-infinity step ``S``, so
    ``phi'(0) = 0`` and ``V`` is flat at the origin while ``V`` grows like
    ``scale * ||x||^2`` outside the ball. The Hessian is not uniformly
    positive definite, but the Fisher information is.
    """

    name = "radial_smooth"

    def __init__(self, dim, scale=0.5, radius=1.0):
        if not scale > 0 or not radius > 0:
            raise InvalidParameter("scale and radius must be positive")
        self.scale = float(scale)
        self.radius = float(radius)
        self._tau = self.radius**2
        y = np.linspace(0.0, 1.0, 200001)[1:-1]
        a = self.scale
        # radial eigenvalue 2 phi' + 4 t phi'' dominates the tangential one
        sup_h = float(np.max(2 * a * _step(y) + 4 * a * y * _step_d1(y)))
        sup_h = max(sup_h, 2 * a)
        lip = a / np.sqrt(self._tau) * np.max(12 * _step_d1(y) * np.sqrt(y) + 8 * np.abs(_step_d2(y)) * y**1.5)
        d = int(dim)
        self.radial = LogDensity1D(lambda r: xlogy(d - 1, r) - self._phi(r * r), lower=0.0)
        c = self.radial.expect(lambda r: 2 * self._dphi(r * r) + 4 * self._d2phi(r * r) * r * r / d)
        self._fisher_scalar = c
        self._var_scalar = self.radial.expect(lambda r: r * r) / d
        super().__init__(dim, M=sup_h * (1 + 1e-6), L=float(lip) * 1.01, m=c, strongly_convex=False)

    def _phi(self, t):
        return self.scale * self._tau * _step_integral(np.asarray(t, dtype=float) / self._tau)

    def _dphi(self, t):
        return self.scale * _step(np.asarray(t, dtype=float) / self._tau)

    def _d2phi(self, t):
        return self.scale / self._tau * _step_d1(np.asarray(t, dtype=float) / self._tau)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self._phi(np.sum(x * x, axis=-1))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        t = np.sum(x * x, axis=-1)
        return 2.0 * self._dphi(t)[..., None] * x

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        t = np.sum(x * x, axis=-1)
        eye = np.eye(self.dim)
        return (
            2.0 * self._dphi(t)[..., None, None] * eye
            + 4.0 * self._d2phi(t)[..., None, None] * (x[..., :, None] * x[..., None, :])
        )

    def mean_hessian(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[-2]
        t = np.sum(x * x, axis=-1)
        iso = 2.0 * self._dphi(t).mean(axis=-1)
        outer = np.einsum("...j,...ja,...jb->...ab", 4.0 * self._d2phi(t), x, x) / n
        outer = 0.5 * (outer + np.swapaxes(outer, -1, -2))
        return iso[..., None, None] * np.eye(self.dim) + outer

    def fisher_oracle(self):
        return self._fisher_scalar * np.eye(self.dim)

    def noise_covariance(self):
        return self._var_scalar * np.eye(self.dim)

    def spec(self):
        return {"family": self.name, "dim": self.dim, "scale": self.scale, "radius": self.radius}


FAMILIES = ("gaussian", "product_logcosh", "radial_smooth")


def family_from_spec(spec):
    """Build a potential from ``{"family": ..., "dim": ..., **params}``."""
    spec = dict(spec)
    family = spec.pop("family", None)
    dim = spec.pop("dim", None)
    if dim is None or isinstance(dim, bool) or int(dim) != dim or dim < 1:
        raise InvalidParameter(f"family spec needs a positive integer 'dim', got {dim!r}")
    if family == "gaussian":
        allowed = set()
        pot = lambda: GaussianPotential(dim)  # noqa: E731
    elif family == "product_logcosh":
        allowed = {"quadratic_weight"}
        pot = lambda: ProductPotential(dim, logcosh_1d(**spec))  # noqa: E731
    elif family == "radial_smooth":
        allowed = {"scale", "radius"}
        pot = lambda: RadialSmoothPotential(dim, **spec)  # noqa: E731
    else:
        raise InvalidParameter(f"unknown family {family!r}; expected one of {FAMILIES}")
    extra = set(spec) - allowed
    if extra:
        raise InvalidParameter(f"unknown parameters for {family}: {sorted(extra)}")
    return pot()


@dataclass(frozen=True)
class FisherEstimate:
    matrix: np.ndarray
    mc_se: np.ndarray
    method: str
    samples: int

    def to_dict(self):
        return {
            "matrix": self.matrix.tolist(),
            "mc_se": self.mc_se.tolist(),
            "method": self.method,
            "samples": self.samples,
        }


@dataclass(frozen=True)
class MCValue:
    """A Monte Carlo mean and its standard error."""

    value: float
    se: float


def _chunks(total, size):
    start = 0
    while start < total:
        yield start, min(size, total - start)
        start += size


def fisher_information(potential, method="hessian", samples=100_000, rng=None, sampler=None, chunk_size=100_000):
    """Monte Carlo Fisher information ``E V'(xi) V'(xi)^T`` or ``E V''(xi)``.

    Draws are generated in chunks with keyed substreams, so the estimate is
    independent of how chunks are scheduled.

    Parameters
    ----------
    potential : Potential
    method : {"score", "hessian"}
    samples : int
        Number of noise draws, at least 100.
    rng : int, SeedSequence or Generator
    sampler : NoiseSampler, optional
        Defaults to the registered sampler for ``potential``.

    Returns
    -------
    FisherEstimate
    """
    from .sampler import make_sampler, sample_noise

    if method not in ("score", "hessian"):
        raise InvalidParameter(f"method must be 'score' or 'hessian', got {method!r}")
    if samples < 100:
        raise InvalidParameter("fisher_information needs at least 100 samples")
    sampler = make_sampler(potential) if sampler is None else sampler
    ss = _random.as_seed_sequence(rng)
    d = potential.dim
    s1 = np.zeros((d, d))
    s2 = np.zeros((d, d))
    for c, (start, size) in enumerate(_chunks(samples, chunk_size)):
        xi = sample_noise(sampler, size, _random.generator(ss, c))
        if method == "score":
            g = potential.gradient(xi)
            terms = g[:, :, None] * g[:, None, :]
        else:
            terms = potential.hessian(xi)
        if not np.all(np.isfinite(terms)):
            raise NonFinite(f"non-finite {method} terms in Fisher estimate")
        s1 += terms.sum(axis=0)
        s2 += (terms * terms).sum(axis=0)
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean * mean, 0.0) * samples / (samples - 1)
    mat = 0.5 * (mean + mean.T)
    se = np.sqrt(var / samples)
    return FisherEstimate(matrix=mat, mc_se=0.5 * (se + se.T), method=method, samples=int(samples))


def _fisher_matrix(fisher):
    return np.asarray(fisher.matrix if isinstance(fisher, FisherEstimate) else fisher, dtype=float)


def fisher_inverse(fisher):
    """Inverse of a Fisher matrix via symmetric eigendecomposition."""
    mat = _fisher_matrix(fisher)
    w, q = np.linalg.eigh(0.5 * (mat + mat.T))
    if w[0] < FISHER_EIG_FLOOR:
        raise SingularFisher(f"Fisher information has eigenvalue {w[0]:.3g} below {FISHER_EIG_FLOOR:g}")
    return (q / w) @ q.T


def sigma_f(fisher, functional, theta):
    """Efficient standard deviation ``sqrt(<I^{-1} f'(theta), f'(theta)>)``."""
    g = np.asarray(functional.gradient(np.asarray(theta, dtype=float)), dtype=float)
    val = float(g @ fisher_inverse(fisher) @ g)
    return float(np.sqrt(max(val, 0.0)))


def kl_divergence_mc(potential, theta, theta_prime, samples=100_000, rng=None, sampler=None):
    """Monte Carlo ``KL(P_theta || P_theta')`` as ``E V(xi + theta - theta') - V(xi)``."""
    from .sampler import make_sampler, sample_noise

    if samples < 100:
        raise InvalidParameter("kl_divergence_mc needs at least 100 samples")
    delta = np.asarray(theta, dtype=float) - np.asarray(theta_prime, dtype=float)
    if not np.any(delta):
        return MCValue(0.0, 0.0)
    sampler = make_sampler(potential) if sampler is None else sampler
    xi = sample_noise(sampler, samples, _random.as_generator(rng))
    terms = potential.value(xi + delta) - potential.value(xi)
    if not np.all(np.isfinite(terms)):
        raise NonFinite("overflow in KL integrand")
    return MCValue(float(terms.mean()), float(terms.std(ddof=1) / np.sqrt(samples)))


@dataclass(frozen=True)
class DerivativeCheck:
    """Worst-case discrepancies found by :func:`check_potential`."""

    gradient_rel_err: float
    hessian_rel_err: float
    asymmetry: float
    min_eig: float
    max_hessian_norm: float
    lipschitz_ratio: float

    @property
    def passed(self):
        return (
            self.gradient_rel_err <= 1e-5
            and self.hessian_rel_err <= 1e-4
            and self.asymmetry <= 1e-12
            and self.min_eig >= -1e-12
            and self.max_hessian_norm <= 1 + 1e-8
            and self.lipschitz_ratio <= 1 + 1e-6
        )


def _rel(err, ref):
    return float(np.max(np.abs(err) / np.maximum(np.abs(ref), 1.0)))


def check_potential(potential, probes=100, rng=None):
    """Validate derivative oracles and claimed constants at random probes.

    Probes are drawn from ``N(0, 4 I)``. Finite differences are central with
    step ``1e-6`` (gradient) and ``1e-5`` (Hessian). ``max_hessian_norm`` is
    the largest ``||V''|| / M`` seen, ``lipschitz_ratio`` the largest
    ``||V''(x) - V''(y)|| / (L ||x - y||)`` over probe pairs.
    """
    gen = _random.as_generator(rng)
    d = potential.dim
    x = 2.0 * gen.standard_normal((probes, d))
    y = 2.0 * gen.standard_normal((probes, d))
    eye = np.eye(d)

    g = potential.gradient(x)
    h = 1e-6
    fd_g = np.stack(
        [(potential.value(x + h * eye[i]) - potential.value(x - h * eye[i])) / (2 * h) for i in range(d)], axis=-1
    )
    H = potential.hessian(x)
    h2 = 1e-5
    fd_h = np.stack(
        [(potential.gradient(x + h2 * eye[i]) - potential.gradient(x - h2 * eye[i])) / (2 * h2) for i in range(d)],
        axis=-1,
    )
    eigs = np.linalg.eigvalsh(H)
    norms = np.abs(eigs).max(axis=-1)
    Hy = potential.hessian(y)
    diff = np.linalg.norm(H - Hy, ord=2, axis=(-2, -1))
    dist = np.linalg.norm(x - y, axis=-1)
    if potential.L > 0:
        lip = float(np.max(diff / (potential.L * dist)))
    else:
        lip = 0.0 if np.max(diff) <= 1e-12 else np.inf
    return DerivativeCheck(
        gradient_rel_err=_rel(g - fd_g, g),
        hessian_rel_err=_rel(H - fd_h, H),
        asymmetry=float(np.max(np.abs(H - np.swapaxes(H, -1, -2)))),
        min_eig=float(eigs.min()),
        max_hessian_norm=float(np.max(norms) / potential.M) if potential.M > 0 else 0.0,
        lipschitz_ratio=lip,
    )
