"""Smooth test functionals f: R^d -> R with gradient oracles.

Values and gradients are vectorised over leading axes: ``value`` maps
``(..., d)`` to ``(...)`` and ``gradient`` maps ``(..., d)`` to ``(..., d)``.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidParameter, TooRough

KINDS = ("linear", "quadratic", "sin_linear", "neg_exp_sq")


@dataclass(frozen=True)
class FunctionalSpec:
    """A functional with its gradient and smoothness metadata.

    ``smoothness_s`` is the Hölder exponent ``s = k + 1 + rho``;
    ``cs_norm_bound`` a claimed bound on the C^s norm, ``inf`` for unbounded
    functionals (linear, quadratic).
    """

    name: str
    value: object = field(repr=False)
    gradient: object = field(repr=False)
    smoothness_s: float
    cs_norm_bound: float
    params: dict = field(default_factory=dict)

    @property
    def bounded(self):
        return math.isfinite(self.cs_norm_bound)

    def spec(self):
        out = {"functional": self.name, **self.params}
        if math.isfinite(self.smoothness_s):
            out["s"] = self.smoothness_s
        return out


def _weights(w, dim):
    if w is None:
        raise InvalidParameter("this functional needs a weight vector w")
    w = np.asarray(w, dtype=float).ravel()
    if dim is not None and w.size != dim:
        raise InvalidParameter(f"w has length {w.size}, expected {dim}")
    if not np.all(np.isfinite(w)) or not np.any(w):
        raise InvalidParameter("w must be finite and nonzero")
    return w


def builtin_functional(kind, w=None, s=3.0, dim=None):
    """Construct one of the builtin functionals.

    Parameters
    ----------
    kind : {"linear", "quadratic", "sin_linear", "neg_exp_sq"}
        ``<w, theta>``, ``||theta||^2``, ``sin <w, theta>`` or
        ``exp(-||theta||^2 / 2)``.
    w : array_like, optional
        Weight vector for ``linear`` and ``sin_linear``.
    s : float, default=3.0
        Smoothness exponent assigned to the bounded functionals (they are
        C-infinity, so any ``s`` is valid; it fixes ``k`` via
        :func:`holder_order_k` and the C^s bound).
    dim : int, optional
        Checked against ``len(w)`` when given.
    """
    if kind == "linear":
        w = _weights(w, dim)
        return FunctionalSpec(
            "linear",
            lambda th: np.asarray(th, dtype=float) @ w,
            lambda th: np.broadcast_to(w, np.shape(th)).copy(),
            smoothness_s=math.inf,
            cs_norm_bound=math.inf,
            params={"w": w.tolist()},
        )
    if kind == "quadratic":
        return FunctionalSpec(
            "quadratic",
            lambda th: np.sum(np.asarray(th, dtype=float) ** 2, axis=-1),
            lambda th: 2.0 * np.asarray(th, dtype=float),
            smoothness_s=math.inf,
            cs_norm_bound=math.inf,
        )
    if not s > 1:
        raise InvalidParameter(f"smoothness s must exceed 1, got {s}")
    order = math.ceil(s)
    if kind == "sin_linear":
        w = _weights(w, dim)
        # j-th derivative is bounded by ||w||^j; the Hölder part adds at most a factor 2
        bound = 2.0 * max(1.0, float(np.linalg.norm(w))) ** order
        return FunctionalSpec(
            "sin_linear",
            lambda th: np.sin(np.asarray(th, dtype=float) @ w),
            lambda th: np.cos(np.asarray(th, dtype=float) @ w)[..., None] * w,
            smoothness_s=float(s),
            cs_norm_bound=bound,
            params={"w": w.tolist()},
        )
    if kind == "neg_exp_sq":
        # |He_j(t) e^{-t^2/2}| <= 1.09 sqrt(j!) along every direction (Cramér's inequality)
        bound = 2.0 * 1.09 * math.sqrt(math.factorial(order))
        return FunctionalSpec(
            "neg_exp_sq",
            lambda th: np.exp(-0.5 * np.sum(np.asarray(th, dtype=float) ** 2, axis=-1)),
            lambda th: -np.asarray(th, dtype=float)
            * np.exp(-0.5 * np.sum(np.asarray(th, dtype=float) ** 2, axis=-1))[..., None],
            smoothness_s=float(s),
            cs_norm_bound=bound,
        )
    raise InvalidParameter(f"unknown functional {kind!r}; expected one of {KINDS}")


def functional_from_spec(spec, dim=None):
    """Build from ``{"functional": kind, "w": [...] | "w_norm": r, "s": s}``.

    ``w_norm`` gives ``w = w_norm / sqrt(d) * (1, ..., 1)``, which lets one
    spec serve a grid of dimensions.
    """
    spec = dict(spec)
    kind = spec.pop("functional", None)
    w = spec.pop("w", None)
    w_norm = spec.pop("w_norm", None)
    s = spec.pop("s", 3.0)
    if spec:
        raise InvalidParameter(f"unknown functional parameters: {sorted(spec)}")
    if w is None and w_norm is not None:
        if dim is None:
            raise InvalidParameter("w_norm needs the dimension")
        w = np.full(dim, float(w_norm) / math.sqrt(dim))
    return builtin_functional(kind, w=w, s=s, dim=dim)


def holder_order_k(spec):
    """Bias-reduction order ``k`` with ``s = k + 1 + rho`` and ``rho`` in ``(0, 1]``.

    Accepts a :class:`FunctionalSpec` or the exponent itself.
    """
    s = spec.smoothness_s if isinstance(spec, FunctionalSpec) else float(spec)
    if not math.isfinite(s):
        raise InvalidParameter("infinite smoothness does not determine an order k")
    if s <= 1:
        raise TooRough(f"smoothness s={s} must exceed 1")
    return math.ceil(s) - 2
