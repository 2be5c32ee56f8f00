"""One-dimensional log-concave densities handled by quadrature."""

import numpy as np

from .quadrature import adaptive_simpson

# density ratio e^-50 ~ 2e-22 at the window edges; tail mass is far below 1e-12
_LOG_DROP = 50.0


class LogDensity1D:
    """Unnormalised density ``exp(logp(x))`` on ``[lower, inf)`` or the real line.

    The effective support window is found once, by widening a grid until the
    log-density at both ends is ``_LOG_DROP`` below its maximum. Log-concavity
    makes the mass outside that window negligible.
    """

    def __init__(self, logp, lower=None):
        self.logp = logp
        self.lower = lower
        self.lo, self.hi, self.log_peak = _window(logp, lower)
        self._z = adaptive_simpson(self.density, self.lo, self.hi, tol=1e-13)
        self.log_normalizer = float(np.log(self._z) + self.log_peak)

    def density(self, x):
        """Density rescaled so its peak is 1 (not normalised)."""
        with np.errstate(divide="ignore"):
            return np.exp(self.logp(x) - self.log_peak)

    def pdf(self, x):
        return self.density(x) / self._z

    def expect(self, g, tol=1e-13):
        """E g(X) by adaptive Simpson over the window."""
        return adaptive_simpson(lambda x: g(x) * self.density(x), self.lo, self.hi, tol=tol * self._z) / self._z


def _window(logp, lower):
    half = 8.0
    for _ in range(40):
        lo = -half if lower is None else lower
        grid = np.linspace(lo, half, 4001)
        with np.errstate(divide="ignore"):
            lp = logp(grid)
        top = float(np.max(lp))
        inside = lp > top - _LOG_DROP
        if not inside[-1] and (lower is not None or not inside[0]):
            i0 = max(int(np.argmax(inside)) - 1, 0)
            i1 = min(len(grid) - 1 - int(np.argmax(inside[::-1])) + 1, len(grid) - 1)
            # peak estimate refined on the located window
            fine = np.linspace(grid[i0], grid[i1], 20001)
            with np.errstate(divide="ignore"):
                top = max(top, float(np.max(logp(fine))))
            return float(grid[i0]), float(grid[i1]), top
        half *= 2.0
    raise ValueError("density does not decay; not log-concave with finite mass")
