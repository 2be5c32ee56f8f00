import numpy as np
import pytest
from scipy import integrate

from lcdebias.model import family_from_spec


def logcosh_moments(weight=1.0):
    """Independent quadrature oracle for the 1-D density prop. to exp(-(w t^2/2 + log cosh t))."""
    dens = lambda t: np.exp(-(0.5 * weight * t * t + np.logaddexp(t, -t) - np.log(2.0)))  # noqa: E731
    z = integrate.quad(dens, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0]
    var = integrate.quad(lambda t: t * t * dens(t), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-13)[0] / z
    fisher = integrate.quad(lambda t: (weight + 1.0 - np.tanh(t) ** 2) * dens(t), -np.inf, np.inf,
                            epsabs=1e-13, epsrel=1e-13)[0] / z
    return var, fisher


FAMILY_SPECS = [
    {"family": "gaussian", "dim": 3},
    {"family": "product_logcosh", "dim": 2},
    {"family": "radial_smooth", "dim": 3},
]


@pytest.fixture(params=FAMILY_SPECS, ids=lambda s: s["family"])
def potential(request):
    return family_from_spec(request.param)
