"""Vectorised adaptive Simpson quadrature.

All open subintervals are refined together, so the integrand is called on
arrays rather than scalars.
"""

import numpy as np

from .exceptions import NonIntegrable

_EPS = np.finfo(float).eps


def integrate_intervals(f, edges, tol=1e-12, max_depth=50):
    """Integrate ``f`` over each cell of a sorted grid.

    Parameters
    ----------
    f : callable
        Vectorised integrand, ``f(x)`` for an ndarray ``x``.
    edges : array_like
        Sorted grid points; the result has ``len(edges) - 1`` entries.
    tol : float
        Absolute tolerance for the sum over all cells. Each cell receives a
        share proportional to its width.
    max_depth : int
        Bisection limit per cell.

    Returns
    -------
    ndarray
        Integral of ``f`` over each cell.
    """
    edges = np.asarray(edges, dtype=float)
    a, b = edges[:-1], edges[1:]
    if np.any(b < a):
        raise ValueError("edges must be sorted")
    width = b[-1] - a[0]
    out = np.zeros(a.size)
    if width == 0:
        return out

    m = 0.5 * (a + b)
    fa, fm, fb = f(a), f(m), f(b)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    cell_tol = tol * (b - a) / width
    idx = np.arange(a.size)
    depth = 0
    while idx.size:
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        if not np.all(np.isfinite(err)):
            raise NonIntegrable("integrand is not finite on the integration range")
        bound = np.maximum(15.0 * cell_tol, 64.0 * _EPS * np.abs(left + right))
        done = np.abs(err) <= bound
        if depth >= max_depth and not np.all(done):
            raise NonIntegrable(f"adaptive Simpson did not reach tol={tol:g} within depth {max_depth}")
        np.add.at(out, idx[done], (left + right + err / 15.0)[done])
        keep = ~done
        # children: left halves then right halves
        a, m, b = np.concatenate([a[keep], m[keep]]), np.concatenate([lm[keep], rm[keep]]), np.concatenate([m[keep], b[keep]])
        fa, fm, fb = (
            np.concatenate([fa[keep], fm[keep]]),
            np.concatenate([flm[keep], frm[keep]]),
            np.concatenate([fm[keep], fb[keep]]),
        )
        whole = np.concatenate([left[keep], right[keep]])
        cell_tol = np.concatenate([cell_tol[keep], cell_tol[keep]]) / 2.0
        idx = np.concatenate([idx[keep], idx[keep]])
        depth += 1
    return out


def adaptive_simpson(f, a, b, tol=1e-12, pieces=32, max_depth=50):
    """Integral of ``f`` over ``[a, b]`` to absolute tolerance ``tol``."""
    if a == b:
        return 0.0
    edges = np.linspace(a, b, pieces + 1)
    return float(np.sum(integrate_intervals(f, edges, tol=tol, max_depth=max_depth)))
