"""One-dimensional Chebyshev interpolation with node doubling."""
from __future__ import annotations

import logging

import numpy as np
from numpy.polynomial import Chebyshev

__all__ = ["lobatto_points", "adaptive_interpolant"]

logger = logging.getLogger(__name__)


def lobatto_points(n, lo=0.0, hi=1.0):
    """``n`` Chebyshev-Gauss-Lobatto points on ``[lo, hi]``, ascending."""
    if n == 1:
        return np.array([0.5 * (lo + hi)])
    t = 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))
    t[0], t[-1] = 0.0, 1.0
    return lo + (hi - lo) * t


def _interp(x, y, lo, hi):
    return Chebyshev.fit(x, y, deg=len(x) - 1, domain=[lo, hi])


def adaptive_interpolant(fn, lo=0.0, hi=1.0, n0=33, tol=1e-6, max_points=1025):
    """Interpolate ``fn`` at Lobatto points, doubling the node count on failure.

    The interpolant on ``n`` points is accepted when its largest residual at
    the points added by the next doubling is within ``tol * max|fn|``.
    ``fn`` must accept an array.  Values already computed are reused since
    the Lobatto sets are nested.

    Returns
    -------
    poly : numpy.polynomial.Chebyshev
    n : int
        Number of interpolation points used.
    """
    n = n0
    x = lobatto_points(n, lo, hi)
    y = np.asarray(fn(x), dtype=float)
    while True:
        poly = _interp(x, y, lo, hi)
        m = 2 * n - 1
        xf = lobatto_points(m, lo, hi)
        new = xf[1::2]
        yn = np.asarray(fn(new), dtype=float)
        yf = np.empty(m)
        yf[0::2], yf[1::2] = y, yn
        scale = max(np.max(np.abs(yf)), np.finfo(float).tiny)
        resid = np.max(np.abs(poly(new) - yn))
        if resid <= tol * scale:
            return poly, n
        if m > max_points:
            logger.warning("Chebyshev interpolation: residual %.3g after %d points", resid / scale, m)
            return _interp(xf, yf, lo, hi), m
        n, x, y = m, xf, yf
