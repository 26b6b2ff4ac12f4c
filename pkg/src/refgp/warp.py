"""Posterior brackets along Hessian eigenvectors and monotone cubic warps.

A bracket ``(a, b)`` marks where the negative log posterior has risen by
``log(1/eps)`` from its minimum along a direction.  The warp is the
three-knot monotone cubic through ``(0, a)``, ``(0.5, 0)`` and ``(1, b)``
that maps the unit interval onto the bracket.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, FlatTailError

__all__ = [
    "Bracket",
    "MonotoneCubic",
    "bracket_direction",
    "fit_warp",
    "warp_eval",
    "warp_deriv",
    "warp_inverse",
]

MAX_EXTENT = 50.0
_KNOTS = np.array([0.0, 0.5, 1.0])


@dataclass(frozen=True)
class Bracket:
    a: float
    b: float

    def __post_init__(self):
        if not (self.a < 0 < self.b):
            raise ConfigError(f"degenerate bracket a={self.a}, b={self.b}")


def _crossing(rise, level, sign, max_extent, xtol):
    """First ``t > 0`` with ``rise(sign * t) = level`` on a scan with steps of at most one.

    Capping the step keeps the scan from jumping over the first crossing
    into a region where ``f`` is dominated by roundoff.
    """
    inner, outer = 0.0, 1.0
    while True:
        r = rise(sign * outer)
        if r >= level:
            break
        if outer >= max_extent:
            raise FlatTailError(
                f"posterior rises by only {r:.3g} < {level:.3g} within "
                f"{max_extent} of the mode (direction sign {sign:+d})"
            )
        inner, outer = outer, min(outer + min(outer, 1.0), max_extent)
    if np.isfinite(r):
        return brentq(lambda t: rise(sign * t) - level, inner, outer,
                      xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)
    # inf marks an infeasible point: bisect for the first point at or above the
    # level, counting infeasible as above, and stay on the feasible side of a wall
    while outer - inner > xtol * max(1.0, outer):
        mid = 0.5 * (inner + outer)
        if rise(sign * mid) >= level:
            outer = mid
        else:
            inner = mid
    return outer if np.isfinite(rise(sign * outer)) else inner


def bracket_direction(f, u_map, v, eps=1e-5, max_extent=MAX_EXTENT, xtol=1e-12):
    """Signed distances ``a < 0 < b`` along ``v`` where ``f`` rises by ``log(1/eps)``.

    Parameters
    ----------
    f : callable
        Objective on the plane, returning ``inf`` for infeasible points.
    u_map : array_like
        Minimiser of ``f``.
    v : array_like
        Unit direction.
    eps : float
        Relative posterior height at the bracket ends, in ``(0, 1)``.
    max_extent : float
        Largest distance searched before giving up.

    Raises
    ------
    FlatTailError
        If ``f`` does not rise enough within ``max_extent``.
    """
    if not 0 < eps < 1:
        raise ConfigError("eps must lie in (0, 1)")
    u_map = np.asarray(u_map, dtype=float)
    v = np.asarray(v, dtype=float)
    f0 = f(u_map)
    level = np.log(1.0 / eps)

    def rise(t):
        return f(u_map + t * v) - f0

    b = _crossing(rise, level, +1, max_extent, xtol)
    a = -_crossing(rise, level, -1, max_extent, xtol)
    return Bracket(a, b)


@dataclass(frozen=True)
class MonotoneCubic:
    """Piecewise cubic Hermite interpolant through three knots on ``[0, 1]``."""

    values: np.ndarray
    tangents: np.ndarray

    @property
    def knots(self):
        return _KNOTS

    @property
    def a(self):
        return float(self.values[0])

    @property
    def b(self):
        return float(self.values[2])

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        if np.any((x < 0) | (x > 1)) or np.any(np.isnan(x)):
            raise ConfigError("warp argument outside [0, 1]")
        piece = (x >= 0.5).astype(int)
        h = 0.5
        t = (x - _KNOTS[piece]) / h
        return x, piece, t, h

    def __call__(self, x):
        return warp_eval(self, x)


def fit_warp(bracket):
    """Fritsch-Carlson monotone cubic through ``(0, a), (0.5, 0), (1, b)``.

    Endpoint tangents equal the adjacent secants and the interior tangent
    is their mean; each interval is then limited to the circle
    ``alpha^2 + beta^2 <= 9``.
    """
    if not isinstance(bracket, Bracket):
        bracket = Bracket(*bracket)
    y = np.array([bracket.a, 0.0, bracket.b])
    d = np.diff(y) / np.diff(_KNOTS)
    m = np.array([d[0], 0.5 * (d[0] + d[1]), d[1]])
    for k in range(2):
        alpha, beta = m[k] / d[k], m[k + 1] / d[k]
        r2 = alpha**2 + beta**2
        if r2 > 9.0:
            tau = 3.0 / np.sqrt(r2)
            m[k] = tau * alpha * d[k]
            m[k + 1] = tau * beta * d[k]
    y.setflags(write=False)
    m.setflags(write=False)
    return MonotoneCubic(y, m)


def warp_eval(w, x):
    """Value of the warp at ``x`` in ``[0, 1]``."""
    x, piece, t, h = w._locate(x)
    y0, y1 = w.values[piece], w.values[piece + 1]
    m0, m1 = w.tangents[piece], w.tangents[piece + 1]
    t2, t3 = t * t, t * t * t
    out = ((2 * t3 - 3 * t2 + 1) * y0 + (t3 - 2 * t2 + t) * h * m0
           + (-2 * t3 + 3 * t2) * y1 + (t3 - t2) * h * m1)
    return out if out.ndim else float(out)


def warp_deriv(w, x):
    """Derivative of the warp at ``x``; nonnegative by construction."""
    x, piece, t, h = w._locate(x)
    y0, y1 = w.values[piece], w.values[piece + 1]
    m0, m1 = w.tangents[piece], w.tangents[piece + 1]
    t2 = t * t
    out = ((6 * t2 - 6 * t) * (y0 - y1) / h + (3 * t2 - 4 * t + 1) * m0
           + (3 * t2 - 2 * t) * m1)
    out = np.maximum(out, 0.0)
    return out if out.ndim else float(out)


def warp_inverse(w, d):
    """Solve ``w(x) = d`` for ``x``; values outside ``[a, b]`` give ``nan``."""
    d = np.asarray(d, dtype=float)
    inside = (d >= w.a) & (d <= w.b)
    lo = np.where(d < 0, 0.0, 0.5)
    hi = lo + 0.5
    dd = np.where(inside, d, 0.0)
    # bisection to full precision; the cubic is monotone on each piece
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = warp_eval(w, mid) < dd
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    x = np.where(inside, 0.5 * (lo + hi), np.nan)
    return x if x.ndim else float(x)
