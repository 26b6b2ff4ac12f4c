"""Trust-region minimisation with an exact (eigen-based) subproblem solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import OptimizationError

__all__ = ["TrustRegionConfig", "OptimResult", "solve_subproblem", "minimize"]

logger = logging.getLogger(__name__)

_EXPAND_FRACTION = 0.99


@dataclass(frozen=True)
class TrustRegionConfig:
    grad_tol: float = 1e-8
    delta0: float = 1.0
    max_iters: int = 200

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.delta0 > 0 and self.max_iters > 0):
            raise ValueError("trust-region settings must all be positive")


@dataclass(frozen=True)
class OptimResult:
    x: np.ndarray
    value: float
    gradient: np.ndarray
    hessian: np.ndarray
    iterations: int
    converged: bool
    message: str = ""


def solve_subproblem(g, H, delta, return_multiplier=False):
    """Minimise ``g's + s'Hs/2`` subject to ``|s| <= delta``.

    Works in the eigenbasis of ``H``: the multiplier ``lam`` is found by
    Newton's method on the secular equation ``1/|s(lam)| = 1/delta``, and
    the hard case (gradient orthogonal to the lowest eigenspace) is closed
    by moving along a lowest eigenvector to the boundary.
    """
    g = np.asarray(g, dtype=float)
    H = np.asarray(H, dtype=float)
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    xi, V = np.linalg.eigh(0.5 * (H + H.T))
    coef = V.T @ g
    scale = max(np.abs(xi).max(), 1e-300)
    gnorm = np.linalg.norm(g)
    lam_lo = max(0.0, -xi[0])

    def finish(s, lam):
        return (s, lam) if return_multiplier else s

    if xi[0] > 0:
        s = -V @ (coef / xi)
        if np.linalg.norm(s) <= delta:
            return finish(s, 0.0)

    # components that see the lowest eigenvalue
    low = np.abs(xi - xi[0]) <= 1e-12 * scale
    hard = np.all(np.abs(coef[low]) <= 1e-12 * gnorm)
    # a bracket (lam_lo, lam_lo + |g|/delta) below roundoff is the hard case numerically
    hard = hard or gnorm / delta <= 1e-14 * max(scale, lam_lo)
    if hard:
        lam = lam_lo
        c = np.where(low, 0.0, coef)
        denom = np.where(low, 1.0, xi + lam)
        s = -V @ (c / denom)
        norm_s = np.linalg.norm(s)
        if norm_s < delta:
            z = V[:, np.argmax(low)]
            # pick tau so that |s + tau z| = delta; z is orthogonal to s
            tau = np.sqrt(max(delta**2 - norm_s**2, 0.0))
            return finish(s + tau * z, lam)

    # secular equation; |s(lam)| decreases on (lam_lo, inf) and crosses delta
    # before lam_lo + |g| / delta
    lo, hi = lam_lo, lam_lo + gnorm / delta
    lam = hi
    for _ in range(200):
        denom = xi + lam
        w = coef / denom
        norm_s = np.sqrt(np.sum(w**2))
        if abs(norm_s - delta) <= 1e-14 * delta:
            break
        if norm_s > delta:
            lo = lam
        else:
            hi = lam
        # Newton on psi(lam) = 1/delta - 1/|s(lam)|
        dpsi = -np.sum(w**2 / denom) / norm_s**3
        new = lam - (1.0 / delta - 1.0 / norm_s) / dpsi
        if not (lo < new < hi):
            new = 0.5 * (lo + hi)
        if new == lam or hi - lo <= 1e-15 * max(hi, 1.0):
            break
        lam = new
    s = -V @ (coef / (xi + lam))
    norm_s = np.linalg.norm(s)
    if norm_s > delta:
        s *= delta / norm_s
    return finish(s, lam)


def _is_pd(H):
    try:
        np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError:
        return False
    return True


def minimize(fun, x0, config=None, value_only=None):
    """Minimise ``fun`` from ``x0``.

    ``fun(x)`` returns ``(value, gradient, hessian)``.  ``value_only(x)``,
    when given, is used for trial points whose step may be rejected; it
    returns the value alone (``inf`` marks an infeasible point).

    Radius updates: a ratio of actual to predicted reduction below 1/4
    shrinks the radius fourfold and retries; above 3/4 with a step on the
    boundary doubles it.  Steps are accepted when the ratio exceeds 1/4.
    Iteration stops once the gradient's max-norm is within ``grad_tol`` and
    the Hessian is positive definite.
    """
    config = config or TrustRegionConfig()
    x = np.asarray(x0, dtype=float).copy()
    y, g, H = fun(x)
    if not np.isfinite(y) or not np.all(np.isfinite(g)):
        raise OptimizationError("objective is not finite at the starting point", state=x)
    delta = config.delta0
    solves = 0
    iterations = 0
    while np.max(np.abs(g)) > config.grad_tol or not _is_pd(H):
        # compute-next-step
        accepted = False
        while not accepted:
            if solves >= config.max_iters:
                logger.info("trust region: %d subproblem solves without convergence", solves)
                return OptimResult(x, y, g, H, iterations, False, "max_iters exceeded")
            s = solve_subproblem(g, H, delta)
            solves += 1
            predicted = g @ s + 0.5 * s @ H @ s
            if predicted >= 0:
                # no model decrease available; happens only at roundoff level
                return OptimResult(x, y, g, H, iterations, False, "no predicted decrease")
            x_new = x + s
            y_new = value_only(x_new) if value_only is not None else fun(x_new)[0]
            if np.isnan(y_new):
                raise OptimizationError("objective returned NaN", state={"x": x, "trial": x_new})
            rho = (y_new - y) / predicted
            if rho < 0.25:
                delta *= 0.25
            elif rho > 0.75 and np.linalg.norm(s) >= _EXPAND_FRACTION * delta:
                delta *= 2.0
            if rho > 0.25:
                accepted = True
        x = x_new
        y, g, H = fun(x)
        iterations += 1
        if not np.isfinite(y):
            raise OptimizationError("objective is not finite at an accepted point", state=x)
    return OptimResult(x, y, g, H, iterations, True, "converged")
