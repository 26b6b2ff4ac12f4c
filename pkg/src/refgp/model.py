"""Gaussian-process data model.

Observations follow ``y ~ N(X beta, sigma2 * (K(ell) + eta I))`` where
``K(ell)_ij = k(|s_i - s_j|)`` and the correlation belongs to the
power-exponential family

    k(d) = exp(-(d / ell)**gamma / gamma),     0 < gamma <= 2.

``gamma = 1`` gives the exponential kernel ``exp(-d / ell)`` and
``gamma = 2`` the squared exponential ``exp(-d**2 / (2 ell**2))``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cholesky
from scipy.spatial.distance import cdist

from .errors import ConfigError, DesignError, DomainBoundaryError

__all__ = [
    "KernelSpec",
    "Dataset",
    "FullParams",
    "distance_matrix",
    "cross_distance",
    "corr_matrix",
    "corr_matrix_d1",
    "corr_matrix_d2",
    "corr_matrix_d3",
    "gp_sample",
]


@dataclass(frozen=True)
class KernelSpec:
    """Power-exponential correlation ``exp(-(d/ell)**gamma / gamma)``."""

    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.gamma <= 2.0):
            raise ConfigError(f"kernel exponent gamma must lie in (0, 2], got {self.gamma}")

    def _q(self, ell, D):
        if not ell > 0:
            raise ConfigError(f"length ell must be positive, got {ell}")
        return (np.asarray(D, dtype=float) / ell) ** self.gamma


def _as_locations(locations):
    S = np.asarray(locations, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    if S.ndim != 2:
        raise ConfigError("locations must be an (n, d) array")
    return S


def distance_matrix(locations):
    """Euclidean distances between all pairs of locations."""
    try:
        S = _as_locations(locations)
    except ValueError as exc:  # ragged input
        raise ConfigError(f"locations have mismatched dimensions: {exc}") from None
    if S.shape[0] < 1:
        raise ConfigError("at least one location is required")
    if not np.all(np.isfinite(S)):
        raise ConfigError("location coordinates must be finite")
    D = cdist(S, S)
    np.fill_diagonal(D, 0.0)
    return D


def cross_distance(a, b):
    A, B = _as_locations(a), _as_locations(b)
    if A.shape[1] != B.shape[1]:
        raise ConfigError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return cdist(A, B)


def corr_matrix(kernel, ell, D):
    """Correlation matrix ``K(ell)``."""
    return np.exp(-kernel._q(ell, D) / kernel.gamma)


def corr_matrix_d1(kernel, ell, D):
    """First derivative of ``K`` with respect to ``ell``."""
    q = kernel._q(ell, D)
    return np.exp(-q / kernel.gamma) * q / ell


def corr_matrix_d2(kernel, ell, D):
    """Second derivative of ``K`` with respect to ``ell``."""
    q = kernel._q(ell, D)
    g = kernel.gamma
    return np.exp(-q / g) * q * (q - g - 1.0) / ell**2


def corr_matrix_d3(kernel, ell, D):
    """Third derivative of ``K`` with respect to ``ell``.

    Needed for the Hessian of the reference prior, whose information
    matrix already contains ``dK/d ell``.
    """
    q = kernel._q(ell, D)
    g = kernel.gamma
    poly = q * q - 3.0 * (g + 1.0) * q + (g + 1.0) * (g + 2.0)
    return np.exp(-q / g) * q * poly / ell**3


@dataclass(frozen=True)
class FullParams:
    beta: np.ndarray
    sigma2: float
    ell: float
    eta: float

    def __post_init__(self):
        object.__setattr__(self, "beta", np.atleast_1d(np.asarray(self.beta, dtype=float)))
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if not self.ell > 0:
            raise ConfigError("ell must be positive")
        if not self.eta >= 0:
            raise ConfigError("eta must be nonnegative")

    def as_dict(self):
        return {
            "beta": [float(b) for b in self.beta],
            "sigma2": float(self.sigma2),
            "ell": float(self.ell),
            "eta": float(self.eta),
        }


@dataclass(frozen=True)
class Dataset:
    """Immutable spatial dataset: locations (n, d), response y (n,), design X (n, p)."""

    locations: np.ndarray
    y: np.ndarray
    X: np.ndarray
    distances: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        S = _as_locations(self.locations)
        y = np.asarray(self.y, dtype=float).ravel()
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        n = S.shape[0]
        if y.shape[0] != n or X.shape[0] != n:
            raise ConfigError(
                f"inconsistent sizes: {n} locations, {y.shape[0]} observations, {X.shape[0]} design rows"
            )
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise ConfigError("observations and regressors must be finite")
        p = X.shape[1]
        if not n > p >= 1:
            raise ConfigError(f"need n > p >= 1, got n={n}, p={p}")
        if np.linalg.matrix_rank(X) < p:
            raise DesignError("regression design X is rank deficient")
        D = distance_matrix(S)
        off = D[~np.eye(n, dtype=bool)]
        if off.size and off.min() <= 0.0:
            i, j = np.argwhere((D <= 0.0) & ~np.eye(n, dtype=bool))[0]
            raise ConfigError(f"duplicate locations at rows {i} and {j}")
        for name, value in (("locations", S), ("y", y), ("X", X), ("distances", D)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def n(self):
        return self.y.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @classmethod
    def with_constant(cls, locations, y):
        """Dataset whose only regressor is the constant 1."""
        y = np.asarray(y, dtype=float)
        return cls(locations, y, np.ones((y.size, 1)))

    def subset(self, rows):
        rows = np.asarray(rows)
        return Dataset(self.locations[rows], self.y[rows], self.X[rows])


def gp_sample(locations, X, params, kernel, seed):
    """Draw ``y ~ N(X beta, sigma2 (K(ell) + eta I))``.

    ``seed`` may be an int, a sequence of ints, or a ``numpy.random.Generator``.
    No jitter is added: a covariance that does not factor raises
    ``DomainBoundaryError``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    D = distance_matrix(locations)
    n = D.shape[0]
    if X.shape != (n, params.beta.size):
        raise ConfigError(f"design shape {X.shape} incompatible with {n} locations and p={params.beta.size}")
    C = params.sigma2 * (corr_matrix(kernel, params.ell, D) + params.eta * np.eye(n))
    try:
        L = cholesky(C, lower=True)
    except LinAlgError:
        raise DomainBoundaryError("sampling covariance is not positive definite") from None
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return X @ params.beta + L @ rng.standard_normal(n)
