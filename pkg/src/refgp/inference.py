"""Deterministic posterior inference for ``(ell, eta)`` and derived quantities.

:func:`fit` locates the posterior mode in ``u = (log ell, log eta)``, rotates
to the eigenvectors of the Hessian there, brackets the posterior mass along
each eigenvector, warps the bracket onto ``[0, 1]`` and interpolates

    g(x) = exp(-(f(u_map + w1(x1) v1 + w2(x2) v2) - f(u_map)))

with an adaptive sparse grid.  Integrating the interpolant against the warp
derivatives ``w1' w2'`` gives a quadrature rule
``{(ell_k, eta_k), w_k}`` for the posterior, from which predictive
distributions and marginals are mixtures of closed-form components.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import stats
from scipy.optimize import brentq
from scipy.spatial.distance import cdist

from .chebyshev import adaptive_interpolant
from .errors import ConfigError, DomainBoundaryError, NumericalError, OptimizationError
from .model import FullParams, corr_matrix, distance_matrix
from .optimizer import TrustRegionConfig, minimize
from .posterior import build_workspace, f_eval_full, f_value_or_inf, ml_objective
from .sparsegrid import WeightFunction, approximate, quadrature_weights
from .warp import bracket_direction, fit_warp, warp_deriv, warp_eval, warp_inverse

__all__ = [
    "FitConfig",
    "QuadratureRule",
    "PosteriorSurrogate",
    "MixtureMarginal",
    "GridMarginal",
    "PredictiveDistribution",
    "find_map",
    "fit",
    "posterior_expect",
    "conditional_predictive",
    "predict",
    "sigma2_marginal",
    "beta_marginal",
    "length_marginal",
    "noise_marginal",
    "ml_fit",
    "ml_predict",
]

logger = logging.getLogger(__name__)

DEFAULT_STARTS = tuple(itertools.product((-3.0, -1.0, 1.0), repeat=2))


@dataclass(frozen=True)
class FitConfig:
    """Settings for :func:`fit`.

    ``tol`` is the sparse-grid tolerance and ``eps`` the relative posterior
    height at the bracket ends.
    """

    tol: float = 1e-4
    eps: float = 1e-5
    tau: float | None = None
    max_nodes: int = 20000
    trust_region: TrustRegionConfig = field(default_factory=TrustRegionConfig)
    starts: tuple = DEFAULT_STARTS
    cheb_points: int = 33
    marginal_tol: float = 1e-4
    gl_order: int = 64
    max_extent: float = 50.0

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("tol must be positive")
        if not self.marginal_tol > 0:
            raise ConfigError("marginal_tol must be positive")
        if not 0 < self.eps < 1:
            raise ConfigError("eps must lie in (0, 1)")
        if self.max_nodes < 1 or self.cheb_points < 2 or self.gl_order < 1:
            raise ConfigError("node counts must be positive")
        if not self.starts:
            raise ConfigError("need at least one optimizer start")


@dataclass(frozen=True)
class QuadratureRule:
    """Posterior quadrature nodes (columns ``ell``, ``eta``) and weights summing to one."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def ell(self):
        return self.nodes[:, 0]

    @property
    def eta(self):
        return self.nodes[:, 1]

    def __len__(self):
        return len(self.weights)


class _CachedObjective:
    """``f_value_or_inf`` with memoisation keyed on the exact point."""

    def __init__(self, dataset, kernel):
        self.dataset, self.kernel = dataset, kernel
        self.cache = {}

    def __call__(self, u):
        key = (float(u[0]), float(u[1]))
        if key not in self.cache:
            self.cache[key] = f_value_or_inf(self.dataset, self.kernel, key)
        return self.cache[key]


@dataclass
class PosteriorSurrogate:
    """Sparse-grid stand-in for the posterior of ``(ell, eta)``.

    Attributes
    ----------
    u_map, f_map : MAP point in log coordinates and the objective there.
    eigvals, eigvecs : Hessian eigenpairs at the MAP (descending, columns).
    brackets, warps : per eigen-direction.
    grid : sparse grid of ``g`` on ``[0, 1]^2``.
    Z : integral of the surrogate over the warped square.
    rule : normalised quadrature rule.
    """

    dataset: object
    kernel: object
    config: FitConfig
    u_map: np.ndarray
    f_map: float
    hessian: np.ndarray
    eigvals: np.ndarray
    eigvecs: np.ndarray
    brackets: tuple
    warps: tuple
    grid: object
    Z: float
    rule: QuadratureRule
    x_nodes: np.ndarray
    u_nodes: np.ndarray
    evaluations: int = 0

    def to_u(self, x):
        """Map points of ``[0, 1]^2`` to ``u`` coordinates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = np.column_stack([warp_eval(self.warps[k], x[:, k]) for k in range(2)])
        return self.u_map + d @ self.eigvecs.T

    def to_x(self, u):
        """Inverse of :meth:`to_u`; rows outside the bracketed rectangle give ``nan``."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        d = (u - self.u_map) @ self.eigvecs
        return np.column_stack([warp_inverse(self.warps[k], d[:, k]) for k in range(2)])

    def g_tilde(self, x):
        """Surrogate of ``g`` on ``[0, 1]^2``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.grid(x)

    def density_u(self, u):
        """Normalised surrogate posterior density of ``u``; zero outside the brackets."""
        x = self.to_x(u)
        out = np.zeros(x.shape[0])
        ok = ~np.isnan(x).any(axis=1)
        if ok.any():
            out[ok] = self.g_tilde(x[ok]) / self.Z
        return out

    @cached_property
    def node_stats(self):
        """Per-node ``S2``, ``A^-1`` and ``beta_bar`` at the rule's nodes."""
        S2, A_inv, beta = [], [], []
        p = self.dataset.p
        for (ell, eta), w in zip(self.rule.nodes, self.rule.weights):
            if w == 0.0:
                # infeasible node (zero posterior); placeholder stats never contribute
                S2.append(1.0)
                A_inv.append(np.eye(p))
                beta.append(np.zeros(p))
                continue
            ws = build_workspace(self.dataset, self.kernel, ell, eta)
            S2.append(ws.S2)
            A_inv.append(ws.A_inv)
            beta.append(ws.beta_bar)
        return np.array(S2), np.array(A_inv), np.array(beta)

    def summary(self):
        return {
            "u_map": [float(v) for v in self.u_map],
            "ell_map": float(np.exp(self.u_map[0])),
            "eta_map": float(np.exp(self.u_map[1])),
            "f_map": float(self.f_map),
            "eigenvalues": [float(v) for v in self.eigvals],
            "eigenvectors": [[float(v) for v in col] for col in self.eigvecs.T],
            "brackets": [[b.a, b.b] for b in self.brackets],
            "grid_nodes": int(self.grid.n_nodes),
            "grid_budget_exceeded": bool(self.grid.budget_exceeded),
            "Z": float(self.Z),
            "posterior_evaluations": int(self.evaluations),
        }


def _oriented_eigh(H):
    """Eigenpairs sorted by descending eigenvalue; each vector's first nonzero entry positive."""
    xi, V = np.linalg.eigh(0.5 * (H + H.T))
    order = np.argsort(-xi, kind="stable")
    xi, V = xi[order], V[:, order]
    for k in range(V.shape[1]):
        nz = np.flatnonzero(np.abs(V[:, k]) > 1e-14)
        if nz.size and V[nz[0], k] < 0:
            V[:, k] = -V[:, k]
    return xi, V


def _multistart(fun, value_only, starts, tr_config, what):
    best = None
    for x0 in starts:
        try:
            res = minimize(fun, np.asarray(x0, dtype=float), tr_config, value_only=value_only)
        except NumericalError as exc:
            logger.info("%s: start %s failed: %s", what, x0, exc)
            continue
        if not res.converged:
            logger.info("%s: start %s did not converge (%s)", what, x0, res.message)
            continue
        if best is None or res.value < best.value:
            best = res
    if best is None:
        raise OptimizationError(f"{what}: no start converged", state={"starts": list(starts)})
    return best


def find_map(dataset, kernel, config=None):
    """Multi-start trust-region minimisation of the negative log posterior."""
    config = config or FitConfig()

    def fun(u):
        ev = f_eval_full(dataset, kernel, u)
        return ev.value, ev.gradient, ev.hessian

    return _multistart(fun, lambda u: f_value_or_inf(dataset, kernel, u),
                       config.starts, config.trust_region, "MAP search")


def fit(dataset, kernel, config=None):
    """Build the sparse-grid posterior surrogate and its quadrature rule."""
    config = config or FitConfig()
    opt = find_map(dataset, kernel, config)
    u_map, f_map, H = opt.x, opt.value, opt.hessian
    xi, V = _oriented_eigh(H)
    if xi[-1] <= 0:
        raise OptimizationError("Hessian at the MAP is not positive definite", state=opt)

    fu = _CachedObjective(dataset, kernel)
    brackets = tuple(
        bracket_direction(fu, u_map, V[:, k], config.eps, config.max_extent) for k in range(2)
    )
    warps = tuple(fit_warp(b) for b in brackets)

    def g_points(x):
        x = np.atleast_2d(x)
        d = np.column_stack([warp_eval(warps[k], x[:, k]) for k in range(2)])
        us = u_map + d @ V.T
        vals = np.array([fu(u) for u in us])
        return np.exp(-(vals - f_map))

    def target(x):
        return g_points(x)[0]

    grid = approximate(target, tol=config.tol, tau=config.tau, dim=2, max_nodes=config.max_nodes)
    omegas = [WeightFunction(lambda x, k=k: warp_deriv(warps[k], x), 2, (0.0, 0.5, 1.0))
              for k in range(2)]
    W = quadrature_weights(grid, omegas)
    raw = W * grid.values
    Z = float(raw.sum())
    if not Z > 0:
        raise NumericalError("surrogate integrates to a nonpositive value")
    x_nodes = grid.nodes
    d = np.column_stack([warp_eval(warps[k], x_nodes[:, k]) for k in range(2)])
    u_nodes = u_map + d @ V.T
    rule = QuadratureRule(np.exp(u_nodes), raw / Z)
    return PosteriorSurrogate(
        dataset=dataset, kernel=kernel, config=config, u_map=u_map, f_map=f_map, hessian=H,
        eigvals=xi, eigvecs=V, brackets=brackets, warps=warps, grid=grid, Z=Z, rule=rule,
        x_nodes=x_nodes, u_nodes=u_nodes, evaluations=len(fu.cache),
    )


def posterior_expect(surrogate, fn):
    """``sum_k w_k fn(ell_k, eta_k)`` over the surrogate's rule."""
    rule = surrogate.rule if isinstance(surrogate, PosteriorSurrogate) else surrogate
    vals = np.array([fn(l, e) for l, e in rule.nodes], dtype=float)
    return float(rule.weights @ vals)


# ---------------------------------------------------------------------------
# mixtures of closed-form components


class MixtureMarginal:
    """Weighted mixture of scalar t or inverse-gamma distributions.

    ``kind="t"``: components ``t(df, loc, scale)``.
    ``kind="inverse-gamma"``: components with shape ``a`` and scale ``scale``.
    Weights come from a quadrature rule and sum to one.
    """

    def __init__(self, kind, weights, loc=None, scale=None, df=None, shape=None):
        self.kind = kind
        self.weights = np.asarray(weights, dtype=float)
        if kind == "t":
            self._dist = stats.t(df, loc=np.asarray(loc, float), scale=np.asarray(scale, float))
            self.df = df
        elif kind == "inverse-gamma":
            self._dist = stats.invgamma(shape, scale=np.asarray(scale, float))
            self.shape = shape
        else:
            raise ConfigError(f"unknown mixture kind {kind!r}")
        self.loc = None if loc is None else np.asarray(loc, float)
        self.scale = np.asarray(scale, float)

    def _mix(self, method, x):
        x = np.asarray(x, dtype=float)
        vals = getattr(self._dist, method)(x[..., None])
        return vals @ self.weights

    def pdf(self, x):
        return self._mix("pdf", x)

    def cdf(self, x):
        return np.clip(self._mix("cdf", x), 0.0, 1.0)

    def _support_bracket(self, q):
        lo = np.min(self._dist.ppf(min(q, 1e-3) / 4))
        hi = np.max(self._dist.ppf(1 - (1 - max(q, 1 - 1e-3)) / 4))
        return lo, hi

    def quantile(self, q):
        """Inverse CDF by root finding."""
        q = float(q)
        if not 0 < q < 1:
            raise ConfigError("quantile level must lie in (0, 1)")
        lo, hi = self._support_bracket(q)
        while self.cdf(lo) > q:
            lo = lo - (hi - lo) if self.kind == "t" else lo / 2
        while self.cdf(hi) < q:
            hi = hi + (hi - lo)
        return brentq(lambda t: float(self.cdf(t)) - q, lo, hi, xtol=1e-14, rtol=1e-13)

    def median(self):
        return self.quantile(0.5)

    def interval(self, level=0.95):
        """Equal-tailed credible interval with coverage ``level``."""
        a = 0.5 * (1 - level)
        return self.quantile(a), self.quantile(1 - a)

    def mean(self):
        m = self._dist.mean()
        return float(m @ self.weights)

    def var(self):
        m = self._dist.mean()
        second = self._dist.var() + m**2
        return float(second @ self.weights - (m @ self.weights) ** 2)


class GridMarginal:
    """Marginal of ``ell`` or ``eta`` from a Chebyshev density in log coordinates.

    The interpolated density may dip slightly below zero near the bracket
    ends; it is clipped at zero and the clipped polynomial is integrated
    exactly between its real roots, so the CDF is monotone.

    Moments are deliberately not provided: the density is cut off at the
    bracket boundary and the heavy tails are not represented.
    """

    kind = "grid-1d"

    def __init__(self, poly, lo, hi, n_points):
        self.poly = poly
        self.lo, self.hi = float(lo), float(hi)
        self.n_points = n_points
        self._cum = poly.integ(lbnd=self.lo)
        roots = poly.roots()
        tol = 1e-9 * (self.hi - self.lo)
        real = np.sort(roots[np.abs(roots.imag) <= tol].real)
        real = real[(real > self.lo) & (real < self.hi)]
        self._breaks = np.concatenate([[self.lo], real, [self.hi]])
        mids = 0.5 * (self._breaks[:-1] + self._breaks[1:])
        self._positive = poly(mids) > 0
        pieces = np.where(self._positive, np.diff(self._cum(self._breaks)), 0.0)
        self._before = np.concatenate([[0.0], np.cumsum(pieces)])
        self.total = float(self._before[-1])
        if not self.total > 0:
            raise NumericalError("marginal density integrates to a nonpositive value")

    def pdf_log(self, t):
        """Density of ``log`` of the parameter."""
        t = np.asarray(t, dtype=float)
        inside = (t >= self.lo) & (t <= self.hi)
        vals = np.maximum(self.poly(np.clip(t, self.lo, self.hi)), 0.0)
        return np.where(inside, vals / self.total, 0.0)

    def cdf_log(self, t):
        t = np.clip(np.asarray(t, dtype=float), self.lo, self.hi)
        k = np.clip(np.searchsorted(self._breaks, t, side="right") - 1, 0, len(self._positive) - 1)
        partial = np.where(self._positive[k], self._cum(t) - self._cum(self._breaks[k]), 0.0)
        return np.clip((self._before[k] + partial) / self.total, 0.0, 1.0)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            t = np.log(x)
        return np.where(x > 0, self.pdf_log(t) / np.where(x > 0, x, 1.0), 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x > 0, self.cdf_log(np.log(np.where(x > 0, x, 1.0))), 0.0)

    def quantile(self, q):
        q = float(q)
        if not 0 < q < 1:
            raise ConfigError("quantile level must lie in (0, 1)")
        t = brentq(lambda s: float(self.cdf_log(s)) - q, self.lo, self.hi, xtol=1e-14, rtol=1e-13)
        return float(np.exp(t))

    def median(self):
        return self.quantile(0.5)

    def interval(self, level=0.95):
        a = 0.5 * (1 - level)
        return self.quantile(a), self.quantile(1 - a)


def sigma2_marginal(surrogate, dataset=None):
    """Mixture of inverse-gamma ``((n-p)/2, S2_k/2)`` posteriors of ``sigma2``."""
    ds = dataset or surrogate.dataset
    S2, _, _ = surrogate.node_stats
    return MixtureMarginal("inverse-gamma", surrogate.rule.weights,
                           shape=0.5 * (ds.n - ds.p), scale=0.5 * S2)


def beta_marginal(surrogate, dataset=None, j=0):
    """Mixture of t posteriors of ``beta_j`` (zero-based ``j``)."""
    ds = dataset or surrogate.dataset
    if not 0 <= j < ds.p:
        raise ConfigError(f"regressor index {j} outside 0..{ds.p - 1}")
    S2, A_inv, beta = surrogate.node_stats
    nu = ds.n - ds.p
    scale = np.sqrt(A_inv[:, j, j] * S2 / nu)
    return MixtureMarginal("t", surrogate.rule.weights, loc=beta[:, j], scale=scale, df=nu)


def _segment(surrogate, axis, t):
    """Interval of the other log coordinate where ``u[axis] = t`` lies in the brackets."""
    V, u0 = surrogate.eigvecs, surrogate.u_map
    other = 1 - axis
    lo, hi = -np.inf, np.inf
    for k in range(2):
        a, b = surrogate.brackets[k].a, surrogate.brackets[k].b
        base = V[axis, k] * (t - u0[axis])
        c = V[other, k]
        if abs(c) < 1e-15:
            if not a <= base <= b:
                return None
            continue
        e1, e2 = (a - base) / c, (b - base) / c
        lo, hi = max(lo, min(e1, e2)), min(hi, max(e1, e2))
    if not lo < hi:
        return None
    return u0[other] + lo, u0[other] + hi


def _log_marginal(surrogate, axis):
    V = surrogate.eigvecs
    corners = np.array([[b1, b2] for b1 in (surrogate.brackets[0].a, surrogate.brackets[0].b)
                        for b2 in (surrogate.brackets[1].a, surrogate.brackets[1].b)])
    span = corners @ V.T[:, axis]
    lo, hi = surrogate.u_map[axis] + span.min(), surrogate.u_map[axis] + span.max()
    tg, wg = np.polynomial.legendre.leggauss(surrogate.config.gl_order)

    def density(ts):
        # all Gauss-Legendre points in one batch of surrogate evaluations
        ts = np.atleast_1d(ts)
        half = np.zeros(ts.size)
        us = np.zeros((ts.size, tg.size, 2))
        for i, t in enumerate(ts):
            seg = _segment(surrogate, axis, t)
            if seg is None:
                continue
            half[i] = 0.5 * (seg[1] - seg[0])
            us[i, :, axis] = t
            us[i, :, 1 - axis] = half[i] * tg + 0.5 * (seg[1] + seg[0])
        live = half > 0
        out = np.zeros(ts.size)
        if live.any():
            dens = surrogate.density_u(us[live].reshape(-1, 2)).reshape(-1, tg.size)
            out[live] = half[live] * (dens @ wg)
        return out

    poly, n = adaptive_interpolant(density, lo, hi, n0=surrogate.config.cheb_points,
                                   tol=surrogate.config.marginal_tol, max_points=513)
    return GridMarginal(poly, lo, hi, n)


def length_marginal(surrogate):
    """Posterior marginal of ``ell``."""
    return _log_marginal(surrogate, 0)


def noise_marginal(surrogate):
    """Posterior marginal of ``eta``."""
    return _log_marginal(surrogate, 1)


# ---------------------------------------------------------------------------
# prediction


def _as_points(locations, d):
    pts = np.asarray(locations, dtype=float)
    if pts.size == 0:
        return np.empty((0, d))
    if pts.ndim == 1:
        pts = pts[:, None] if d == 1 else pts[None, :]
    if pts.shape[1] != d or not np.all(np.isfinite(pts)):
        raise ConfigError(f"new locations must be finite with dimension {d}")
    return pts


def _new_design(dataset, new_X, m):
    if new_X is None:
        if dataset.p == 1 and np.allclose(dataset.X, dataset.X[0, 0]):
            return np.full((m, 1), dataset.X[0, 0])
        raise ConfigError("new_X is required when the design is not a constant column")
    X2 = np.asarray(new_X, dtype=float).reshape(m, -1)
    if X2.shape[1] != dataset.p:
        raise ConfigError(f"new_X must have {dataset.p} columns")
    return X2


def _check_new_locations(dataset, S2):
    if S2.shape[0] and np.min(cdist(S2, dataset.locations)) <= 0:
        raise ConfigError("a new location coincides with a sample location")
    if S2.shape[0] > 1:
        D = distance_matrix(S2)
        if np.min(D[~np.eye(len(S2), dtype=bool)]) <= 0:
            raise ConfigError("new locations must be distinct")


def conditional_predictive(dataset, kernel, ell, eta, new_locations, new_X=None):
    """Multivariate t of new observations given ``y`` and ``(ell, eta)``.

    Returns ``(location, shape, df)`` with ``df = n - p``: the universal
    kriging mean and ``S2 / df`` times the kriging covariance (nugget
    included).  Only the sample correlation matrix is factorised, so new
    locations arbitrarily close to sample locations stay well posed.
    """
    S1 = dataset.locations
    S2 = _as_points(new_locations, S1.shape[1])
    m, n, p = S2.shape[0], dataset.n, dataset.p
    X2 = _new_design(dataset, new_X, m)
    G11 = corr_matrix(kernel, ell, dataset.distances)
    G11[np.diag_indices(n)] += eta
    G22 = corr_matrix(kernel, ell, cdist(S2, S2))
    G22[np.diag_indices(m)] += eta
    try:
        L = np.linalg.cholesky(G11)
    except np.linalg.LinAlgError:
        raise DomainBoundaryError("sample correlation matrix is not positive definite") from None
    W = np.linalg.solve(L, corr_matrix(kernel, ell, cdist(S1, S2)))
    Q, Rx = np.linalg.qr(np.linalg.solve(L, dataset.X))
    yt = np.linalg.solve(L, dataset.y)
    beta = np.linalg.solve(Rx, Q.T @ yt)
    resid = yt - Q @ (Q.T @ yt)
    U = np.linalg.solve(Rx.T, (X2 - W.T @ Q @ Rx).T)
    V = G22 - W.T @ W + U.T @ U
    df = n - p
    loc = X2 @ beta + W.T @ resid
    shape = (float(resid @ resid) / df) * V
    return loc, 0.5 * (shape + shape.T), df


@dataclass(frozen=True)
class PredictiveDistribution:
    """Mixture over quadrature nodes of multivariate t predictive distributions."""

    locations: np.ndarray
    shapes: np.ndarray
    df: int
    weights: np.ndarray

    @property
    def m(self):
        return self.locations.shape[1]

    def marginal(self, j=0):
        """Scalar t mixture for the ``j``-th new location."""
        return MixtureMarginal("t", self.weights, loc=self.locations[:, j],
                               scale=np.sqrt(self.shapes[:, j, j]), df=self.df)

    def cdf(self, y, j=0):
        return self.marginal(j).cdf(y)

    def pdf(self, y, j=0):
        return self.marginal(j).pdf(y)

    def mean(self):
        return self.weights @ self.locations

    def sd(self):
        return np.array([np.sqrt(self.marginal(j).var()) for j in range(self.m)])

    def interval(self, level=0.95):
        return np.array([self.marginal(j).interval(level) for j in range(self.m)]).reshape(-1, 2)


def predict(surrogate, dataset=None, new_locations=(), new_X=None):
    """Posterior predictive distribution of observations at ``new_locations``."""
    ds = dataset or surrogate.dataset
    S2 = _as_points(new_locations, ds.locations.shape[1])
    _check_new_locations(ds, S2)
    m = S2.shape[0]
    X2 = _new_design(ds, new_X, m)
    K = len(surrogate.rule)
    locs, shapes = np.zeros((K, m)), np.zeros((K, m, m))
    df = ds.n - ds.p
    if m:
        for k, (ell, eta) in enumerate(surrogate.rule.nodes):
            if surrogate.rule.weights[k] == 0.0:
                shapes[k] = np.eye(m)
                continue
            locs[k], shapes[k], _ = conditional_predictive(ds, surrogate.kernel, ell, eta, S2, X2)
    return PredictiveDistribution(locs, shapes, df, surrogate.rule.weights.copy())


# ---------------------------------------------------------------------------
# plug-in maximum likelihood


def ml_fit(dataset, kernel, kind="restricted", config=None, full_output=False):
    """Maximum-likelihood estimate of ``(beta, sigma2, ell, eta)``.

    ``kind="restricted"`` maximises the integrated likelihood
    (``sigma2 = S2/(n-p)``); ``kind="profile"`` the profile likelihood
    (``sigma2 = S2/n``).  Both use ``beta = A^-1 X'G^-1 y``.
    """
    config = config or FitConfig(trust_region=TrustRegionConfig(grad_tol=1e-6))

    def fun(u):
        ev, _ = ml_objective(dataset, kernel, u, kind=kind)
        return ev.value, ev.gradient, ev.hessian

    def value_only(u):
        try:
            v = ml_objective(dataset, kernel, u, kind=kind)[0].value
        except NumericalError:
            return np.inf
        return v if np.isfinite(v) else np.inf

    best = _multistart(fun, value_only, config.starts, config.trust_region, "ML fit")
    ell, eta = np.exp(best.x)
    ws = build_workspace(dataset, kernel, ell, eta)
    divisor = dataset.n if kind == "profile" else dataset.n - dataset.p
    params = FullParams(beta=ws.beta_bar.copy(), sigma2=ws.S2 / divisor, ell=ell, eta=eta)
    return (params, best) if full_output else params


def ml_predict(dataset, kernel, params, new_locations, new_X=None):
    """Plug-in normal predictive ``(mean, variance)`` at new locations.

    Uses the kriging predictor with ``beta``, ``sigma2``, ``ell`` and ``eta``
    fixed at ``params``; the variance includes the nugget.
    """
    S2 = _as_points(new_locations, dataset.locations.shape[1])
    m = S2.shape[0]
    X2 = _new_design(dataset, new_X, m)
    G11 = corr_matrix(kernel, params.ell, dataset.distances)
    G11[np.diag_indices(dataset.n)] += params.eta
    G21 = corr_matrix(kernel, params.ell, cdist(S2, dataset.locations))
    L = np.linalg.cholesky(G11)
    A = np.linalg.solve(L, G21.T)
    r = np.linalg.solve(L, dataset.y - dataset.X @ params.beta)
    mean = X2 @ params.beta + A.T @ r
    var = params.sigma2 * (1.0 + params.eta - np.sum(A * A, axis=0))
    return mean, var
