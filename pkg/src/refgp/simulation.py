"""Frequentist coverage harnesses and closed-form normal-model posterior CDFs.

Every replicate ``i`` draws from its own generator ``default_rng([seed, i])``,
so results do not depend on execution order or thread count.  A replicate
counts as covered when the posterior CDF ``t`` at the true value satisfies
``(1 - alpha)/2 < t < 1 - (1 - alpha)/2``, where ``alpha`` is the credible
level.
"""
from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import ConfigError, RefGPError
from .inference import (
    FitConfig,
    beta_marginal,
    fit,
    length_marginal,
    ml_fit,
    ml_predict,
    noise_marginal,
    predict,
    sigma2_marginal,
)
from .model import Dataset, FullParams, KernelSpec, gp_sample

__all__ = [
    "CoverageReport",
    "is_covered",
    "replicate_rng",
    "coverage_test",
    "prediction_coverage_test",
    "normal_mean_cdf",
    "variance_constant_cdf",
    "variance_jeffreys_cdf",
    "variance_jeffreys_unknown_mean_cdf",
    "variance_reference_cdf",
    "NORMAL_MODELS",
    "normal_coverage",
    "normal_coverage_table",
    "GPCoverageConfig",
    "CellResult",
    "gp_coverage_suite",
    "PredictionCoverageConfig",
    "prediction_coverage_suite",
    "coverage_table_csv",
    "grid_locations",
    "quadratic_design",
]

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CoverageReport:
    """Outcome of a coverage simulation for one quantity.

    ``N`` counts the replicates in the denominator; ``failures`` counts
    replicates that could not be evaluated (excluded or scored as
    non-covered depending on the harness).
    """

    name: str
    true_value: float
    alpha: float
    N: int
    coverage: float
    seed: int
    covered: int = 0
    failures: int = 0

    def __post_init__(self):
        if self.N < 1 and self.failures < 1:
            raise ConfigError("coverage report needs at least one replicate")
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigError("coverage must lie in [0, 1]")

    def as_dict(self):
        return {
            "name": self.name,
            "true_value": float(self.true_value),
            "alpha": float(self.alpha),
            "N": int(self.N),
            "covered": int(self.covered),
            "coverage": float(self.coverage),
            "failures": int(self.failures),
            "seed": int(self.seed),
        }


def _check(alpha, N):
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if int(N) != N or N < 1:
        raise ConfigError("N must be a positive integer")


def is_covered(t, alpha):
    """Strict equal-tailed test; ``t`` exactly on a boundary is not covered."""
    lo = 0.5 * (1.0 - alpha)
    return bool(lo < t < 1.0 - lo)


def replicate_rng(seed, i):
    """Generator for replicate ``i``; independent of every other replicate."""
    return np.random.default_rng([int(seed), int(i)])


def _map_replicates(fn, N, seed, threads=1):
    """``[fn(replicate_rng(seed, i)) for i in range(N)]``, optionally threaded."""
    rngs = (replicate_rng(seed, i) for i in range(N))
    if threads is None or threads == 1:
        return [fn(r) for r in rngs]
    workers = None if threads == 0 else threads
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, rngs))


def _safe_t(fn, data, what):
    try:
        t = float(fn(data))
    except (RefGPError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        logger.warning("%s: CDF evaluation failed (%s); scored as not covered", what, exc)
        return None
    if not np.isfinite(t):
        logger.warning("%s: CDF evaluation returned %r; scored as not covered", what, t)
        return None
    return t


def coverage_test(sampler, cdf_at_true, alpha=0.95, N=10_000, seed=0, name="theta",
                  true_value=float("nan"), threads=1):
    """Fraction of replicates whose credible set contains the true value.

    Parameters
    ----------
    sampler : callable
        ``sampler(rng) -> data`` draws one data set under the true parameters.
    cdf_at_true : callable
        ``cdf_at_true(data) -> t``, the posterior CDF at the true value.
    alpha : float
        Credible level, e.g. 0.95.
    N : int
        Number of replicates.
    seed : int
        Root seed.

    A failing CDF evaluation is logged and counted as not covered.
    """
    _check(alpha, N)

    def one(rng):
        t = _safe_t(cdf_at_true, sampler(rng), name)
        return t is not None and is_covered(t, alpha), t is None

    res = _map_replicates(one, N, seed, threads)
    cnt = sum(c for c, _ in res)
    fails = sum(f for _, f in res)
    return CoverageReport(name, true_value, alpha, N, cnt / N, seed, cnt, fails)


def prediction_coverage_test(sampler, predictive_cdf_at_heldout, alpha=0.95, N=100, seed=0,
                             name="prediction", threads=1):
    """Coverage of predictive credible sets for a held-out observation.

    ``sampler(rng)`` returns ``(data, y_heldout)``;
    ``predictive_cdf_at_heldout(data, y_heldout)`` is the predictive CDF
    of the held-out value given the rest, evaluated at its realised value.
    """
    return coverage_test(sampler, lambda d: predictive_cdf_at_heldout(*d), alpha, N, seed,
                         name=name, threads=threads)


# ---------------------------------------------------------------------------
# closed-form posterior CDFs for normal samples


def _var_cdf(a, q, t):
    t = np.asarray(t, dtype=float)
    with np.errstate(divide="ignore"):
        out = special.gammaincc(a, q / (2.0 * np.where(t > 0, t, 1.0)))
    out = np.where(t > 0, out, 0.0)
    return out if out.ndim else float(out)


def normal_mean_cdf(y, t, sigma2=1.0):
    """Posterior CDF of the mean under a constant prior, variance known."""
    y = np.asarray(y, dtype=float)
    n = y.size
    z = (np.asarray(t, dtype=float) - y.mean()) / np.sqrt(2.0 * sigma2 / n)
    out = 0.5 * (1.0 + special.erf(z))
    return out if np.ndim(out) else float(out)


def variance_constant_cdf(y, t):
    """Posterior CDF of the variance, mean known to be zero, constant prior."""
    y = np.asarray(y, dtype=float)
    if y.size <= 2:
        raise ConfigError("the constant-prior variance posterior needs n > 2")
    return _var_cdf(0.5 * (y.size - 2), y @ y, t)


def variance_jeffreys_cdf(y, t):
    """Posterior CDF of the variance, mean known to be zero, prior ``1/sigma2``."""
    y = np.asarray(y, dtype=float)
    return _var_cdf(0.5 * y.size, y @ y, t)


def variance_jeffreys_unknown_mean_cdf(y, t):
    """Marginal posterior CDF of the variance, unknown mean, prior ``sigma2^(-3/2)``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    return _var_cdf(0.5 * n, y @ y - n * y.mean() ** 2, t)


def variance_reference_cdf(y, t):
    """Marginal posterior CDF of the variance, unknown mean, reference prior ``1/sigma2``."""
    y = np.asarray(y, dtype=float)
    n = y.size
    if n <= 1:
        raise ConfigError("the reference-prior variance posterior needs n > 1")
    return _var_cdf(0.5 * (n - 1), y @ y - n * y.mean() ** 2, t)


# model name -> (cdf(y, t, sigma2), target is the mean?)
NORMAL_MODELS = {
    "mean-constant": (lambda y, t, s2: normal_mean_cdf(y, t, s2), True),
    "variance-constant": (lambda y, t, s2: variance_constant_cdf(y, t), False),
    "variance-jeffreys": (lambda y, t, s2: variance_jeffreys_cdf(y, t), False),
    "variance-jeffreys-unknown-mean": (
        lambda y, t, s2: variance_jeffreys_unknown_mean_cdf(y, t), False),
    "variance-reference": (lambda y, t, s2: variance_reference_cdf(y, t), False),
}


def normal_coverage(model, n, sigma2=1.0, N=10_000, alpha=0.95, seed=0, mu=0.0):
    """Coverage of the closed-form posterior ``model`` for ``n`` normal draws.

    Data are ``N(mu, sigma2)``; the mean is the target for ``mean-constant``
    and the variance otherwise.
    """
    if model not in NORMAL_MODELS:
        raise ConfigError(f"unknown normal model {model!r}; choose from {sorted(NORMAL_MODELS)}")
    if n < 1 or not sigma2 > 0:
        raise ConfigError("need n >= 1 and sigma2 > 0")
    cdf, is_mean = NORMAL_MODELS[model]
    truth = mu if is_mean else sigma2
    sd = np.sqrt(sigma2)
    return coverage_test(
        lambda rng: mu + sd * rng.standard_normal(n),
        lambda y: cdf(y, truth, sigma2),
        alpha, N, seed, name=model, true_value=truth,
    )


def normal_coverage_table(model, ns=(5, 10, 15, 20), sigma2s=(0.1, 0.5, 1.0, 2.0, 5.0),
                          N=10_000, alpha=0.95, seed=0):
    """Rows ``(sigma2, n, coverage)`` over a grid of sample sizes and variances."""
    rows = []
    for s2 in sigma2s:
        for n in ns:
            rep = normal_coverage(model, n, s2, N, alpha, seed)
            rows.append({"sigma2": s2, "n": n, "coverage": rep.coverage})
    return rows


# ---------------------------------------------------------------------------
# Gaussian-process parameter coverage


def grid_locations(side):
    """``side x side`` evenly spaced points on the unit square."""
    g = np.linspace(0.0, 1.0, side)
    u, v = np.meshgrid(g, g, indexing="ij")
    return np.column_stack([u.ravel(), v.ravel()])


def quadratic_design(locations):
    """Columns ``1, u, v, u^2, uv, v^2``."""
    u, v = locations[:, 0], locations[:, 1]
    return np.column_stack([np.ones_like(u), u, v, u * u, u * v, v * v])


QUADRATIC_BETA = (0.15, -0.65, -0.1, 0.9, -1.0, 1.2)


@dataclass(frozen=True)
class GPCoverageConfig:
    """Parameter-coverage experiment on a square grid.

    ``regressors`` is ``"constant"`` (``beta = (1,)``) or ``"quadratic"``.
    """

    cells: tuple = ((0.5, 0.1),)
    side: int = 10
    gamma: float = 1.0
    sigma2: float = 1.0
    regressors: str = "constant"
    N: int = 50
    alpha: float = 0.95
    seed: int = 0
    threads: int = 1
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        _check(self.alpha, self.N)
        if self.regressors not in ("constant", "quadratic"):
            raise ConfigError("regressors must be 'constant' or 'quadratic'")
        if self.side < 2:
            raise ConfigError("grid side must be at least 2")
        for ell, eta in self.cells:
            if not (ell > 0 and eta > 0):
                raise ConfigError("cells need positive ell and eta")

    @property
    def beta(self):
        return np.array((1.0,) if self.regressors == "constant" else QUADRATIC_BETA)

    def design(self, locations):
        if self.regressors == "constant":
            return np.ones((len(locations), 1))
        return quadratic_design(locations)


FULL_GP_CELLS = tuple((ell, eta) for eta in (0.01, 0.05, 0.1, 0.2) for ell in (0.2, 0.5, 1.0))


@dataclass
class CellResult:
    """Coverage reports for one ``(ell, eta)`` cell keyed by quantity name."""

    ell: float
    eta: float
    reports: dict
    failures: int


def _gp_replicate(cfg, kernel, locations, X, params):
    names = ["ell", "eta", "sigma2"] + [f"beta{j + 1}" for j in range(X.shape[1])]

    def one(rng):
        y = gp_sample(locations, X, params, kernel, rng)
        ds = Dataset(locations, y, X)
        try:
            s = fit(ds, kernel, cfg.fit_config)
            t = {
                "ell": float(length_marginal(s).cdf(params.ell)),
                "eta": float(noise_marginal(s).cdf(params.eta)),
                "sigma2": float(sigma2_marginal(s).cdf(params.sigma2)),
            }
            for j in range(X.shape[1]):
                t[f"beta{j + 1}"] = float(beta_marginal(s, j=j).cdf(params.beta[j]))
        except (RefGPError, np.linalg.LinAlgError) as exc:
            logger.warning("GP coverage replicate failed and is excluded: %s", exc)
            return None
        return t

    return names, one


def gp_coverage_suite(config=None):
    """Parameter coverage for each cell of ``config``.

    Every replicate samples a GP data set, fits the surrogate and evaluates
    the marginal posterior CDFs of ``ell``, ``eta``, ``sigma2`` and each
    ``beta_j`` at the true values.  Replicates whose fit fails are excluded
    from the denominator and counted in ``failures``.
    """
    cfg = config or GPCoverageConfig()
    kernel = KernelSpec(cfg.gamma)
    locations = grid_locations(cfg.side)
    X = cfg.design(locations)
    out = []
    for ell, eta in cfg.cells:
        params = FullParams(beta=cfg.beta, sigma2=cfg.sigma2, ell=ell, eta=eta)
        names, one = _gp_replicate(cfg, kernel, locations, X, params)
        res = _map_replicates(one, cfg.N, cfg.seed, cfg.threads)
        ok = [r for r in res if r is not None]
        fails = len(res) - len(ok)
        truth = {"ell": ell, "eta": eta, "sigma2": cfg.sigma2}
        truth.update({f"beta{j + 1}": float(b) for j, b in enumerate(cfg.beta)})
        reports = {}
        for q in names:
            cnt = sum(is_covered(r[q], cfg.alpha) for r in ok)
            cov = cnt / len(ok) if ok else 0.0
            reports[q] = CoverageReport(q, truth[q], cfg.alpha, len(ok), cov, cfg.seed, cnt, fails)
        out.append(CellResult(ell, eta, reports, fails))
    return out


# ---------------------------------------------------------------------------
# prediction coverage


@dataclass(frozen=True)
class PredictionCoverageConfig:
    """Held-out prediction experiment on ``n_train`` evenly spaced points of ``[0, 1]``.

    Data have a constant regressor with coefficient zero and unit variance;
    the held-out observation sits at a uniform random location.
    """

    cells: tuple = ((0.2, 0.1),)
    n_train: int = 20
    gamma: float = 2.0
    sigma2: float = 1.0
    N: int = 50
    alpha: float = 0.95
    seed: int = 0
    threads: int = 1
    ml_kind: str = "restricted"
    fit_config: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        _check(self.alpha, self.N)
        if self.n_train < 3:
            raise ConfigError("need at least 3 training points")


FULL_PREDICTION_CELLS = tuple(
    (ell, eta) for eta in (0.001, 0.01, 0.1, 0.2) for ell in (0.1, 0.2, 0.5)
)


def _prediction_replicate(cfg, kernel, params):
    train = np.linspace(0.0, 1.0, cfg.n_train)[:, None]

    def one(rng):
        s_test = rng.uniform(0.0, 1.0, size=(1, 1))
        locs = np.vstack([s_test, train])
        y = gp_sample(locs, np.ones((len(locs), 1)), params, kernel, rng)
        ds = Dataset.with_constant(train, y[1:])
        out = {}
        try:
            s = fit(ds, kernel, cfg.fit_config)
            out["bayes"] = float(predict(s, new_locations=s_test).cdf(y[0]))
        except (RefGPError, np.linalg.LinAlgError) as exc:
            logger.warning("Bayesian prediction failed; scored as not covered: %s", exc)
            out["bayes"] = None
        try:
            ml = ml_fit(ds, kernel, kind=cfg.ml_kind)
            mean, var = ml_predict(ds, kernel, ml, s_test)
            out["ml"] = float(stats.norm.cdf(y[0], mean[0], np.sqrt(var[0])))
        except (RefGPError, np.linalg.LinAlgError) as exc:
            logger.warning("ML prediction failed; scored as not covered: %s", exc)
            out["ml"] = None
        return out

    return one


def prediction_coverage_suite(config=None):
    """Bayesian and plug-in ML predictive coverage for each cell.

    Failures are scored as not covered and counted.
    """
    cfg = config or PredictionCoverageConfig()
    kernel = KernelSpec(cfg.gamma)
    out = []
    for ell, eta in cfg.cells:
        params = FullParams(beta=np.zeros(1), sigma2=cfg.sigma2, ell=ell, eta=eta)
        res = _map_replicates(_prediction_replicate(cfg, kernel, params), cfg.N, cfg.seed,
                              cfg.threads)
        reports = {}
        for q in ("bayes", "ml"):
            ts = [r[q] for r in res]
            fails = sum(t is None for t in ts)
            cnt = sum(t is not None and is_covered(t, cfg.alpha) for t in ts)
            reports[q] = CoverageReport(q, float("nan"), cfg.alpha, cfg.N, cnt / cfg.N,
                                        cfg.seed, cnt, fails)
        out.append(CellResult(ell, eta, reports, sum(r.failures for r in reports.values())))
    return out


def coverage_table_csv(cells):
    """CSV with one row per quantity and one column per ``(eta, ell)`` cell."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity"] + [f"eta={c.eta:g};ell={c.ell:g}" for c in cells])
    names = []
    for c in cells:
        names += [q for q in c.reports if q not in names]
    for q in names:
        w.writerow([f"{q} coverage"] + [
            f"{c.reports[q].coverage:.3f}" if q in c.reports else "" for c in cells])
    w.writerow(["replicates"] + [str(max(r.N for r in c.reports.values())) for c in cells])
    w.writerow(["failures"] + [str(c.failures) for c in cells])
    return buf.getvalue()
