"""Command-line front end.

Structured results are written as JSON, tables as CSV.  Wall-clock timings
live under the ``metadata`` key of JSON output (or on stderr for CSV), so
repeated runs with the same arguments give identical primary output.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import __version__
from .errors import ConfigError, NumericalError
from .inference import (
    FitConfig,
    beta_marginal,
    fit,
    length_marginal,
    ml_fit,
    noise_marginal,
    predict,
    sigma2_marginal,
)
from .io import ingest_csv, read_locations, read_table, write_csv
from .model import FullParams, KernelSpec, gp_sample
from .simulation import (
    FULL_GP_CELLS,
    FULL_PREDICTION_CELLS,
    NORMAL_MODELS,
    GPCoverageConfig,
    PredictionCoverageConfig,
    coverage_table_csv,
    gp_coverage_suite,
    grid_locations,
    normal_coverage,
    prediction_coverage_suite,
)

__all__ = ["RunConfig", "build_parser", "main"]

logger = logging.getLogger("refgp")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
PERCENTILES = (2.5, 25.0, 50.0, 75.0, 97.5)

# default sample sizes for the analytic suite
NORMAL_DEFAULT_N = {
    "mean-constant": 10,
    "variance-constant": 5,
    "variance-jeffreys": 5,
    "variance-jeffreys-unknown-mean": 5,
    "variance-reference": 5,
}


@dataclass(frozen=True)
class RunConfig:
    """Validated settings shared by all commands."""

    command: str
    input: str | None
    gamma: float
    tol: float
    eps: float
    alpha: float
    seed: int
    n_sims: int | None
    threads: int
    grid_out: str | None
    out: str | None

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigError("--tol must be positive")
        if not 0 < self.eps < 1:
            raise ConfigError("--eps must lie in (0, 1)")
        if not 0 < self.alpha < 1:
            raise ConfigError("--alpha must lie in (0, 1)")
        if self.n_sims is not None and self.n_sims < 1:
            raise ConfigError("--n-sims must be at least 1")
        if self.threads < 0:
            raise ConfigError("--threads must be nonnegative (0 = auto)")

    @classmethod
    def from_args(cls, args):
        gamma = args.gamma
        if gamma is None:
            gamma = 1.0 if getattr(args, "suite", None) == "gp" else 2.0
        return cls(args.command, args.input, gamma, args.tol, args.eps, args.alpha,
                   args.seed, args.n_sims, args.threads, args.grid_out, args.out)

    def fit_config(self):
        return FitConfig(tol=self.tol, eps=self.eps)

    def kernel(self):
        return KernelSpec(self.gamma)


class _Timer:
    def __init__(self):
        self.timings = {}

    @contextmanager
    def __call__(self, name):
        t0 = time.perf_counter()
        yield
        self.timings[name] = round(time.perf_counter() - t0, 6)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
        return
    try:
        fh = open(path, "w", newline="")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot write ({exc.strerror})") from None
    with fh:
        yield fh


def _emit_json(cfg, doc, timer):
    doc["metadata"] = {"version": __version__, "timings_s": timer.timings}
    with _output(cfg.out) as fh:
        json.dump(doc, fh, indent=2, sort_keys=False)
        fh.write("\n")


def _require_input(cfg):
    if not cfg.input:
        raise ConfigError(f"{cfg.command}: --input is required")
    return ingest_csv(cfg.input)


def _fit(cfg, timer):
    ds = _require_input(cfg)
    with timer("fit"):
        s = fit(ds, cfg.kernel(), cfg.fit_config())
    if cfg.grid_out:
        with _output(cfg.grid_out) as fh:
            fh.write(s.grid.to_json(indent=1))
            fh.write("\n")
    return ds, s


def _percentiles(marg):
    return {f"p{q:g}": marg.quantile(q / 100) for q in PERCENTILES}


def cmd_fit(cfg, args, timer):
    ds, s = _fit(cfg, timer)
    with timer("marginals"):
        block = {
            "ell": _percentiles(length_marginal(s)),
            "eta": _percentiles(noise_marginal(s)),
            "sigma2": _percentiles(sigma2_marginal(s)),
        }
        for j in range(ds.p):
            block[f"beta{j + 1}"] = _percentiles(beta_marginal(s, j=j))
    doc = {
        "command": "fit",
        "n": ds.n,
        "p": ds.p,
        "gamma": cfg.gamma,
        "tol": cfg.tol,
        "eps": cfg.eps,
        "surrogate": s.summary(),
        "percentiles": block,
    }
    _emit_json(cfg, doc, timer)


def cmd_predict(cfg, args, timer):
    if not args.locations:
        raise ConfigError("predict: --locations is required")
    ds = _require_input(cfg)
    S2, X2 = read_locations(args.locations, ds.locations.shape[1], ds.p)
    d = S2.shape[1]
    rows = []
    if len(S2):
        s = fit(ds, cfg.kernel(), cfg.fit_config())
        with timer("predict"):
            pd = predict(s, new_locations=S2, new_X=X2)
            mean, sd, bounds = pd.mean(), pd.sd(), pd.interval(cfg.alpha)
        rows = [list(S2[i]) + [mean[i], sd[i], bounds[i, 0], bounds[i, 1]] for i in range(len(S2))]
    header = [f"x{k + 1}" for k in range(d)] + ["mean", "sd", "lower", "upper"]
    with _output(cfg.out) as fh:
        write_csv(fh, header, rows)


def cmd_marginal(cfg, args, timer):
    ds, s = _fit(cfg, timer)
    name = args.param
    if name == "ell":
        marg = length_marginal(s)
    elif name == "eta":
        marg = noise_marginal(s)
    elif name == "sigma2":
        marg = sigma2_marginal(s)
    elif name.startswith("beta") and name[4:].isdigit():
        marg = beta_marginal(s, j=int(name[4:]) - 1)
    else:
        raise ConfigError(f"unknown parameter {name!r}; use ell, eta, sigma2 or betaJ")
    lo, hi = marg.quantile(0.001), marg.quantile(0.999)
    if name in ("ell", "eta", "sigma2"):
        xs = np.geomspace(lo, hi, args.points)
    else:
        xs = np.linspace(lo, hi, args.points)
    pdf, cdf = marg.pdf(xs), marg.cdf(xs)
    with _output(cfg.out) as fh:
        write_csv(fh, [name, "pdf", "cdf"], zip(xs, pdf, cdf))


def cmd_ml(cfg, args, timer):
    ds = _require_input(cfg)
    with timer("ml"):
        params = ml_fit(ds, cfg.kernel(), kind=args.kind)
    doc = {"command": "ml", "kind": args.kind, "gamma": cfg.gamma, "params": params.as_dict()}
    _emit_json(cfg, doc, timer)


def cmd_coverage(cfg, args, timer):
    suite = args.suite
    if suite == "normal":
        models = [args.model] if args.model else list(NORMAL_DEFAULT_N)
        rows = []
        for m in models:
            n = args.n or NORMAL_DEFAULT_N[m]
            rep = normal_coverage(m, n, args.sigma2, cfg.n_sims or 10_000, cfg.alpha, cfg.seed)
            rows.append([m, n, args.sigma2, rep.N, rep.coverage])
        with _output(cfg.out) as fh:
            write_csv(fh, ["model", "n", "sigma2", "N", "coverage"], rows, fmt="{:.6g}")
        return
    fc = cfg.fit_config()
    if suite == "gp":
        cells = FULL_GP_CELLS if args.full else ((args.ell or 0.5, args.eta or 0.1),)
        n_sims = cfg.n_sims or (200 if args.full else 50)
        conf = GPCoverageConfig(cells=cells, gamma=cfg.gamma, regressors=args.regressors,
                                N=n_sims, alpha=cfg.alpha, seed=cfg.seed, threads=cfg.threads,
                                fit_config=fc)
        with timer("coverage"):
            res = gp_coverage_suite(conf)
    else:
        cells = FULL_PREDICTION_CELLS if args.full else ((args.ell or 0.2, args.eta or 0.1),)
        n_sims = cfg.n_sims or (100 if args.full else 50)
        conf = PredictionCoverageConfig(cells=cells, gamma=cfg.gamma, N=n_sims, alpha=cfg.alpha,
                                        seed=cfg.seed, threads=cfg.threads, fit_config=fc)
        with timer("coverage"):
            res = prediction_coverage_suite(conf)
    with _output(cfg.out) as fh:
        fh.write(coverage_table_csv(res))
    logger.info("timings: %s", timer.timings)


def cmd_sample(cfg, args, timer):
    if cfg.input:
        header, arr, _ = read_table(cfg.input)
        xs = [i for i, h in enumerate(header) if h.startswith("x")]
        S = arr[:, xs]
    elif args.dim == 1:
        S = np.linspace(0.0, 1.0, args.side)[:, None]
    else:
        S = grid_locations(args.side)
    beta = np.array(args.beta, dtype=float)
    if beta.size != 1:
        raise ConfigError("sample: only a constant regressor is supported; give one --beta")
    params = FullParams(beta=beta, sigma2=args.sigma2, ell=args.ell, eta=args.eta)
    X = np.ones((len(S), 1))
    rows = []
    for i in range(cfg.n_sims or 1):
        y = gp_sample(S, X, params, cfg.kernel(), np.random.default_rng([cfg.seed, i]))
        rows += [[i] + list(S[k]) + [y[k]] for k in range(len(S))]
    header = ["replicate"] + [f"x{k + 1}" for k in range(S.shape[1])] + ["y"]
    with _output(cfg.out) as fh:
        write_csv(fh, header, rows)


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "marginal": cmd_marginal,
    "ml": cmd_ml,
    "coverage": cmd_coverage,
    "sample": cmd_sample,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--input", help="data CSV with columns x1..xd, optional r1..rp, y")
    common.add_argument("--gamma", type=float, choices=(1.0, 2.0), default=None,
                        help="kernel exponent: 1 exponential, 2 squared exponential "
                             "(default 2; 1 for the gp coverage suite)")
    common.add_argument("--tol", type=float, default=1e-4, help="sparse-grid tolerance")
    common.add_argument("--eps", type=float, default=1e-5,
                        help="relative posterior height at the bracket ends")
    common.add_argument("--alpha", type=float, default=0.95, help="credible level")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--n-sims", type=int, default=None, help="replicates")
    common.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")
    common.add_argument("--grid-out", help="write the sparse grid as JSON records")
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="refgp", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"refgp {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fit", parents=[common], help="fit the posterior surrogate")
    sp = sub.add_parser("predict", parents=[common], help="posterior predictive summaries")
    sp.add_argument("--locations", help="CSV of new locations (x1..xd, optional r1..rp)")
    sp = sub.add_parser("marginal", parents=[common], help="marginal density and CDF samples")
    sp.add_argument("--param", default="ell", help="ell, eta, sigma2 or betaJ")
    sp.add_argument("--points", type=int, default=200)
    sp = sub.add_parser("ml", parents=[common], help="maximum-likelihood estimate")
    sp.add_argument("--kind", choices=("restricted", "profile"), default="restricted")
    sp = sub.add_parser("coverage", parents=[common], help="coverage simulations")
    sp.add_argument("--suite", choices=("normal", "gp", "prediction"), default="normal")
    sp.add_argument("--model", choices=sorted(NORMAL_MODELS))
    sp.add_argument("--n", type=int, help="sample size for the normal suite")
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--ell", type=float)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--regressors", choices=("constant", "quadratic"), default="constant")
    sp.add_argument("--full", action="store_true", help="run every cell at full replicate count")
    sp = sub.add_parser("sample", parents=[common], help="draw synthetic data sets")
    sp.add_argument("--dim", type=int, choices=(1, 2), default=1)
    sp.add_argument("--side", type=int, default=20, help="points per axis")
    sp.add_argument("--ell", type=float, default=0.2)
    sp.add_argument("--eta", type=float, default=0.1)
    sp.add_argument("--sigma2", type=float, default=1.0)
    sp.add_argument("--beta", type=float, nargs="+", default=[0.0])
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_args(args)
        if getattr(args, "points", 2) < 2:
            raise ConfigError("--points must be at least 2")
        COMMANDS[cfg.command](cfg, args, _Timer())
    except ConfigError as exc:
        print(f"refgp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"refgp: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
