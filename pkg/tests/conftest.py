import numpy as np
import pytest

from refgp.io import bundled_table1, ingest_csv
from refgp.model import Dataset, FullParams, KernelSpec, gp_sample


@pytest.fixture(scope="session")
def table1():
    return ingest_csv(str(bundled_table1()))


def random_dataset(rng, n=None, d=None, p=None, gamma=None):
    """Small random GP data set; returns ``(dataset, kernel)``."""
    n = n or int(rng.integers(6, 26))
    d = d or int(rng.integers(1, 3))
    p = p or int(rng.integers(1, 3))
    gamma = gamma or float(rng.choice([1.0, 2.0]))
    S = rng.uniform(0, 1, size=(n, d))
    X = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)])
    kernel = KernelSpec(gamma)
    params = FullParams(beta=rng.normal(size=p), sigma2=float(rng.uniform(0.5, 2)),
                        ell=float(rng.uniform(0.1, 0.6)), eta=float(rng.uniform(0.01, 0.3)))
    y = gp_sample(S, X, params, kernel, rng)
    return Dataset(S, y, X), kernel


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criteria")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
