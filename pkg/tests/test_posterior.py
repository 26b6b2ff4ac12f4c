import numpy as np
import pytest

from conftest import random_dataset
from refgp.errors import DomainBoundaryError
from refgp.model import KernelSpec, corr_matrix
from refgp.posterior import (
    build_workspace,
    f_eval_full,
    f_value,
    f_value_or_inf,
    ml_objective,
)


def dense_f(ds, kernel, u):
    """Negative log posterior assembled with explicit inverses and slogdet."""
    ell, eta = np.exp(u)
    D, X, y = ds.distances, ds.X, ds.y
    n, p = X.shape
    K = corr_matrix(kernel, ell, D)
    G = K + eta * np.eye(n)
    Gi = np.linalg.inv(G)
    A = X.T @ Gi @ X
    R = Gi - Gi @ X @ np.linalg.inv(A) @ X.T @ Gi
    S2 = y @ R @ y
    g = kernel.gamma
    Kd = K * (D / ell) ** g / ell
    RK = R @ Kd
    Sigma = np.array([
        [np.trace(RK @ RK), np.trace(R @ RK), np.trace(RK)],
        [np.trace(R @ RK), np.trace(R @ R), np.trace(R)],
        [np.trace(RK), np.trace(R), n - p],
    ])
    return (0.5 * np.linalg.slogdet(G)[1] + 0.5 * np.linalg.slogdet(A)[1]
            + 0.5 * (n - p) * np.log(S2) - 0.5 * np.linalg.slogdet(Sigma)[1] - u[0] - u[1])


def central_gradient(fn, u, h=1e-5):
    g = np.zeros(2)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        g[k] = (fn(u + e) - fn(u - e)) / (2 * h)
    return g


@pytest.fixture(params=range(6))
def instance(request):
    rng = np.random.default_rng([11, request.param])
    ds, k = random_dataset(rng)
    u = np.log([rng.uniform(0.08, 0.8), rng.uniform(0.01, 0.5)])
    return ds, k, u


class TestValue:
    def test_matches_dense_oracle(self, instance):
        ds, k, u = instance
        np.testing.assert_allclose(f_value(ds, k, u), dense_f(ds, k, u), rtol=1e-9)

    def test_full_eval_value_consistent(self, instance):
        ds, k, u = instance
        assert f_eval_full(ds, k, u).value == pytest.approx(f_value(ds, k, u), rel=1e-12)

    def test_workspace_identities(self, instance):
        ds, k, u = instance
        ws = build_workspace(ds, k, *np.exp(u))
        # R X = 0 and R G R = R
        np.testing.assert_allclose(ws.R @ ds.X, 0, atol=1e-8 * np.abs(ws.R).max())
        G = corr_matrix(k, ws.ell, ds.distances) + ws.eta * np.eye(ds.n)
        np.testing.assert_allclose(ws.R @ G @ ws.R, ws.R, atol=1e-8 * np.abs(ws.R).max())
        assert ws.S2 == pytest.approx(ds.y @ ws.R @ ds.y, rel=1e-9)

    def test_infeasible_maps_to_inf(self):
        rng = np.random.default_rng(0)
        ds, k = random_dataset(rng, n=30, d=1, gamma=2.0)
        assert f_value_or_inf(ds, k, [0.0, -np.inf]) == np.inf
        assert f_value_or_inf(ds, k, [800.0, 0.0]) == np.inf
        # a huge nugget shrinks L^-1 X below the rank threshold
        assert f_value_or_inf(ds, k, [np.log(1e-3), 50.0]) == np.inf

    def test_boundary_raises(self):
        rng = np.random.default_rng(0)
        ds, k = random_dataset(rng, n=8)
        with pytest.raises(DomainBoundaryError):
            build_workspace(ds, k, 0.3, 0.0)


    def test_ill_conditioned_is_infeasible(self):
        # factorisable, but the objective there is dominated by roundoff
        from refgp.model import Dataset
        S = np.linspace(0, 1, 20)[:, None]
        ds = Dataset.with_constant(S, np.random.default_rng(1).normal(size=20))
        k = KernelSpec(2.0)
        G = corr_matrix(k, 150.0, ds.distances) + 3e-12 * np.eye(20)
        np.linalg.cholesky(G)
        with pytest.raises(DomainBoundaryError, match="ill-conditioned"):
            build_workspace(ds, k, 150.0, 3e-12)
        assert f_value_or_inf(ds, k, np.log([150.0, 3e-12])) == np.inf
        assert np.isfinite(f_value_or_inf(ds, k, np.log([0.2, 1e-12])))

class TestDerivatives:
    def test_gradient(self, instance):
        ds, k, u = instance
        ev = f_eval_full(ds, k, u)
        fd = central_gradient(lambda v: f_value(ds, k, v), u)
        assert np.linalg.norm(ev.gradient - fd) <= 1e-5 * max(np.linalg.norm(fd), 1.0)

    def test_hessian(self, instance):
        ds, k, u = instance
        ev = f_eval_full(ds, k, u)
        h = 1e-5
        fd = np.column_stack([
            (f_eval_full(ds, k, u + h * e).gradient - f_eval_full(ds, k, u - h * e).gradient) / (2 * h)
            for e in np.eye(2)
        ])
        assert np.linalg.norm(ev.hessian - fd) <= 1e-4 * max(np.linalg.norm(fd), 1.0)

    def test_hessian_symmetric(self, instance):
        ds, k, u = instance
        H = f_eval_full(ds, k, u).hessian
        assert abs(H[0, 1] - H[1, 0]) <= 1e-10 * np.abs(H).max()

    @pytest.mark.parametrize("kind", ["restricted", "profile"])
    def test_ml_objective_derivatives(self, instance, kind):
        ds, k, u = instance
        ev, _ = ml_objective(ds, k, u, kind)
        fd = central_gradient(lambda v: ml_objective(ds, k, v, kind)[0].value, u)
        assert np.linalg.norm(ev.gradient - fd) <= 1e-5 * max(np.linalg.norm(fd), 1.0)

    def test_profile_objective_value(self, instance):
        ds, k, u = instance
        ev, ws = ml_objective(ds, k, u, "profile")
        expected = 0.5 * np.linalg.slogdet(np.linalg.inv(ws.G_inv))[1] + 0.5 * ds.n * np.log(ws.S2)
        assert ev.value == pytest.approx(expected, rel=1e-9)


def test_ml_objective_unknown_kind():
    rng = np.random.default_rng(1)
    ds, k = random_dataset(rng, n=8)
    with pytest.raises(ValueError):
        ml_objective(ds, k, [0.0, -1.0], kind="bogus")


def test_kernel_choice_matters():
    rng = np.random.default_rng(2)
    ds, _ = random_dataset(rng, n=10, gamma=2.0)
    assert f_value(ds, KernelSpec(1.0), [-1.0, -2.0]) != f_value(ds, KernelSpec(2.0), [-1.0, -2.0])
