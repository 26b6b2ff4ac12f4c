import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from refgp.errors import OptimizationError
from refgp.optimizer import TrustRegionConfig, minimize, solve_subproblem


def random_instance(rng, hard=False):
    """Well-scaled symmetric ``H`` with eigenvalues in ``[-1, 1]`` and a gradient."""
    d = int(rng.integers(2, 6))
    Q, _ = np.linalg.qr(rng.normal(size=(d, d)))
    xi = rng.uniform(-1, 1, size=d)
    H = Q @ np.diag(xi) @ Q.T
    g = rng.normal(size=d)
    if hard:
        # remove the component along the lowest eigenvector
        v = Q[:, np.argmin(xi)]
        g -= (g @ v) * v
    return g, H, float(rng.uniform(0.1, 3.0))


def kkt_residuals(g, H, delta, s, lam):
    d = len(g)
    stationarity = np.linalg.norm((H + lam * np.eye(d)) @ s + g)
    feasibility = max(np.linalg.norm(s) - delta, 0.0)
    complementarity = abs(lam * (delta - np.linalg.norm(s)))
    curvature = np.linalg.eigvalsh(H + lam * np.eye(d)).min()
    return stationarity, feasibility, complementarity, curvature


class TestSubproblem:
    @pytest.mark.parametrize("seed", range(40))
    @pytest.mark.parametrize("hard", [False, True])
    def test_kkt(self, seed, hard):
        rng = np.random.default_rng([seed, hard])
        g, H, delta = random_instance(rng, hard)
        s, lam = solve_subproblem(g, H, delta, return_multiplier=True)
        stat, feas, comp, curv = kkt_residuals(g, H, delta, s, lam)
        gn = np.linalg.norm(g)
        assert lam >= 0
        assert stat < 1e-8 * gn
        assert feas <= 1e-12 * delta
        assert comp <= 1e-8 * gn * delta
        assert curv >= -1e-10

    def test_interior_newton_step(self):
        H = np.diag([2.0, 4.0])
        g = np.array([1.0, 1.0])
        s, lam = solve_subproblem(g, H, 10.0, return_multiplier=True)
        np.testing.assert_allclose(s, [-0.5, -0.25])
        assert lam == 0.0

    def test_boundary_step(self):
        s = solve_subproblem(np.array([1.0, 0.0]), np.eye(2), 0.1)
        np.testing.assert_allclose(s, [-0.1, 0.0], atol=1e-14)

    def test_hard_case_uses_lowest_eigenvector(self):
        H = np.diag([-1.0, 1.0])
        g = np.array([0.0, 1.0])
        s, lam = solve_subproblem(g, H, 2.0, return_multiplier=True)
        assert lam == pytest.approx(1.0)
        assert np.linalg.norm(s) == pytest.approx(2.0)
        np.testing.assert_allclose((H + lam * np.eye(2)) @ s + g, 0, atol=1e-12)

    @given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 5))
    @settings(max_examples=100, deadline=None)
    def test_never_worse_than_cauchy(self, g1, g2, delta):
        g = np.array([g1, g2])
        H = np.array([[1.0, 0.3], [0.3, -0.5]])
        s = solve_subproblem(g, H, delta)
        model = g @ s + 0.5 * s @ H @ s
        gn = np.linalg.norm(g)
        if gn == 0:
            return
        c = -delta * g / gn
        assert model <= g @ c + 0.5 * c @ H @ c + 1e-10

    def test_rejects_bad_radius(self):
        with pytest.raises(ValueError):
            solve_subproblem(np.ones(2), np.eye(2), 0.0)


def rosenbrock(x):
    a, b = x
    f = (1 - a) ** 2 + 100 * (b - a * a) ** 2
    g = np.array([-2 * (1 - a) - 400 * a * (b - a * a), 200 * (b - a * a)])
    H = np.array([[2 - 400 * (b - 3 * a * a), -400 * a], [-400 * a, 200.0]])
    return f, g, H


class TestMinimize:
    def test_quadratic_one_step(self):
        A = np.array([[3.0, 1.0], [1.0, 2.0]])
        b = np.array([1.0, -1.0])
        res = minimize(lambda x: (0.5 * x @ A @ x - b @ x, A @ x - b, A), np.zeros(2),
                       TrustRegionConfig(delta0=10.0))
        np.testing.assert_allclose(res.x, np.linalg.solve(A, b), atol=1e-12)
        assert res.converged and res.iterations == 1

    def test_rosenbrock(self):
        res = minimize(rosenbrock, np.array([-1.2, 1.0]))
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-8)
        assert np.max(np.abs(res.gradient)) <= 1e-8

    def test_escapes_saddle(self):
        # starts at a saddle point of a function with minima at (+-1, 0)
        def fun(x):
            f = (x[0] ** 2 - 1) ** 2 + x[1] ** 2
            g = np.array([4 * x[0] * (x[0] ** 2 - 1), 2 * x[1]])
            H = np.array([[12 * x[0] ** 2 - 4, 0.0], [0.0, 2.0]])
            return f, g, H
        res = minimize(fun, np.zeros(2))
        assert res.converged
        assert abs(abs(res.x[0]) - 1) < 1e-8

    def test_infeasible_trial_points_shrink_radius(self):
        def fun(x):
            return rosenbrock(x)

        def value_only(x):
            return np.inf if x[0] > 1.1 else rosenbrock(x)[0]

        res = minimize(fun, np.array([-1.2, 1.0]), value_only=value_only)
        assert res.converged
        np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-8)

    def test_budget_reported(self):
        res = minimize(rosenbrock, np.array([-1.2, 1.0]), TrustRegionConfig(max_iters=3))
        assert not res.converged
        assert "max_iters" in res.message

    def test_nan_raises(self):
        def fun(x):
            return rosenbrock(x)
        with pytest.raises(OptimizationError):
            minimize(fun, np.array([-1.2, 1.0]), value_only=lambda x: np.nan)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrustRegionConfig(grad_tol=0.0)
