import numpy as np
import pytest

from refgp.chebyshev import adaptive_interpolant, lobatto_points


class TestLobatto:
    def test_endpoints_and_order(self):
        x = lobatto_points(9, -1.0, 3.0)
        assert x[0] == -1.0 and x[-1] == 3.0
        assert np.all(np.diff(x) > 0)

    def test_nested(self):
        a, b = lobatto_points(9), lobatto_points(17)
        np.testing.assert_allclose(b[::2], a, atol=1e-15)

    def test_single(self):
        np.testing.assert_array_equal(lobatto_points(1, 0, 2), [1.0])


class TestAdaptive:
    def test_polynomial_exact(self):
        poly, n = adaptive_interpolant(lambda x: 3 * x**5 - x + 2, -1, 2, n0=9, tol=1e-12)
        assert n == 9
        x = np.linspace(-1, 2, 101)
        np.testing.assert_allclose(poly(x), 3 * x**5 - x + 2, rtol=1e-12, atol=1e-11)

    def test_refines_until_tolerance(self):
        f = lambda x: 1 / (1 + 25 * x**2)
        poly, n = adaptive_interpolant(f, -1, 1, n0=9, tol=1e-8)
        assert n > 9
        x = np.linspace(-1, 1, 1001)
        assert np.max(np.abs(poly(x) - f(x))) < 1e-6

    def test_reuses_values(self):
        calls = []

        def f(x):
            calls.append(len(x))
            return np.exp(x)

        adaptive_interpolant(f, 0, 1, n0=5, tol=1e-14)
        # each round evaluates only the new points
        assert calls[0] == 5 and all(c == 2 ** k * 4 for k, c in enumerate(calls[1:]))

    def test_cap(self, caplog):
        poly, n = adaptive_interpolant(np.abs, -1, 1, n0=5, tol=1e-14, max_points=33)
        assert n == 65
        assert "residual" in caplog.text

    @pytest.mark.parametrize("n0", [3, 17])
    def test_integral(self, n0):
        poly, _ = adaptive_interpolant(np.cos, 0, np.pi / 2, n0=n0, tol=1e-13)
        integ = poly.integ(lbnd=0)
        assert integ(np.pi / 2) == pytest.approx(1.0, abs=1e-12)
