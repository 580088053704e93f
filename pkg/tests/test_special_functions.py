import math
from fractions import Fraction

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st
from scipy.integrate import quad

from strauss_lab.special_functions import (KernelParams, RuleKind, admissible_triples,
                                           chebyshev_T, gauss_rule, integrate_sqrt_singular,
                                           kernel_h, kernel_h_bounds_check, legendre_P,
                                           sqrt_singular_rule, support_swap_holds)


def _rodrigues(m: int):
    z = sp.Symbol("z")
    expr = sp.diff((z * z - 1) ** m, z, m) / (2 ** m * sp.factorial(m))
    return sp.lambdify(z, sp.expand(expr), "math")


class TestPolynomials:
    def test_base_cases(self):
        assert legendre_P(0, 0.3) == 1 and legendre_P(1, 0.3) == 0.3
        assert chebyshev_T(1, -0.7) == -0.7

    def test_degree_two(self):
        assert legendre_P(2, 0.5) == pytest.approx(-0.125, abs=1e-15)
        assert chebyshev_T(2, 0.5) == pytest.approx(-0.5, abs=1e-15)

    @pytest.mark.parametrize("m", range(11))
    def test_legendre_vs_rodrigues(self, m):
        ref = _rodrigues(m)
        for z in [Fraction(i, 8) for i in range(-8, 9)]:
            assert legendre_P(m, float(z)) == pytest.approx(ref(float(z)), abs=1e-10)

    @pytest.mark.parametrize("m", range(11))
    def test_chebyshev_trig(self, m):
        th = np.linspace(0, math.pi, 37)
        assert np.allclose(chebyshev_T(m, np.cos(th)), np.cos(m * th), atol=1e-12)

    @given(st.integers(0, 15), st.floats(-1, 1))
    def test_bounded_on_interval(self, m, z):
        assert abs(legendre_P(m, z)) <= 1 + 1e-12
        assert abs(chebyshev_T(m, z)) <= 1 + 1e-12


class TestKernel:
    def test_params(self):
        assert KernelParams(5).exponent == 1.0 and KernelParams(4).exponent == 0.5

    @given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 1))
    def test_n3_is_one(self, rho, r, u):
        lam = abs(rho - r) + u * (2 * min(rho, r))
        assert kernel_h(lam, rho, r, 3) == 1.0

    def test_n5_value(self):
        assert kernel_h(1.0, 1.0, 1.0, 5) == pytest.approx(3.0)

    def test_boundary_zero(self):
        assert kernel_h(3.0, 1.0, 2.0, 5) == 0.0
        assert kernel_h(1.0, 1.0, 2.0, 6) == 0.0

    def test_support_rejected(self):
        with pytest.raises(ValueError):
            kernel_h(5.0, 1.0, 1.0, 5)

    @given(st.floats(0, 5), st.floats(0, 5), st.floats(0, 1), st.sampled_from([3, 4, 5, 6, 7, 8]))
    def test_symmetry(self, rho, r, u, n):
        lam = abs(rho - r) + u * 2 * min(rho, r)
        assert kernel_h(lam, rho, r, n) == pytest.approx(kernel_h(lam, r, rho, n), rel=1e-12, abs=1e-300)

    def test_support_swap(self):
        lam, rho, r = admissible_triples(2000, scale=3.0)
        assert np.all(support_swap_holds(lam, rho, r))

    def test_bounds_n3(self):
        rep = kernel_h_bounds_check(n=3, count=500)
        assert rep.constants == (1.0, 1.0, 1.0)

    @pytest.mark.parametrize("n", [4, 5, 6, 7])
    def test_bounds_finite(self, n):
        rep = kernel_h_bounds_check(n=n)
        assert rep.samples == 10_000 and rep.finite
        assert rep.min_ratio_constant <= 1e-12

    def test_bounds_on_boundary(self):
        rho = np.array([1.0, 2.0, 0.5])
        r = np.array([2.0, 0.5, 0.5])
        rep = kernel_h_bounds_check(np.abs(rho - r), rho, r, n=5)
        assert rep.constants == (0.0, 0.0, 0.0)


class TestQuadrature:
    def test_gauss_rule(self):
        rule = gauss_rule(6, 0.0, 2.0)
        assert rule.kind is RuleKind.SMOOTH_GAUSS and np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(2.0)
        assert rule(lambda x: x ** 11) == pytest.approx(2 ** 12 / 12, rel=1e-13)

    def test_singular_weights(self):
        rule = sqrt_singular_rule(8, 0.0, 2.0, 2.0)
        assert rule.kind is RuleKind.SQRT_ENDPOINT_SINGULAR and np.all(rule.weights > 0)
        assert rule.weights.sum() == pytest.approx(2.0, rel=1e-14)

    def test_constant_full(self):
        assert integrate_sqrt_singular(lambda x: np.ones_like(x), 0, 3.0, 3.0) == pytest.approx(3.0, rel=1e-14)

    def test_constant_half(self):
        c = 2.0
        val = integrate_sqrt_singular(lambda x: np.ones_like(x), 0, c / 2, c)
        assert val == pytest.approx(c * (1 - math.sqrt(3) / 2), rel=1e-14)

    def test_rejects_above_c(self):
        with pytest.raises(ValueError):
            integrate_sqrt_singular(lambda x: x, 0, 2.0, 1.0)

    @given(st.lists(st.floats(-3, 3), min_size=1, max_size=6), st.floats(0, 1), st.floats(0, 1),
           st.floats(0.5, 4))
    def test_polynomial_vs_adaptive(self, coefs, u1, u2, c):
        lo, hi = sorted((u1 * c, u2 * c))
        poly = np.polynomial.Polynomial(coefs)
        ref, _ = quad(lambda x: poly(x) * x / math.sqrt(c * c - x * x) if x < c else 0.0,
                      lo, hi, limit=200, epsabs=1e-13, epsrel=1e-12)
        val = integrate_sqrt_singular(poly, lo, hi, c, m=32)
        assert val == pytest.approx(ref, abs=1e-9 * (1 + abs(ref)))

    def test_error_decreases_under_doubling(self):
        f = lambda x: np.exp(np.sin(3 * x))
        # algebraic endpoint weight (2 - x)^(-1/2) handled by QUADPACK itself
        ref, _ = quad(lambda x: f(x) * x / math.sqrt(2 + x), 0.3, 2.0, weight="alg",
                      wvar=(0.0, -0.5), epsabs=1e-14, epsrel=1e-14)
        errs = [abs(integrate_sqrt_singular(f, 0.3, 2.0, 2.0, m) - ref) for m in (2, 4, 8, 16)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
