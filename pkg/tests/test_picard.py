import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from strauss_lab.duhamel import GridFunction
from strauss_lab.exponents import D_of_T, Nonlinearity, ProblemSpec, weight_w
from strauss_lab.picard import (ConditionConstants, F_scalar, LatticeSpec, Verdict, apply_F,
                                contraction_conditions, estimate_lifespan, fit_constants,
                                horizon_from_constant, lifespan_constant, picard_run,
                                weighted_norm)
from strauss_lab.propagator import profile_from_spec

COARSE = LatticeSpec(ratio=1.3)


def setup(n, p, eps, **kw):
    spec = ProblemSpec(n, p, eps, **kw)
    return spec, profile_from_spec(spec)


@pytest.fixture(scope="module")
def subcritical():
    out = {}
    for e in (30.0, 20.0, 12.0):
        spec, data = setup(4, 1.8, e, k0=0.1)
        out[e] = estimate_lifespan(spec, data, [10, 50, 100, 200],
                                   LatticeSpec(h=1 / 16, ratio=1.3))
    return out


@pytest.fixture(scope="module")
def fitted():
    spec, data = setup(5, 1.5, 0.05)
    return spec, fit_constants(spec, data, 6.0, COARSE)


class TestNonlinearity:
    def test_examples(self):
        assert F_scalar(-3.0, ProblemSpec(5, 2.0, 0.1)) == pytest.approx(9.0)
        assert F_scalar(-3.0, ProblemSpec(5, 2.0, 0.1, nonlinearity="signed")) == pytest.approx(-9.0)
        assert F_scalar(-3.0, ProblemSpec(4, 2.0, 0.1, nonlinearity="quadratic")) == pytest.approx(9.0)
        assert F_scalar(2.0, ProblemSpec(5, 1.5, 0.1, A=3.0)) == pytest.approx(3 * 2 ** 1.5)

    def test_quadratic_restricted(self):
        with pytest.raises(ValueError):
            ProblemSpec(5, 2.0, 0.1, nonlinearity="quadratic")

    @given(st.floats(-50, 50), st.floats(-50, 50), st.floats(1.05, 4),
           st.sampled_from([Nonlinearity.ABS_POWER, Nonlinearity.SIGNED_POWER]))
    def test_growth_and_lipschitz(self, a, b, p, kind):
        spec = ProblemSpec(5, p, 0.1, nonlinearity=kind, A=1.7)
        Fa, Fb = F_scalar(a, spec), F_scalar(b, spec)
        assert abs(Fa) <= 1.7 * abs(a) ** p * (1 + 1e-12)
        bound = p * 1.7 * (abs(a) + abs(b)) ** (p - 1) * abs(a - b)
        assert abs(Fa - Fb) <= bound * (1 + 1e-9) + 1e-300

    def test_apply_F(self):
        spec = ProblemSpec(5, 2.0, 0.1)
        g = GridFunction.from_function(lambda r, t: r - t, 0.25, 9, 5, 1.0)
        assert np.allclose(apply_F(g, spec).values, np.where(g.support_flag, (g.values) ** 2, 0))


class TestNorm:
    def test_constant_function(self):
        spec = ProblemSpec(5, 3.0, 0.1)
        g = GridFunction.lattice(0.25, 9, 5, 1.0, np.ones((9, 5)))
        R, T = np.meshgrid(g.r_nodes, g.t_nodes, indexing="ij")
        ref = weight_w(R[g.support_flag], T[g.support_flag], spec).max()
        assert weighted_norm(g, spec) == pytest.approx(ref)
        assert weighted_norm(g, spec, T=0.0) == pytest.approx(
            weight_w(g.r_nodes[:5], 0.0 * g.r_nodes[:5], spec).max())

    def test_zero(self):
        spec = ProblemSpec(4, 2.0, 0.1)
        assert weighted_norm(GridFunction.lattice(0.25, 9, 5, 1.0), spec) == 0.0

    def test_scaling(self, rng):
        spec = ProblemSpec(4, 1.5, 0.1)
        g = GridFunction.lattice(0.25, 9, 5, 1.0, rng.normal(size=(9, 5)))
        assert weighted_norm(g.with_values(-2.5 * g.values), spec) == pytest.approx(
            2.5 * weighted_norm(g, spec), rel=1e-14)


class TestPicardRun:
    def test_zero_data(self):
        spec, data = setup(5, 3.0, 0.0)
        st_ = picard_run(spec, data, 5.0, COARSE)
        assert st_.verdict is Verdict.CONVERGED and st_.l == 1
        assert st_.norm_history == [0.0] and np.all(st_.U.values == 0)

    def test_supercritical_small_eps(self):
        spec, data = setup(5, 3.0, 0.05)
        st_ = picard_run(spec, data, 5.0, COARSE, max_iter=100)
        assert st_.verdict is Verdict.CONVERGED
        assert st_.residual <= 2 * st_.tol
        d = np.array(st_.delta_history[1:])
        assert np.all(d[1:] <= d[:-1] * 0.5)
        assert max(st_.norm_history) < 1e-2
        rec = st_.record()
        assert rec["verdict"] == "Converged" and rec["iterations"] == st_.l

    def test_large_data_diverges(self):
        spec, data = setup(5, 3.0, 20.0)
        st_ = picard_run(spec, data, 5.0, COARSE, max_iter=100)
        assert st_.verdict is Verdict.DIVERGED
        assert st_.norm_history[-1] > st_.cap

    def test_uniform_support(self):
        spec, data = setup(5, 3.0, 0.05, k0=0.25)
        st_ = picard_run(spec, data, 1.0, LatticeSpec(kind="uniform", h=1 / 16), max_iter=60)
        assert st_.verdict is Verdict.CONVERGED
        U = st_.U
        assert np.all(U.values[~U.support_flag] == 0)

    def test_uniform_matches_graded(self):
        spec, data = setup(5, 3.0, 0.05, k0=0.25)
        uni = picard_run(spec, data, 1.0, LatticeSpec(kind="uniform", h=1 / 16), max_iter=60)
        gr = picard_run(spec, data, 1.0, LatticeSpec(h=1 / 16, ratio=1.0), max_iter=60)
        a, b = max(uni.norm_history), max(gr.norm_history)
        assert a == pytest.approx(b, rel=0.05)

    def test_coarse_lattice_rejected(self):
        spec, data = setup(5, 3.0, 0.05, k0=0.5)
        with pytest.raises(ValueError, match="coarse"):
            picard_run(spec, data, 1.0, LatticeSpec(h=0.125))

    @pytest.mark.parametrize("kw", [{"max_iter": 1}, {"tol": 0.0}, {"tol": -1.0}])
    def test_bad_arguments(self, kw):
        spec, data = setup(5, 3.0, 0.05)
        with pytest.raises(ValueError):
            picard_run(spec, data, 1.0, COARSE, **kw)


class TestLifespan:
    def test_supercritical_global(self):
        spec, data = setup(5, 3.0, 0.01, k0=0.1)
        est = estimate_lifespan(spec, data, [1, 10, 100], COARSE)
        assert est.T == math.inf and float(est) == math.inf
        assert [v for _, v in est.trail] == ["Converged"] * 3

    def test_monotone_in_eps(self, subcritical):
        T = [subcritical[e].T for e in (30.0, 20.0, 12.0)]
        assert all(math.isfinite(x) for x in T)
        assert T[0] < T[1] < T[2]

    def test_bracket(self, subcritical):
        for est in subcritical.values():
            assert est.T_last_converged < est.T == est.T_first_diverged
        trail = subcritical[20.0].trail
        assert [v for _, v in trail] == ["Converged", "Diverged", "Diverged", "Diverged"]

    def test_agrees_with_direct_runs(self, subcritical):
        spec, data = setup(4, 1.8, 20.0, k0=0.1)
        T = subcritical[20.0].T
        lat = LatticeSpec(h=1 / 16, ratio=1.3)
        assert picard_run(spec, data, 0.9 * T, lat, max_iter=400).verdict is Verdict.CONVERGED
        assert picard_run(spec, data, 1.1 * T, lat, max_iter=400).verdict is Verdict.DIVERGED

    def test_grid_checked(self):
        spec, data = setup(5, 3.0, 0.01)
        for bad in ([], [2.0, 1.0]):
            with pytest.raises(ValueError):
                estimate_lifespan(spec, data, bad, COARSE)


class TestConditions:
    def test_missing_rejected(self):
        spec = ProblemSpec(5, 1.5, 0.05)
        with pytest.raises(ValueError, match="C0"):
            contraction_conditions(spec, 1.0, ConditionConstants(1, 1, 1, 1))
        with pytest.raises(ValueError, match="C1"):
            contraction_conditions(ProblemSpec(4, 1.5, 0.05), 1.0, ConditionConstants(1, 1, 1, 1))

    def test_fitted_positive(self, fitted):
        spec, c = fitted
        assert not c.missing(5)
        assert all(getattr(c, name) > 0 for name in ("C", "C_n0p", "C_n1p", "C_npm1p", "C0"))

    def test_verdict_flips_once(self, fitted):
        spec, c = fitted
        small = spec.with_eps(1e-3)
        Ts = np.geomspace(1, 1e12, 40)
        v = [contraction_conditions(small, T, c).verdict for T in Ts]
        assert v[0] and not v[-1]
        flips = sum(a != b for a, b in zip(v, v[1:]))
        assert flips == 1
        first_bad = contraction_conditions(small, Ts[-1], c).first_violated()
        assert first_bad is not None

    def test_lifespan_constant_horizon(self, fitted):
        spec, c = fitted
        cD, eps0 = lifespan_constant(spec, c)
        assert cD > 0 and 0 < eps0 <= 1
        small = spec.with_eps(1e-3)
        T = horizon_from_constant(small, cD)
        assert small.eps ** (small.p * (small.p - 1)) * D_of_T(small, T)[0] == pytest.approx(cD, rel=1e-9)

    def test_lifespan_constant_odd_only(self):
        with pytest.raises(ValueError):
            lifespan_constant(ProblemSpec(4, 1.5, 0.1), ConditionConstants(1, 1, 1, 1, C1=1, C2=1))

    def test_horizon_supercritical(self):
        spec = ProblemSpec(5, 3.0, 0.1)
        assert horizon_from_constant(spec, 1.0) == math.inf
