import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from strauss_lab.blowup_bounds import (BlowupCase, S_limit, _running_min_S, base_constants,
                                       blowup_threshold, build_sequences, case_for, constant_S,
                                       frame_grid, frame_lower_bound_odd, frame_source_term,
                                       frame_supersolution_floor, frame_weights,
                                       iterate_frame_numeric, max_admissible_eps,
                                       sequence_table, sigma0_points, thresholds_json)
from strauss_lab.exponents import ProblemSpec, strauss_exponent

P5 = strauss_exponent(5)


@pytest.fixture(scope="module")
def crit4():
    spec = ProblemSpec(4, 2.0, 0.1)
    return spec, base_constants(spec)


@pytest.fixture(scope="module")
def crit5():
    spec = ProblemSpec(5, P5, 0.1)
    return spec, base_constants(spec)


class TestCases:
    def test_case_for(self):
        assert case_for(ProblemSpec(4, 2.0, 0.1)) is BlowupCase.EVEN_CRITICAL
        assert case_for(ProblemSpec(4, 1.5, 0.1)) is BlowupCase.EVEN_SUBCRITICAL
        assert case_for(ProblemSpec(5, P5, 0.1)) is BlowupCase.ODD_CRITICAL
        assert case_for(ProblemSpec(5, 1.5, 0.1)) is BlowupCase.ODD_SUBCRITICAL

    def test_supercritical_refused(self):
        with pytest.raises(ValueError, match="exceeds"):
            case_for(ProblemSpec(5, 3.0, 0.1))

    def test_low_dimension_refused(self):
        with pytest.raises(ValueError, match="n >= 4"):
            base_constants(ProblemSpec(3, 1.2, 0.1), C_g=1.0)

    def test_mismatch_refused(self):
        with pytest.raises(ValueError, match="inconsistent"):
            base_constants(ProblemSpec(5, 1.5, 0.1), "OddCritical", C_g=1.0)


class TestSequences:
    @pytest.mark.parametrize("case", list(BlowupCase))
    @pytest.mark.parametrize("p", [Fraction(2), Fraction(3, 2), Fraction(7, 5)])
    def test_closed_forms(self, case, p):
        for n in (4, 5, 6):
            assert sequence_table(case, p, n, 25).consistent

    def test_critical_values(self):
        odd = sequence_table("OddCritical", 2, 5, 6)
        assert odd.a_rec == [2 ** (j - 1) - 1 for j in range(1, 7)]
        assert odd.l_rec[:3] == [Fraction(5, 2), Fraction(11, 4), Fraction(23, 8)]
        even = sequence_table("EvenCritical", 2, 4, 6)
        assert even.l_rec[:3] == [Fraction(1, 2), Fraction(3, 4), Fraction(7, 8)]
        assert odd.b_rec is None

    def test_subcritical_b(self):
        t = sequence_table("OddSubcritical", Fraction(3, 2), 5, 4)
        pq = Fraction(3, 2) * (4 * Fraction(3, 2) - 6) / 2
        assert t.b_rec[1] == pq + 3 and t.a_rec[1] == 4

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            sequence_table("OddCritical", 2, 5, 0)

    def test_normalised_converges(self, crit4):
        spec, base = crit4
        seq = build_sequences(spec, j_max=40, base=base)
        v = seq.normalised()
        assert abs(v[-1] - v[-2]) < 1e-8
        assert np.all(seq.logC >= seq.logC_minorant - 1e-9 * np.abs(seq.logC))

    def test_csv(self, crit4, tmp_path):
        spec, base = crit4
        seq = build_sequences(spec, j_max=5, base=base)
        seq.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0] == "j,a_j,b_j,l_j,log_C_j" and len(lines) == 6


class TestS:
    def test_trivial(self):
        assert _running_min_S(0.0, 0.0, 2.0) == 0.0
        assert S_limit(0.0, 0.0, 2.0) == 0.0

    def test_example(self):
        assert _running_min_S(0.0, math.log(2), 2.0) == pytest.approx(-2 * math.log(2), rel=1e-12)
        assert S_limit(0.0, math.log(2), 2.0) == pytest.approx(-2 * math.log(2), rel=1e-15)

    @given(st.floats(-5, 5), st.floats(0, 5), st.floats(1.2, 4))
    def test_vs_closed_form(self, logE, logB, p):
        s = _running_min_S(logE, logB, p)
        assert s <= S_limit(logE, logB, p) + 1e-12
        if logE <= logB:
            # all terms nonpositive: the infimum is the limit
            assert s == pytest.approx(S_limit(logE, logB, p), abs=1e-11)

    def test_constant_S_default_base(self):
        spec = ProblemSpec(4, 2.0, 0.1)
        assert constant_S(spec, "EvenCritical", 1.0) == pytest.approx(
            _running_min_S(0.0, math.log(4.0), 2.0))
        with pytest.raises(ValueError):
            constant_S(spec, "EvenCritical", 0.0)


class TestThreshold:
    @pytest.mark.parametrize("which", ["crit4", "crit5"])
    def test_loglog_slope(self, which, request):
        spec, base = request.getfixturevalue(which)
        eps = np.geomspace(0.1, 0.01, 5)
        y = [blowup_threshold(spec.with_eps(e), base=base).log_log_xi0 for e in eps]
        slope = np.polyfit(np.log(eps), y, 1)[0]
        assert slope == pytest.approx(-spec.p * (spec.p - 1), abs=1e-6)

    def test_subcritical_power_law(self):
        spec = ProblemSpec(5, 1.5, 0.1)
        base = base_constants(spec)
        eps = np.geomspace(0.1, 0.01, 4)
        y = [blowup_threshold(spec.with_eps(e), base=base).log_xi0 for e in eps]
        one_pq = 1 - 1.5 * (4 * 1.5 - 6) / 2
        assert np.polyfit(np.log(eps), y, 1)[0] == pytest.approx(-1.5 * 0.5 / one_pq, rel=1e-9)

    @pytest.mark.parametrize("n,eps,factor", [(5, 0.1, 3.0), (4, 0.01, 7.0)])
    def test_T_upper_factor(self, n, eps, factor):
        th = blowup_threshold(ProblemSpec(n, 1.5, eps))
        assert th.T_upper == pytest.approx(factor * th.xi0, rel=1e-12)
        assert tuple(th) == (th.xi0, th.T_upper)

    def test_huge_thresholds_stay_in_log_space(self, crit5):
        spec, base = crit5
        th = blowup_threshold(spec, base=base)
        assert th.log_xi0 > 1e12 and th.xi0 == math.inf and th.T_upper == math.inf

    def test_even_eps_too_large(self, crit4):
        spec, base = crit4
        big = 2 * max_admissible_eps(spec, base)
        with pytest.raises(ValueError, match="too large"):
            blowup_threshold(spec.with_eps(big), base=base)

    def test_json(self, crit5):
        spec, base = crit5
        text = thresholds_json([blowup_threshold(spec, base=base)])
        assert '"case": "OddCritical"' in text and "Infinity" in text


class TestFrame:
    @pytest.mark.parametrize("m,rho", [(2, 0), (3, 0), (1, 1), (2, 1)])
    def test_weights_exact_on_constants(self, m, rho):
        s = np.concatenate([[0.0], np.geomspace(1e-3, 5, 60)])
        kappa = 0.3
        M = frame_weights(s, m, kappa, rho)
        for i in (10, 40, 60):
            f = lambda sig: (1 - math.exp(sig - s[i])) ** m * math.exp(rho * sig)
            ref = math.exp(-kappa * s[i]) * integrate.quad(f, 0, s[i], epsrel=1e-12)[0]
            assert M[i].sum() == pytest.approx(ref, rel=1e-10)
        assert np.all(M >= 0) and np.all(np.triu(M, 1) == 0)

    def test_rule_rejected(self):
        with pytest.raises(ValueError):
            frame_weights(np.array([0.0, 1.0]), 2, 0.0, 0, rule="simpson")

    @pytest.mark.parametrize("which", ["crit4", "crit5"])
    def test_bracket(self, which, request):
        spec, base = request.getfixturevalue(which)
        for e in (0.1, 0.05, 0.02):
            se = spec.with_eps(e)
            th = blowup_threshold(se, base=base)
            run = iterate_frame_numeric(se, base=base, rule="lower")
            floor = frame_supersolution_floor(se, base=base)
            assert run.diverged
            assert floor <= run.log_xi_divergence <= th.log_xi0 + math.log(10)

    @pytest.mark.parametrize("which", ["crit4", "crit5"])
    def test_monotone_in_eps(self, which, request):
        spec, base = request.getfixturevalue(which)
        d = [iterate_frame_numeric(spec.with_eps(e), base=base, rule="lower").log_xi_divergence
             for e in (0.1, 0.05, 0.02)]
        assert d[0] < d[1] < d[2]

    def test_no_divergence_below_floor(self, crit5):
        spec, base = crit5
        floor = frame_supersolution_floor(spec, base=base)
        grid = frame_grid(spec, None, 0.99 * floor, base=base)
        # only the left-endpoint rule is a guaranteed minorant of the frame
        assert not iterate_frame_numeric(spec, base=base, log_xi_grid=grid, rule="lower").diverged

    def test_grid_must_start_at_base(self, crit5):
        spec, base = crit5
        with pytest.raises(ValueError):
            iterate_frame_numeric(spec, base=base, log_xi_grid=np.linspace(5.0, 10.0, 20))


@pytest.fixture(scope="module")
def sub5():
    spec = ProblemSpec(5, 1.5, 0.05)
    return spec, base_constants(spec)


class TestFramePredicate:
    def test_sigma0_points(self):
        pts = sigma0_points(20.0, 1.0, count=30)
        d = pts[:, 1] - pts[:, 0]
        assert pts.shape == (30, 2) and np.all(d >= 2) and np.all(d <= pts[:, 0] + 1e-12)
        with pytest.raises(ValueError):
            sigma0_points(3.0, 1.0)

    def test_negative_control(self, sub5):
        spec, base = sub5
        zero = lambda r, t: np.zeros(np.broadcast(r, t).shape)
        pts = sigma0_points(12.0, 1.0, count=10)
        rep = frame_lower_bound_odd(zero, spec, pts, base=base)
        assert rep.violations == 10 and not rep.holds
        assert np.allclose(rep.rhs, frame_source_term(spec, pts[:, 0], pts[:, 1], base))

    def test_power_scaling(self, sub5):
        spec, base = sub5
        pts = sigma0_points(12.0, 1.0, count=6)
        one = lambda r, t: np.ones(np.broadcast(r, t).shape)
        two = lambda r, t: 2 * np.ones(np.broadcast(r, t).shape)
        a = frame_lower_bound_odd(one, spec, pts, base=base)
        b = frame_lower_bound_odd(two, spec, pts, base=base)
        assert np.allclose(b.rhs - b.source, 2 ** 1.5 * (a.rhs - a.source), rtol=1e-12)

    def test_points_validated(self, sub5):
        spec, base = sub5
        one = lambda r, t: np.ones(np.broadcast(r, t).shape)
        with pytest.raises(ValueError, match="Sigma_0"):
            frame_lower_bound_odd(one, spec, np.array([[1.0, 1.5]]), base=base)

    def test_holds_for_computed_solution(self, sub5):
        from strauss_lab.duhamel import GridFunction
        from strauss_lab.picard import LatticeSpec, picard_run
        from strauss_lab.propagator import profile_from_spec, v_solution

        spec, base = sub5
        data = profile_from_spec(spec)
        st_ = picard_run(spec, data, 6.0, LatticeSpec(kind="uniform", h=1 / 16), max_iter=100)
        U = st_.U
        R, T = np.meshgrid(U.r_nodes, U.t_nodes, indexing="ij")
        full = U.with_values(U.values + np.where(U.support_flag, v_solution(spec, data, R, T), 0))
        assert isinstance(full, GridFunction)
        rep = frame_lower_bound_odd(full, spec, base=base)
        assert rep.points.shape[0] > 5 and rep.holds
