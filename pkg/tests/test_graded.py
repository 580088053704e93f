import numpy as np
import pytest

from strauss_lab.duhamel import L_point
from strauss_lab.graded import GradedFunction, GradedLattice, build_graded_operator, graded_nodes

K = 1.0


def psi(lam, tau):
    lam, tau = np.broadcast_arrays(np.asarray(lam, float), np.asarray(tau, float))
    return np.maximum(tau + K - lam, 0) ** 2 * np.exp(-0.3 * tau)


class TestNodes:
    def test_uniform_then_geometric(self):
        g = graded_nodes(1.0, 0.25, 1.5, 3.0)
        assert np.allclose(g[:9], np.linspace(-1, 1, 9))
        steps = np.diff(g[8:])
        assert np.allclose(steps[1:] / steps[:-1], 1.5)
        assert g[-1] >= 7.0 and g[-2] < 7.0

    def test_ratio_one_is_uniform(self):
        g = graded_nodes(1.0, 0.5, 1.0, 2.0)
        assert np.allclose(np.diff(g), 0.5)

    @pytest.mark.parametrize("k,h,ratio", [(1.0, 0.3, 1.2), (1.0, 0.25, 0.9)])
    def test_rejects(self, k, h, ratio):
        with pytest.raises(ValueError):
            graded_nodes(k, h, ratio, 5.0)

    def test_log_growth(self):
        sizes = [GradedLattice.build(1.0, T, 0.25, 1.2).g.size for T in (100, 1000, 10000)]
        assert sizes[2] - sizes[1] == pytest.approx(sizes[1] - sizes[0], abs=2)


class TestLattice:
    def test_active_region(self):
        lat = GradedLattice.build(1.0, 20.0, 0.25, 1.3)
        assert np.all(lat.r >= 0) and np.all(lat.t >= 0) and np.all(lat.t <= 20 + 1e-9)
        assert np.all(lat.r <= lat.t + lat.k + 1e-9)
        assert lat.h == pytest.approx(0.25)

    def test_sample_and_function(self):
        lat = GradedLattice.build(1.0, 5.0, 0.25, 1.3)
        f = GradedFunction(lat, lat.sample(lambda r, t: r + 2 * t))
        assert np.allclose(f.values, f.r + 2 * f.t)
        with pytest.raises(ValueError):
            GradedFunction(lat, np.zeros(lat.size + 1))
        with pytest.raises(ValueError):
            f.with_values(np.full(lat.size, np.nan))


@pytest.fixture(scope="module", params=[4, 5])
def op(request):
    lat = GradedLattice.build(K, 4.0, 0.125, 1.2)
    return build_graded_operator(lat, request.param)


class TestOperator:
    def test_nonnegative(self, op):
        assert np.all(op.matrix >= 0)

    def test_characteristic_causality(self, op):
        lat = op.lattice
        a, b = lat.g[lat.ia], lat.g[lat.ib]
        rows, cols = np.nonzero(op.matrix)
        assert np.all(a[cols] <= a[rows] + 1e-12)
        assert np.all(b[cols] <= b[rows] + 1e-12)

    def test_zero_at_t0(self, op):
        lat = op.lattice
        out = op.apply(lat.sample(psi))
        assert np.all(out[lat.t < 1e-12] == 0)

    def test_linear(self, op, rng):
        x, y = rng.uniform(0, 1, (2, op.lattice.size))
        assert np.allclose(op.apply(2 * x + 3 * y), 2 * op.apply(x) + 3 * op.apply(y),
                           rtol=1e-12, atol=1e-14)

    def test_matches_point_operator(self, op):
        lat = op.lattice
        out = op.apply(lat.sample(psi))
        pick = np.nonzero((lat.t > 0.5) & (lat.r < lat.t + 0.5))[0][::11]
        assert pick.size > 10
        for i in pick:
            ref = L_point(psi, lat.r[i], lat.t[i], op.n, k=K)
            assert out[i] == pytest.approx(ref, rel=0.02, abs=2e-4)

    def test_cache_reuse(self, op):
        again = build_graded_operator(op.lattice, op.n)
        assert again is op


@pytest.mark.parametrize("n", [4, 5])
def test_refinement(n):
    errs = []
    for h in (0.25, 0.125):
        lat = GradedLattice.build(K, 3.0, h, 1.0)
        out = build_graded_operator(lat, n).apply(lat.sample(psi))
        pick = np.nonzero((np.abs(lat.r - 0.5) < 1e-9) | (np.abs(lat.t - 2.0) < 1e-9))[0]
        errs.append(max(abs(out[i] - L_point(psi, lat.r[i], lat.t[i], n, k=K)) for i in pick))
    assert errs[1] < errs[0] / 2
