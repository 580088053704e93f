"""Independent reference solvers used to cross-check the exact propagators.

None of these share code paths with the production evaluators: the
d'Alembert oracle integrates polynomials symbolically in numpy, the finite
difference solver marches the radial PDE directly, and the Monte Carlo
oracle samples the n-dimensional spherical means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial


def dalembert_n3(pieces, r, t):
    """u for n = 3 from w = r u, w_tt = w_rr, w(0, t) = 0, w_t(r, 0) = r g(r).

    The odd extension of r g is integrated exactly piece by piece.
    """
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    lam = Polynomial([0.0, 1.0])

    def G(x):
        # antiderivative of the odd extension of lam g; G is even in x
        x = np.abs(np.asarray(x, dtype=float))
        out = np.zeros_like(x)
        for pc in pieces:
            anti = (lam * pc.poly).integ(lbnd=pc.lo)
            full = anti(pc.hi)
            out += np.where(x <= pc.lo, 0.0, np.where(x >= pc.hi, full, anti(np.clip(x, pc.lo, pc.hi))))
        return out

    return 0.5 * (G(r + t) - G(r - t)) / r


@dataclass
class FDResult:
    r: np.ndarray
    t: float
    u: np.ndarray
    h: float


def radial_fd(g, n: int, t_end: float, r_max: float, h: float, cfl: float = 0.5) -> FDResult:
    """Second-order conservative leapfrog for u_tt = r^(1-n) (r^(n-1) u_r)_r.

    Cell-centred radii r_i = (i + 1/2) h keep the origin off the grid; the
    flux through r = 0 vanishes.  Zero displacement, velocity g.
    """
    N = int(math.ceil(r_max / h))
    r = (np.arange(N) + 0.5) * h
    faces = np.arange(N + 1) * h
    vol = (faces[1:] ** n - faces[:-1] ** n) / n
    area = faces ** (n - 1)

    def lap(u):
        flux = np.zeros(N + 1)
        flux[1:-1] = area[1:-1] * (u[1:] - u[:-1]) / h
        return (flux[1:] - flux[:-1]) / vol

    steps = int(math.ceil(t_end / (cfl * h)))
    dt = t_end / steps
    g0 = g(r)
    u_prev = np.zeros(N)
    u = dt * g0 + (dt ** 3 / 6) * lap(g0)
    for _ in range(steps - 1):
        u_prev, u = u, 2 * u - u_prev + dt * dt * lap(u)
    return FDResult(r, t_end, u, h)


def fd_at(g, n: int, t: float, r_query, h: float) -> np.ndarray:
    r_query = np.asarray(r_query, dtype=float)
    res = radial_fd(g, n, t, r_query.max() + t + 2.0, h)
    return np.interp(r_query, res.r, res.u)


def _unit_sphere(rng, count: int, dim: int) -> np.ndarray:
    z = rng.standard_normal((count, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def mc_spherical_mean(phi, x_norm: float, r: float, n: int, count: int, rng):
    """Sample estimate (mean, standard error) of M(phi | x, r).

    Odd n: uniform points on the sphere.  Even n: the weighted ball mean is
    the projection of the uniform measure on the unit sphere of R^(n+1).
    """
    dim = n if n % 2 else n + 1
    w = _unit_sphere(rng, count, dim)[:, :n]
    x = np.zeros(n)
    x[0] = x_norm
    vals = phi(np.linalg.norm(x + r * w, axis=1))
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(count))


def mc_L(psi, r: float, t: float, n: int, count: int, rng):
    """Direct sample of L(psi)(r, t) = (1/(2m-1)) int_0^t (t-tau) M(psi(., tau) | x, t-tau) d tau.

    tau is drawn uniformly on [0, t] jointly with the sphere point, so a
    single sample mean estimates the double integral.
    """
    m = (n - 1) // 2 if n % 2 else n // 2
    dim = n if n % 2 else n + 1
    tau = rng.uniform(0.0, t, count)
    w = _unit_sphere(rng, count, dim)[:, :n]
    c = t - tau
    x = np.zeros(n)
    x[0] = r
    lam = np.linalg.norm(x + c[:, None] * w, axis=1)
    vals = t * c * psi(lam, tau) / (2 * m - 1)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(count))
