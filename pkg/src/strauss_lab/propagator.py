"""Exact radial solutions of the free wave equation.

Velocity data g produce u0 through the classical Legendre (odd n) and
Chebyshev (even n) representations.  Profiles are piecewise polynomials
whenever possible so that the r = 0 limit can be taken exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn

from .special_functions import (
    _leggauss,
    chebyshev_T,
    gauss_rule,
    legendre_P,
)

Profile = Callable[[np.ndarray], np.ndarray]


def omega(n: int) -> float:
    """Surface measure of the unit sphere in R^n."""
    return 2 * math.pi ** (n / 2) / gamma_fn(n / 2)


def double_factorial(m: int) -> int:
    return math.prod(range(m, 0, -2)) if m > 0 else 1


@dataclass(frozen=True)
class Piece:
    lo: float
    hi: float
    poly: Polynomial


def _eval_pieces(pieces: Sequence[Piece], lam) -> np.ndarray:
    """Sum of the pieces, each on [lo, hi); hi is closed unless another piece starts there."""
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    starts = {pc.lo for pc in pieces}
    for pc in pieces:
        inside = (lam >= pc.lo) & (lam < pc.hi)
        if pc.hi not in starts:
            inside |= lam == pc.hi
        if np.any(inside):
            out[inside] += pc.poly(lam[inside])
    return out


@dataclass(frozen=True)
class RadialData:
    """Radial initial data u(0) = eps f, u_t(0) = eps g (eps applied elsewhere)."""

    k: float
    k0: float
    k1: float
    g_pieces: tuple[Piece, ...] = ()
    f_pieces: tuple[Piece, ...] = ()
    g_func: Profile | None = None
    f_func: Profile | None = None
    breakpoints: tuple[float, ...] = ()
    name: str = "custom"
    smoothness: str = "C1"

    def g(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.g_func is not None:
            return np.where(lam <= self.k, self.g_func(lam), 0.0)
        return _eval_pieces(self.g_pieces, lam)

    def f(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.f_func is not None:
            return np.where(lam <= self.k, self.f_func(lam), 0.0)
        return _eval_pieces(self.f_pieces, lam)

    @property
    def has_f(self) -> bool:
        return bool(self.f_pieces) or self.f_func is not None

    @property
    def has_g(self) -> bool:
        return bool(self.g_pieces) or self.g_func is not None

    def breaks(self) -> np.ndarray:
        pts = set(self.breakpoints) | {0.0, self.k}
        for pc in self.g_pieces + self.f_pieces:
            pts.update((pc.lo, pc.hi))
        return np.array(sorted(pts))

    def scaled(self, c: float) -> "RadialData":
        """Data multiplied by c."""
        gp = tuple(Piece(p.lo, p.hi, c * p.poly) for p in self.g_pieces)
        fp = tuple(Piece(p.lo, p.hi, c * p.poly) for p in self.f_pieces)
        gf = None if self.g_func is None else (lambda x, h=self.g_func: c * h(x))
        ff = None if self.f_func is None else (lambda x, h=self.f_func: c * h(x))
        return RadialData(self.k, self.k0, self.k1, gp, fp, gf, ff, self.breakpoints,
                          self.name, self.smoothness)

    def sample_csv(self, path, count: int = 201) -> None:
        lam = np.linspace(0.0, self.k, count)
        np.savetxt(path, np.column_stack([lam, self.g(lam)]), delimiter=",",
                   header="lambda,g", comments="")


def bump_profile(k: float, k0: float, k1: float | None = None) -> RadialData:
    """g = G0 (lam-k0)^2 (k-lam)^2 on [k0, k], normalised to max g = 1."""
    if k1 is None:
        k1 = 0.5 * (k0 + k)
    poly = Polynomial.fromroots([k0, k0, k, k]) * (16.0 / (k - k0) ** 4)
    return RadialData(k, k0, k1, g_pieces=(Piece(k0, k, poly),), name="bump")


def zero_profile(k: float, k0: float, k1: float | None = None) -> RadialData:
    if k1 is None:
        k1 = 0.5 * (k0 + k)
    return RadialData(k, k0, k1, name="zero", smoothness="Cinf")


def profile_from_spec(spec) -> RadialData:
    if spec.profile == "bump":
        return bump_profile(spec.k, spec.k0, spec.k1)
    if spec.profile == "zero":
        return zero_profile(spec.k, spec.k0, spec.k1)
    raise ValueError(f"unknown profile {spec.profile!r}")


def admissible_k0(n: int, k: float) -> float:
    """Smallest k0 with P_m (odd n) or T_m (even n) above 1/2 on (k0/k, 1].

    m is the degree of the kernel polynomial in the u0 representation:
    (n-3)/2 for odd n and (n-2)/2 for even n.  Degree zero admits every k0,
    and we return k/2.  For n = 4 the default 0.9k is returned; it clears the
    T_1 threshold k/2 with room to spare.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    if n == 4:
        return 0.9 * k
    m = (n - 3) // 2 if n % 2 else (n - 2) // 2
    if m == 0:
        return 0.5 * k
    poly = legendre_P if n % 2 else chebyshev_T
    z = np.linspace(-1.0, 1.0, 4001)
    vals = poly(m, z) - 0.5
    bad = np.nonzero(vals <= 0)[0]
    i = bad[-1]
    root = brentq(lambda s: poly(m, s) - 0.5, z[i], z[i + 1], xtol=1e-15)
    return k * root


def panel_nodes(lo, hi, breaks, q: int, clustered: bool = False):
    """Gauss nodes on [lo, hi] split at the interior breakpoints, batched.

    ``lo`` and ``hi`` are arrays of shape (N,); the result has shape
    (N, (len(breaks) + 1) * q).  Clipped breakpoints give zero-width panels.
    With ``clustered`` each panel is mapped by u -> u^2 (3 - 2u), which
    smooths square-root behaviour at the panel ends.
    """
    lo = np.asarray(lo, dtype=float)[..., None]
    hi = np.asarray(hi, dtype=float)[..., None]
    br = np.clip(np.asarray(breaks, dtype=float), lo, hi)
    pts = np.sort(np.concatenate([lo, br, hi], axis=-1), axis=-1)
    a, b = pts[..., :-1, None], pts[..., 1:, None]
    x, w = _leggauss(q)
    if clustered:
        u = 0.5 * (x + 1)
        x, w = 2 * u * u * (3 - 2 * u) - 1, w * 6 * u * (1 - u)
    half = 0.5 * (b - a)
    nodes = (a + half * (x + 1)).reshape(*lo.shape[:-1], -1)
    weights = (half * w).reshape(*lo.shape[:-1], -1)
    return nodes, weights


def spherical_mean_M(phi: Profile, x_norm, r: float, n: int, m: int = 32,
                     breaks: Sequence[float] = (), return_error: bool = False):
    """M(phi | x, r) for a radial phi at |x| = x_norm (scalar or array)."""
    if r < 0:
        raise ValueError("radius must be nonnegative")
    x = np.atleast_1d(np.asarray(x_norm, dtype=float))

    def value(mm):
        if r == 0:
            return phi(x)
        if n % 2:
            return sphere_mean(phi, x, np.full_like(x, r), n, mm, breaks)
        # weighted ball mean: sphere means over radii r*s, s = sin(theta)
        c = 2 * omega(n) / omega(n + 1)
        th, wth = panel_nodes(np.zeros(1), np.full(1, 0.5 * math.pi), [], mm)
        s = np.sin(th[0])
        wts = wth[0] * s ** (n - 1)
        X, S = np.meshgrid(x, s, indexing="ij")
        vals = sphere_mean(phi, X.ravel(), r * S.ravel(), n, mm, breaks).reshape(X.shape)
        return c * vals @ wts

    v = value(m)
    out = v if np.ndim(x_norm) else float(v[0])
    if return_error:
        err = np.abs(v - value(max(m // 2, 2)))
        return out, (err if np.ndim(x_norm) else float(err[0]))
    return out


def sphere_mean(phi: Profile, x_norm, rho, n: int, m: int, breaks: Sequence[float] = ()):
    """(1/omega_n) int_{|w|=1} phi(|x + rho w|) dS, batched over (x_norm, rho).

    Uses the identity reducing the surface integral to a lambda-integral
    over [|rho - x|, rho + x] with the kernel h.
    """
    x = np.asarray(x_norm, dtype=float)
    rho = np.asarray(rho, dtype=float)
    x, rho = np.broadcast_arrays(x, rho)
    out = np.empty(x.shape)
    # a sphere that is tiny next to its distance from the origin (or the
    # reverse) sees phi at the larger radius up to O(1e-13); this also keeps
    # (x rho)^(2-n) from overflowing
    degenerate = np.minimum(x, rho) <= 1e-13 * np.maximum(x, rho)
    if np.any(degenerate):
        out[degenerate] = phi(np.maximum(x, rho)[degenerate])
    gen = ~degenerate
    if np.any(gen):
        # lengths in units of max(x, rho); the scale cancels between kernel and prefactor
        sc = np.maximum(x[gen], rho[gen])
        xs, rs = x[gen] / sc, rho[gen] / sc
        lo, hi = np.abs(rs - xs)[:, None], (rs + xs)[:, None]
        width = 2 * np.minimum(xs, rs)[:, None]
        # nodes in the panel offset s = (lam - lo)/width, so that both kernel
        # factors lam^2 - lo^2 and hi^2 - lam^2 are formed without cancellation
        br = np.asarray(breaks, dtype=float)[None, :] / sc[:, None]
        sb = np.clip((br - lo) / width, 0.0, 1.0)
        u, w = _panel_nodes_rows(np.zeros(xs.size), np.ones(xs.size), sb, m, clustered=n % 2 == 0)
        lam = lo + width * u
        e = 0.5 * (n - 3)
        h = ((width * u) * (lam + lo) * (width * (1 - u)) * (hi + lam)) ** e if n > 3 else 1.0
        integrand = lam * h * phi(lam * sc[:, None])
        w = w * width
        coef = 2.0 ** (3 - n) * omega(n - 1) * (xs * rs) ** (2 - n) / omega(n)
        out[gen] = coef * np.sum(w * integrand, axis=-1)
    return out


def _D_operator(poly: Polynomial) -> Polynomial:
    """P(lam) -> P'(lam)/lam; requires P'(0) = 0."""
    d = poly.deriv()
    c = d.coef
    if abs(c[0]) > 1e-12 * max(1.0, np.max(np.abs(c))):
        raise ValueError("derivative does not vanish at the origin")
    return Polynomial(c[1:]) if len(c) > 1 else Polynomial([0.0])


def _centre_value_odd(pieces: Sequence[Piece], t: np.ndarray, n: int) -> np.ndarray:
    """R(g | 0, t) for n = 2m+1: (1/(2m-1)!!) D^(m-1) [lam^(2m-1) g](t)."""
    m = (n - 1) // 2
    out = np.zeros_like(t)
    lam = Polynomial([0.0, 1.0])
    for pc in pieces:
        G = lam ** (2 * m - 1) * pc.poly
        for _ in range(m - 1):
            G = _D_operator(G)
        inside = (t >= pc.lo) & (t <= pc.hi)
        out[inside] += G(t[inside])
    return out / double_factorial(2 * m - 1)


def _centre_value_even(pieces: Sequence[Piece], t: np.ndarray, n: int, q: int = 48) -> np.ndarray:
    """R(g | 0, t) for n = 2m via int_0^(pi/2) sin^(2m-2) D^(m-1)[lam^(n-1) g](t sin) d theta."""
    m = n // 2
    c = 2 * omega(n) / omega(n + 1) / double_factorial(2 * m - 1)
    lam = Polynomial([0.0, 1.0])
    out = np.zeros_like(t)
    for pc in pieces:
        G = lam ** (n - 1) * pc.poly
        for _ in range(m - 1):
            G = _D_operator(G)
        for idx, tt in enumerate(t):
            if tt <= pc.lo:
                continue
            th_lo = math.asin(pc.lo / tt)
            th_hi = math.asin(min(pc.hi / tt, 1.0))
            rule = gauss_rule(q, th_lo, th_hi)
            th = rule.nodes
            out[idx] += float(np.dot(rule.weights, np.sin(th) ** (2 * m - 2) * G(tt * np.sin(th))))
    return c * out


def _velocity_odd(prof: Profile, breaks: np.ndarray, r: np.ndarray, t: np.ndarray, n: int,
                  q: int) -> np.ndarray:
    """Legendre representation, r > 0."""
    m = (n - 3) // 2
    lo = np.clip(np.abs(r - t), breaks[0], breaks[-1])
    hi = np.clip(r + t, breaks[0], breaks[-1])
    lam, wt = panel_nodes(lo, hi, breaks, q)
    rr, tt = r[:, None], t[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (lam * lam + rr * rr - tt * tt) / (2 * rr * lam)
    vals = np.where(wt > 0, lam ** ((n - 1) / 2) * prof(lam) * legendre_P(m, np.nan_to_num(z)), 0.0)
    return np.sum(wt * vals, axis=-1) / (2 * r ** ((n - 1) / 2))


def _velocity_even(prof: Profile, breaks: np.ndarray, r: np.ndarray, t: np.ndarray, n: int,
                   q: int, chunk: int = 64) -> np.ndarray:
    """Chebyshev representation, r > 0.

    The kernel is lam^(n/2) g(lam) T_((n-2)/2)(z) against the two inverse
    square roots; for n = 4 this follows from descent out of n = 5 followed
    by one integration by parts in rho.  The inner lambda-integral is taken in the angle phi with
    lam^2 = r^2 + rho^2 - 2 r rho cos(phi), which absorbs both inverse square
    roots; the outer rho-integral uses the sine substitution rho = t sin(theta).
    """
    out = np.zeros_like(r)
    for s in range(0, r.size, chunk):
        out[s:s + chunk] = _velocity_even_block(prof, breaks, r[s:s + chunk], t[s:s + chunk], n, q)
    return out


def _velocity_even_block(prof, breaks, r, t, n, q):
    mdeg = (n - 2) // 2
    rr, tt = r[:, None], t[:, None]
    cand = np.concatenate([np.abs(rr - breaks), rr + breaks], axis=-1)
    th_br = np.arcsin(np.clip(cand / np.maximum(tt, 1e-300), 0.0, 1.0))
    theta, wth = _panel_nodes_rows(np.zeros_like(r), np.full_like(r, 0.5 * math.pi), th_br, q)
    rho = tt * np.sin(theta)
    wrho = wth * tt * np.sin(theta)
    R = np.broadcast_to(rr, rho.shape)
    # inner angle panels split where lambda crosses a profile breakpoint
    with np.errstate(divide="ignore", invalid="ignore"):
        cphi = (R[..., None] ** 2 + rho[..., None] ** 2 - breaks ** 2) / (2 * R[..., None] * rho[..., None])
    ph_br = np.arccos(np.clip(np.nan_to_num(cphi, nan=1.0), -1.0, 1.0))
    shape = rho.shape
    phi, wph = _panel_nodes_rows(np.zeros(rho.size), np.full(rho.size, math.pi),
                                 ph_br.reshape(rho.size, -1), q)
    phi = phi.reshape(*shape, -1)
    wph = wph.reshape(*shape, -1)
    Rb, rb = R[..., None], rho[..., None]
    lam = np.sqrt(np.maximum(Rb * Rb + rb * rb - 2 * Rb * rb * np.cos(phi), 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(lam > 0, (Rb - rb * np.cos(phi)) / lam, 1.0)
    vals = lam ** ((n - 2) / 2) * prof(lam) * chebyshev_T(mdeg, z)
    inner = 0.5 * np.sum(wph * vals, axis=-1)
    return 2.0 / (math.pi * r ** ((n - 2) / 2)) * np.sum(wrho * inner, axis=-1)


def _panel_nodes_rows(lo, hi, breaks_rows, q, clustered: bool = False):
    """Like panel_nodes but with a different breakpoint list per row."""
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    br = np.clip(breaks_rows, lo, hi)
    pts = np.sort(np.concatenate([lo, br, hi], axis=-1), axis=-1)
    a, b = pts[:, :-1, None], pts[:, 1:, None]
    x, w = _leggauss(q)
    if clustered:
        u = 0.5 * (x + 1)
        x, w = 2 * u * u * (3 - 2 * u) - 1, w * 6 * u * (1 - u)
    half = 0.5 * (b - a)
    return (a + half * (x + 1)).reshape(lo.shape[0], -1), (half * w).reshape(lo.shape[0], -1)


def _velocity_solution(data: RadialData, which: str, r, t, n: int, q: int = 16):
    """Solution with zero displacement and velocity data 'g' or 'f' (unscaled)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    r, t = np.broadcast_arrays(r, t)
    shape = r.shape
    r, t = r.ravel().copy(), t.ravel().copy()
    prof = data.g if which == "g" else data.f
    pieces = data.g_pieces if which == "g" else data.f_pieces
    funcs = data.g_func if which == "g" else data.f_func
    if not pieces and funcs is None:
        return np.zeros(shape)
    breaks = data.breaks()
    out = np.zeros_like(r)
    pos = r > 0
    if np.any(pos):
        fn = _velocity_odd if n % 2 else _velocity_even
        out[pos] = fn(prof, breaks, r[pos], t[pos], n, q)
    centre = ~pos
    if np.any(centre):
        tc = t[centre]
        if pieces and funcs is None:
            out[centre] = (_centre_value_odd(pieces, tc, n) if n % 2
                           else _centre_value_even(pieces, tc, n))
        else:
            # u0 is even in r: Richardson extrapolation from two small radii
            h = 1e-3 * data.k
            fn = _velocity_odd if n % 2 else _velocity_even
            u1 = fn(prof, breaks, np.full(tc.size, h), tc, n, q)
            u2 = fn(prof, breaks, np.full(tc.size, 2 * h), tc, n, q)
            out[centre] = (4 * u1 - u2) / 3
    out[t == 0] = 0.0
    return out.reshape(shape)


def u0_odd(data: RadialData, r, t, n: int, q: int = 16):
    """u0 for velocity data g, odd n (array or scalar (r, t))."""
    if n % 2 == 0 or n < 3:
        raise ValueError("u0_odd needs odd n >= 3")
    out = _velocity_solution(data, "g", r, t, n, q)
    return _with_displacement(data, out, r, t, n, q)


def u0_even(data: RadialData, r, t, n: int, q: int = 16):
    """u0 for velocity data g, even n."""
    if n % 2 or n < 4:
        raise ValueError("u0_even needs even n >= 4")
    out = _velocity_solution(data, "g", r, t, n, q)
    return _with_displacement(data, out, r, t, n, q)


def _with_displacement(data, out, r, t, n, q):
    if not data.has_f:
        return out[()] if np.ndim(out) == 0 else out
    # displacement part is the time derivative of the velocity solution for f
    t_arr = np.broadcast_to(np.asarray(t, dtype=float), np.shape(out))
    h = 1e-4 * data.k
    tp = t_arr + h
    tm = np.maximum(t_arr - h, 0.0)
    dt = _velocity_solution(data, "f", r, tp, n, q) - _velocity_solution(data, "f", r, tm, n, q)
    out = out + dt / (tp - tm)
    return out[()] if np.ndim(out) == 0 else out


def u0(data: RadialData, r, t, n: int, q: int = 16):
    return u0_odd(data, r, t, n, q) if n % 2 else u0_even(data, r, t, n, q)


@dataclass(frozen=True)
class LinearSolution:
    data: RadialData
    n: int
    quad_nodes: int = 16

    @property
    def parity(self) -> str:
        return "odd" if self.n % 2 else "even"

    def __call__(self, r, t):
        return u0(self.data, r, t, self.n, self.quad_nodes)


def v1_solution(spec, data: RadialData, r, t, q_tau: int = 12, q_mean: int = 24):
    """Zero-data solution driven by (2(m-1)/(2m-1)) M(F(eps f) | x, t).

    Computed as the Duhamel superposition of free solutions,
    v1(r, t) = int_0^t S[G(., tau)](r, t - tau) d tau, where S maps a
    velocity profile to its free solution.
    """
    from .picard import F_scalar

    n = spec.n
    m = (n - 1) // 2 if n % 2 else n // 2
    coef = 2 * (m - 1) / (2 * m - 1)
    r_arr, t_arr = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    if not data.has_f or coef == 0 or spec.eps == 0:
        return np.zeros(r_arr.shape)[()] if r_arr.ndim == 0 else np.zeros(r_arr.shape)
    breaks = data.breaks()

    def source_profile(tau):
        def G(lam):
            lam = np.asarray(lam, dtype=float)
            phi = lambda x: F_scalar(spec.eps * data.f(x), spec)
            flat = spherical_mean_M(phi, lam.ravel(), tau, n, q_mean, breaks)
            return coef * np.asarray(flat).reshape(lam.shape)
        return G

    out = np.zeros(r_arr.size)
    for idx, (rr, tt) in enumerate(zip(r_arr.ravel(), t_arr.ravel())):
        if tt <= 0:
            continue
        rule = gauss_rule(q_tau, 0.0, tt)
        total = 0.0
        for tau, wt in zip(rule.nodes, rule.weights):
            src = RadialData(data.k + tau, data.k0, data.k1, g_func=source_profile(tau),
                             breakpoints=tuple(np.concatenate([breaks, breaks + tau])))
            total += wt * float(_velocity_solution(src, "g", rr, tt - tau, n, 8))
        out[idx] = total
    out = out.reshape(r_arr.shape)
    return out[()] if out.ndim == 0 else out


def v_solution(spec, data: RadialData, r, t):
    """U0 = v = eps u0 + v1."""
    base = spec.eps * u0(data, r, t, spec.n)
    if data.has_f:
        base = base + v1_solution(spec, data, r, t)
    return base


@dataclass
class HuygensReport:
    max_outside: float
    scale: float
    tol: float
    samples_outside: int
    ok: bool

    @property
    def ratio(self) -> float:
        return self.max_outside / self.scale if self.scale > 0 else 0.0


def check_huygens(sol: LinearSolution, samples, tol: float = 1e-6) -> HuygensReport:
    """|u0| outside the collar t-k <= r <= t+k relative to the max inside."""
    if sol.n % 2 == 0:
        raise ValueError("Huygens' principle does not hold in even dimensions")
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    r, t = samples[:, 0], samples[:, 1]
    k = sol.data.k
    vals = np.abs(sol(r, t))
    outside = (r < t - k) | (r > t + k)
    scale = float(np.max(vals[~outside], initial=0.0))
    worst = float(np.max(vals[outside], initial=0.0))
    ok = worst <= tol * scale if scale > 0 else worst == 0
    return HuygensReport(worst, scale, tol, int(outside.sum()), bool(ok))


@dataclass
class LowerBoundReport:
    C_g: float
    samples: int
    ok: bool
    message: str = ""


def lower_bound_u0(sol: LinearSolution, spec, t_span: float = 4.0, count: int = 24) -> LowerBoundReport:
    """Empirical infimum of u0 r^((n-1)/2) over t + k0 < r < t + k1, t >= k - k0."""
    k, k0, k1 = sol.data.k, sol.data.k0, sol.data.k1
    k2 = k - k0
    ts = k2 + np.linspace(0.0, t_span * k, count)
    shift = k0 + (k1 - k0) * (np.arange(1, count + 1) / (count + 1))
    T, S = np.meshgrid(ts, shift, indexing="ij")
    R = T + S
    vals = sol(R, T) * R ** ((sol.n - 1) / 2)
    c = float(np.min(vals))
    ok = c > 0
    msg = "" if ok else "non-positive infimum: profile violates the blow-up positivity condition"
    return LowerBoundReport(c, int(vals.size), ok, msg)


def fit_decay_constant(sol: LinearSolution, r, t) -> float:
    """sup |u0| (t+r+2k)^((n-1)/2) [(t-r+2k)^((n-1)/2) for even n] over samples."""
    r, t = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(t, dtype=float))
    k, n = sol.data.k, sol.n
    wgt = (t + r + 2 * k) ** ((n - 1) / 2)
    if n % 2 == 0:
        wgt = wgt * np.maximum(t - r + 2 * k, 0.0) ** ((n - 1) / 2)
    return float(np.max(np.abs(sol(r, t)) * wgt))
