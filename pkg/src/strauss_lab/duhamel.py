"""The positive Duhamel operator L and its radial forms.

    L(psi)(x, t) = 1/(2m-1) int_0^t (t - tau) M(psi(., tau) | x, t - tau) d tau

For radial psi the spherical mean collapses to a lambda-integral against the
kernel h, which leaves a two-dimensional integral over (lambda, tau).  Two
discretisations are provided: point evaluation for callable psi, and exact
integration of the bilinear interpolant on a characteristic lattice.  In the
lattice form every weight is a nonnegative integral, so positivity,
linearity and causality hold to the last bit.
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .propagator import omega
from .special_functions import _leggauss, kernel_h_unchecked

log = logging.getLogger(__name__)

Psi = Callable[[np.ndarray, np.ndarray], np.ndarray]


def m_index(n: int) -> int:
    return (n - 1) // 2 if n % 2 else n // 2


def constant_odd(n: int) -> float:
    """C in L_odd: 2^(3-n) omega_(n-1) / ((2m-1) omega_n)."""
    return 2.0 ** (3 - n) * omega(n - 1) / ((2 * m_index(n) - 1) * omega(n))


def constant_even(n: int) -> float:
    """C in L_even,i: 2^(4-n) omega_(n-1) / ((2m-1) omega_(n+1))."""
    return 2.0 ** (4 - n) * omega(n - 1) / ((2 * m_index(n) - 1) * omega(n + 1))


def constant_even_centre(n: int) -> float:
    return 2 * omega(n) / ((2 * m_index(n) - 1) * omega(n + 1))


# ---------------------------------------------------------------- quadrature

def _smooth(u):
    """Endpoint-clustering map u -> u^2 (3 - 2u) and its derivative."""
    return u * u * (3 - 2 * u), 6 * u * (1 - u)


def graded_rule(q: int) -> tuple[np.ndarray, np.ndarray]:
    """q-point rule on [0, 1] clustered at both ends (sqrt endpoint behaviour)."""
    x, w = _leggauss(q)
    u = 0.5 * (x + 1)
    s, ds = _smooth(u)
    return s, 0.5 * w * ds


def graded_panels(lo, hi, breaks, q: int):
    """Graded nodes on [lo, hi] split at per-row breakpoints.

    lo, hi: shape (N,); breaks: shape (N, B).  Returns (N, (B+1) q) arrays.
    """
    lo = np.asarray(lo, dtype=float)[:, None]
    hi = np.asarray(hi, dtype=float)[:, None]
    br = np.clip(np.asarray(breaks, dtype=float).reshape(lo.shape[0], -1), lo, hi)
    pts = np.sort(np.concatenate([lo, br, hi], axis=1), axis=1)
    a, b = pts[:, :-1, None], pts[:, 1:, None]
    s, w = graded_rule(q)
    nodes = a + (b - a) * s
    weights = (b - a) * w
    return nodes.reshape(lo.shape[0], -1), weights.reshape(lo.shape[0], -1)


# ------------------------------------------------------------------- kernels

def j_even(lam, c, r, n: int, q: int = 16):
    """int rho h(lam, rho, r) / sqrt(c^2 - rho^2) over |lam-r| <= rho <= min(lam+r, c).

    Computed in x = rho^2 with a sine-squared substitution which absorbs the
    inverse square root (part 1, lam >= c - r) or both endpoint factors of h
    (part 2, lam < c - r).
    """
    lam, c, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, c, r)))
    e = (n - 3) / 2
    x1 = (lam - r) ** 2
    d = 4 * lam * r  # x2 - x1
    c2 = c * c
    out = np.zeros(lam.shape)
    s, w = graded_rule(q)
    th = 0.5 * math.pi * s
    wt = 0.5 * math.pi * w
    sn2 = np.sin(th) ** 2
    part2 = (x1 + d <= c2) & (d > 0)
    part1 = (~part2) & (x1 < c2)
    if np.any(part2):
        D, X1, C2 = d[part2, None], x1[part2, None], c2[part2, None]
        den = np.sqrt(np.maximum(C2 - X1 - D * sn2, 0.0))
        tri = (sn2 * (1 - sn2)) ** (e + 0.5)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = np.where(den > 0, tri / den, 0.0)
        out[part2] = D[:, 0] ** (2 * e + 1) * (vals @ wt)
    if np.any(part1):
        D, X1, C2 = d[part1, None], x1[part1, None], c2[part1, None]
        span = C2 - X1
        rem = np.maximum(D - span * sn2, 0.0)
        vals = np.sin(th) ** (2 * e + 1) * rem ** e
        out[part1] = span[:, 0] ** (e + 0.5) * (vals @ wt)
    return out


def kernel_odd(lam, c, r, n: int):
    """C r^(2-n) c^(3-n) lam h(lam, c, r) on |c - r| <= lam <= c + r, r > 0."""
    lam, c, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, c, r)))
    inside = (lam >= np.abs(c - r)) & (lam <= c + r) & (c > 0)
    out = np.zeros(lam.shape)
    L, Cc, R = lam[inside], c[inside], r[inside]
    out[inside] = (constant_odd(n) * R ** (2.0 - n) * Cc ** (3.0 - n) * L
                   * kernel_h_unchecked(L, Cc, R, n))
    return out


def kernel_even(lam, c, r, n: int, q: int = 16):
    """C r^(2-n) c^(2-n) lam J(lam, c, r), r > 0."""
    lam, c, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, c, r)))
    inside = (lam + c >= r) & (lam <= c + r) & (c > 0)
    out = np.zeros(lam.shape)
    L, Cc, R = lam[inside], c[inside], r[inside]
    out[inside] = constant_even(n) * R ** (2.0 - n) * Cc ** (2.0 - n) * L * j_even(L, Cc, R, n, q)
    return out


def kernel_even_centre(lam, c, n: int):
    """r = 0 kernel c0 lam^(n-1) c^(2-n) / sqrt(c^2 - lam^2) on 0 <= lam < c."""
    lam, c = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(c, dtype=float))
    inside = (lam >= 0) & (lam < c)
    out = np.zeros(lam.shape)
    L, Cc = lam[inside], c[inside]
    out[inside] = (constant_even_centre(n) * L ** (n - 1) * Cc ** (2.0 - n)
                   / np.sqrt((Cc - L) * (Cc + L)))
    return out


# ------------------------------------------------------------ grid functions

_BIN_MAGIC = b"SLGF"


@dataclass
class GridFunction:
    """U(r_i, t_j) on a uniform lattice with dr = dt."""

    r_nodes: np.ndarray
    t_nodes: np.ndarray
    values: np.ndarray
    k: float
    support_flag: np.ndarray = field(default=None)

    def __post_init__(self):
        self.r_nodes = np.asarray(self.r_nodes, dtype=float)
        self.t_nodes = np.asarray(self.t_nodes, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.r_nodes.size, self.t_nodes.size):
            raise ValueError("values must have shape (len(r_nodes), len(t_nodes))")
        if self.support_flag is None:
            self.support_flag = self.r_nodes[:, None] <= self.t_nodes[None, :] + self.k + 1e-12 * self.k
        if self.r_nodes.size > 1 and self.t_nodes.size > 1:
            dr, dt = np.diff(self.r_nodes), np.diff(self.t_nodes)
            if not (np.allclose(dr, dr[0], rtol=1e-9) and np.allclose(dt, dr[0], rtol=1e-9)):
                raise ValueError("lattice must be uniform with dr = dt")
        if not np.all(np.isfinite(self.values[self.support_flag])):
            raise ValueError("non-finite values inside the light-cone collar")

    @property
    def delta(self) -> float:
        return float(self.r_nodes[1] - self.r_nodes[0]) if self.r_nodes.size > 1 else 1.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @classmethod
    def lattice(cls, delta: float, n_r: int, n_t: int, k: float, values=None) -> "GridFunction":
        r = delta * np.arange(n_r)
        t = delta * np.arange(n_t)
        vals = np.zeros((n_r, n_t)) if values is None else values
        return cls(r, t, vals, k)

    @classmethod
    def from_function(cls, fn: Psi, delta: float, n_r: int, n_t: int, k: float) -> "GridFunction":
        g = cls.lattice(delta, n_r, n_t, k)
        R, T = np.meshgrid(g.r_nodes, g.t_nodes, indexing="ij")
        g.values = np.where(g.support_flag, fn(R, T), 0.0)
        return g

    def with_values(self, values) -> "GridFunction":
        return GridFunction(self.r_nodes, self.t_nodes, values, self.k, self.support_flag)

    def masked(self) -> np.ndarray:
        return np.where(self.support_flag, self.values, 0.0)

    def __call__(self, lam, tau):
        """Bilinear interpolation, exact zero outside the lattice and the collar."""
        lam, tau = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(tau, dtype=float))
        h = self.delta
        x, y = lam / h, tau / h
        i = np.clip(np.floor(x).astype(int), 0, self.r_nodes.size - 2)
        j = np.clip(np.floor(y).astype(int), 0, self.t_nodes.size - 2)
        fx, fy = x - i, y - j
        V = self.masked()
        out = ((1 - fx) * (1 - fy) * V[i, j] + fx * (1 - fy) * V[i + 1, j]
               + (1 - fx) * fy * V[i, j + 1] + fx * fy * V[i + 1, j + 1])
        outside = ((lam < 0) | (tau < 0) | (lam > self.r_nodes[-1] + 1e-12 * h)
                   | (tau > self.t_nodes[-1] + 1e-12 * h) | (lam > tau + self.k))
        return np.where(outside, 0.0, out)

    # serialization
    def to_csv(self, path) -> None:
        R, T = np.meshgrid(self.r_nodes, self.t_nodes, indexing="ij")
        np.savetxt(path, np.column_stack([R.ravel(), T.ravel(), self.values.ravel()]),
                   delimiter=",", header="r,t,value", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path, k: float) -> "GridFunction":
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        r = np.unique(data[:, 0])
        t = np.unique(data[:, 1])
        vals = np.zeros((r.size, t.size))
        vals[np.searchsorted(r, data[:, 0]), np.searchsorted(t, data[:, 1])] = data[:, 2]
        return cls(r, t, vals, k)

    def to_binary(self, path) -> None:
        n_r, n_t = self.shape
        with open(path, "wb") as fh:
            fh.write(_BIN_MAGIC)
            fh.write(struct.pack("<qqdd", n_r, n_t, self.k, self.delta))
            fh.write(np.ascontiguousarray(self.values, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path) -> "GridFunction":
        raw = Path(path).read_bytes()
        if raw[:4] != _BIN_MAGIC:
            raise ValueError("not a grid-function dump")
        n_r, n_t, k, delta = struct.unpack_from("<qqdd", raw, 4)
        vals = np.frombuffer(raw, dtype="<f8", offset=4 + 32).reshape(n_r, n_t)
        return cls.lattice(delta, n_r, n_t, k, vals.copy())


# ---------------------------------------------------------- point evaluation

def _as_psi(psi) -> tuple[Psi, float | None]:
    if isinstance(psi, GridFunction):
        return psi, psi.k
    return psi, None


_R_REL = 1e-10
_T_TINY = 1e-60


def _rescaled(fn, k, t):
    """For tiny t use homogeneity: L(psi)(r, t) = s^2 L(psi_s)(r/s, t/s), psi_s = psi(s., s.)."""
    s = t
    return (lambda lam, tau: fn(s * np.asarray(lam, float), s * np.asarray(tau, float))), \
        (None if k is None else k / s), s


def L_odd(psi, r: float, t: float, n: int, q: int = 24, k: float | None = None) -> float:
    """L(psi)(r, t) for odd n by graded Gauss quadrature in (c, lambda), c = t - tau.

    psi is a callable psi(lam, tau) or a GridFunction (bilinear interpolation).
    If psi vanishes for lam > tau + k, pass k so the panels split there.
    """
    if n % 2 == 0 or n < 3:
        raise ValueError("L_odd needs odd n >= 3")
    fn, kk = _as_psi(psi)
    k = kk if k is None else k
    if t <= 0:
        return 0.0
    if t < _T_TINY:
        g, ks, sc = _rescaled(fn, k, t)
        return sc * sc * L_odd(g, r / sc, 1.0, n, q, k=ks)
    m = m_index(n)
    if r <= _R_REL * t:
        cb = [] if k is None else [0.5 * (t + k)]
        c, wc = graded_panels([0.0], [t], [cb], q)
        c, wc = c[0], wc[0]
        return float(np.sum(wc * c * fn(c, t - c)) / (2 * m - 1))
    cb = [min(r, t)]
    if k is not None:
        cb += [0.5 * (t + k - r), 0.5 * (t + k + r)]
    c, wc = graded_panels([0.0], [t], [cb], q)
    c, wc = c[0], wc[0]
    lo, hi = np.abs(c - r), c + r
    lb = np.full((c.size, 1), np.inf) if k is None else (t + k - c)[:, None]
    lam, wl = graded_panels(lo, hi, lb, q)
    K = kernel_odd(lam, c[:, None], r, n)
    vals = K * fn(lam, (t - c)[:, None])
    return float(np.sum(wc * np.sum(wl * vals, axis=1)))


def L_even(psi, r: float, t: float, n: int, q: int = 24, q_theta: int = 16,
           k: float | None = None) -> tuple[float, float]:
    """(L_even,1, L_even,2)(psi)(r, t) for even n.

    Part 2 collects lam < c - r, where the rho-range is the full
    [|lam - r|, lam + r]; part 1 the rest, where rho is cut at c.
    """
    if n % 2 or n < 4:
        raise ValueError("L_even needs even n >= 4")
    fn, kk = _as_psi(psi)
    k = kk if k is None else k
    if t <= 0:
        return 0.0, 0.0
    if t < _T_TINY:
        g, ks, sc = _rescaled(fn, k, t)
        p1, p2 = L_even(g, r / sc, 1.0, n, q, q_theta, k=ks)
        return sc * sc * p1, sc * sc * p2
    if r <= _R_REL * t:
        # lam = c sin(theta) removes the inverse square root
        cb = [] if k is None else [0.5 * (t + k)]
        c, wc = graded_panels([0.0], [t], [cb], q)
        c, wc = c[0], wc[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tb = np.arcsin(np.clip((t + k - c) / c, -1.0, 1.0))[:, None] if k is not None \
                else np.full((c.size, 1), 0.5 * math.pi)
        th, wth = graded_panels(np.zeros(c.size), np.full(c.size, 0.5 * math.pi), tb, q)
        lam = c[:, None] * np.sin(th)
        vals = lam ** (n - 1) * c[:, None] ** (2.0 - n) * fn(lam, (t - c)[:, None])
        part2 = constant_even_centre(n) * float(np.sum(wc * np.sum(wth * vals, axis=1)))
        return 0.0, part2
    cb = [min(r, t)]
    if k is not None:
        cb += [0.5 * (t + k - r), 0.5 * (t + k + r)]
    c, wc = graded_panels([0.0], [t], [cb], q)
    c, wc = c[0], wc[0]
    lb = np.full((c.size, 1), np.inf) if k is None else (t + k - c)[:, None]
    tau = (t - c)[:, None]
    # part 1: |c - r| <= lam <= c + r
    lam, wl = graded_panels(np.abs(c - r), c + r, lb, q)
    v1 = kernel_even(lam, c[:, None], r, n, q_theta) * fn(lam, tau)
    p1 = float(np.sum(wc * np.sum(wl * v1, axis=1)))
    # part 2: 0 <= lam < c - r
    hi2 = np.maximum(c - r, 0.0)
    lam, wl = graded_panels(np.zeros(c.size), hi2, lb, q)
    v2 = kernel_even(lam, c[:, None], r, n, q_theta) * fn(lam, tau)
    p2 = float(np.sum(wc * np.sum(wl * v2, axis=1)))
    return p1, p2


def L_point(psi, r: float, t: float, n: int, q: int = 24, k: float | None = None) -> float:
    if n % 2:
        return L_odd(psi, r, t, n, q, k=k)
    return float(sum(L_even(psi, r, t, n, q, k=k)))


# ------------------------------------------------------------ lattice stencil

STENCIL_VERSION = 1


def _triangle_rule(P0, P1, P2, q: int):
    """Duffy rule collapsed at P0, graded toward the edge P1-P2.

    P*: arrays of shape (T, 2).  Returns points (T, q*q, 2) and weights (T, q*q).
    Grading v = 1 - (1-w)^2 makes inverse-square-root behaviour at the edge
    smooth in w; the Duffy factor v absorbs homogeneous behaviour at P0.
    """
    x, wg = _leggauss(q)
    u = 0.5 * (x + 1)
    wu = 0.5 * wg
    sig, dsig = _smooth(u)
    v = 1 - (1 - u) ** 2
    dv = 2 * (1 - u)
    S, V = np.meshgrid(sig, v, indexing="ij")
    W = np.outer(wu * dsig, wu * dv * v)
    S, V, W = S.ravel(), V.ravel(), W.ravel()
    e1 = P1 - P0
    e2 = P2 - P1
    area2 = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = P0[:, None, :] + V[None, :, None] * (e1[:, None, :] + S[None, :, None] * e2[:, None, :])
    return pts, area2[:, None] * W[None, :]


def _cell_triangles(a, s, anti):
    """Split cells [a,a+1]x[s,s+1] along the main or anti diagonal.

    Returns (P0, P1, P2, cell index) for both halves; P0 is the vertex off
    the splitting diagonal.
    """
    A = np.stack([a, s], axis=1).astype(float)
    e_l = np.array([1.0, 0.0])
    e_c = np.array([0.0, 1.0])
    main = ~anti
    P0 = np.concatenate([
        np.where(main[:, None], A + e_l, A),               # lower-right / lower-left
        np.where(main[:, None], A + e_c, A + e_l + e_c),   # upper-left / upper-right
    ])
    P1 = np.concatenate([
        np.where(main[:, None], A, A + e_c),
        np.where(main[:, None], A, A + e_c),
    ])
    P2 = np.concatenate([
        np.where(main[:, None], A + e_l + e_c, A + e_l),
        np.where(main[:, None], A + e_l + e_c, A + e_l),
    ])
    idx = np.concatenate([np.arange(a.size), np.arange(a.size)])
    return P0, P1, P2, idx


def _in_domain(lam, c, i: int, n: int):
    if i == 0:
        return lam < c if n % 2 == 0 else np.zeros(lam.shape, dtype=bool)
    upper = lam <= c + i
    lower = lam + c >= i
    if n % 2:
        return upper & lower & (lam >= c - i)
    return upper & lower


def _stencil_row(i: int, n: int, n_r: int, n_t: int, q: int, q_theta: int):
    """Corner weights (up, low) of shape (n_r, n_t - 1) for output radius i."""
    up = np.zeros((n_r, n_t - 1))
    low = np.zeros((n_r, n_t - 1))
    m = m_index(n)
    if i == 0 and n % 2:
        # centre: line integral along lam = c with the bilinear trace of psi
        x, wg = _leggauss(max(q, 4))
        u, wu = 0.5 * (x + 1), 0.5 * wg
        s = np.arange(min(n_r - 1, n_t - 1))
        cval = s[:, None] + u[None, :]
        base = cval * wu / (2 * m - 1)
        up[s, s] += base @ ((1 - u) ** 2)
        up[s + 1, s] += base @ (u * (1 - u))
        low[s, s] += base @ (u * (1 - u))
        low[s + 1, s] += base @ (u * u)
        return up, low
    A, S = np.meshgrid(np.arange(n_r - 1), np.arange(n_t - 1), indexing="ij")
    A, S = A.ravel(), S.ravel()
    diff, tot = A - S, A + S
    keep = (diff <= i + 1) & (tot >= i - 2)
    if n % 2:
        keep &= diff >= -i - 1
    A, S = A[keep], S[keep]
    anti = (A + S + 1 == i) & (i > 0)
    P0, P1, P2, idx = _cell_triangles(A, S, anti)
    cen = (P0 + P1 + P2) / 3
    ok = _in_domain(cen[:, 0], cen[:, 1], i, n)
    P0, P1, P2, idx = P0[ok], P1[ok], P2[ok], idx[ok]
    chunk = 4096
    for lo in range(0, idx.size, chunk):
        sl = slice(lo, lo + chunk)
        pts, w = _triangle_rule(P0[sl], P1[sl], P2[sl], q)
        lam, c = pts[..., 0], pts[..., 1]
        if n % 2:
            K = kernel_odd(lam, c, float(i), n)
        elif i == 0:
            K = kernel_even_centre(lam, c, n)
        else:
            K = kernel_even(lam, c, float(i), n, q_theta)
        a, s = A[idx[sl]], S[idx[sl]]
        fx = lam - a[:, None]
        fy = c - s[:, None]
        wk = w * K
        np.add.at(up, (a, s), np.sum(wk * (1 - fx) * (1 - fy), axis=1))
        np.add.at(up, (a + 1, s), np.sum(wk * fx * (1 - fy), axis=1))
        np.add.at(low, (a, s), np.sum(wk * (1 - fx) * fy, axis=1))
        np.add.at(low, (a + 1, s), np.sum(wk * fx * fy, axis=1))
    return up, low


@dataclass
class Stencil:
    """Translation-invariant weights of the lattice operator in units delta = 1.

    full[i, a, d] multiplies psi[a, j - d] for 0 <= d < j, and
    low[i, a, j - 1] multiplies psi[a, 0].
    """

    n: int
    n_r: int
    n_t: int
    full: np.ndarray
    low: np.ndarray
    q: int

    def apply(self, psi_values: np.ndarray, delta: float) -> np.ndarray:
        psi = np.asarray(psi_values, dtype=float)
        n_r, n_t = psi.shape
        if n_r > self.n_r or n_t > self.n_t:
            raise ValueError("grid larger than the stencil")
        full = self.full[:n_r, :n_r, :n_t - 1]
        low = self.low[:n_r, :n_r, :n_t - 1]
        out = np.zeros((n_r, n_t))
        for d in range(n_t - 1):
            out[:, d + 1:] += full[:, :, d] @ psi[:, 1:n_t - d]
        out[:, 1:] += np.einsum("iad,a->id", low, psi[:, 0])
        return out * delta * delta


def _cache_dir() -> Path | None:
    root = os.environ.get("STRAUSS_LAB_CACHE")
    if root == "":
        return None
    path = Path(root) if root else Path.home() / ".cache" / "strauss_lab"
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError:
        return None
    return path


_STENCILS: dict[tuple, Stencil] = {}


def build_stencil(n: int, n_r: int, n_t: int, q: int = 6, q_theta: int = 12,
                  use_cache: bool = True) -> Stencil:
    """Weights of L on the uniform lattice, cached in memory and on disk."""
    key = (n, n_r, n_t, q, q_theta, STENCIL_VERSION)
    if key in _STENCILS:
        return _STENCILS[key]
    # a larger cached stencil serves smaller lattices (the weights are nested)
    for kk, st in _STENCILS.items():
        if kk[0] == n and kk[3:] == key[3:] and kk[1] >= n_r and kk[2] >= n_t:
            return st
    cache = _cache_dir() if use_cache else None
    fname = None
    if cache is not None:
        tag = hashlib.sha1(repr(key).encode()).hexdigest()[:12]
        fname = cache / f"stencil_n{n}_{n_r}x{n_t}_{tag}.npz"
        if fname.exists():
            try:
                with np.load(fname) as z:
                    st = Stencil(n, n_r, n_t, z["full"], z["low"], q)
                _STENCILS[key] = st
                return st
            except (OSError, KeyError, ValueError):
                log.warning("discarding unreadable stencil cache %s", fname)
    up = np.zeros((n_r, n_r, n_t - 1))
    low = np.zeros((n_r, n_r, n_t - 1))
    for i in range(n_r):
        up[i], low[i] = _stencil_row(i, n, n_r, n_t, q, q_theta)
    full = up
    full[:, :, 1:] += low[:, :, :-1]
    st = Stencil(n, n_r, n_t, full, low, q)
    if fname is not None:
        tmp = fname.with_suffix(".tmp.npz")
        np.savez(tmp, full=full, low=low)
        os.replace(tmp, fname)
    _STENCILS[key] = st
    return st


def L_apply(psi: GridFunction, n: int, q: int = 6, stencil: Stencil | None = None) -> GridFunction:
    """L on every lattice node; the output is zeroed outside the collar r <= t + k."""
    n_r, n_t = psi.shape
    if n_t < 2:
        return psi.with_values(np.zeros(psi.shape))
    st = stencil or build_stencil(n, n_r, n_t, q)
    out = st.apply(psi.masked(), psi.delta)
    return psi.with_values(np.where(psi.support_flag, out, 0.0))


# ----------------------------------------------------------- basic estimate

def basic_estimate_psi(spec, a1: float, a2: float, a3: float) -> Psi:
    """tau_+^(-(n-1)p/2 + a1) tau_-^a2 (log 4 tau_+/tau_-)^a3, cut to lam <= tau + k."""
    n, p, k = spec.n, spec.p, spec.k

    def psi(lam, tau):
        lam, tau = np.broadcast_arrays(np.asarray(lam, dtype=float), np.asarray(tau, dtype=float))
        inside = lam <= tau + k
        tp = (tau + lam + 2 * k) / k
        tm = np.where(inside, (tau - lam + 2 * k) / k, 1.0)
        val = tp ** (-(n - 1) * p / 2 + a1) * tm ** a2 * np.log(4 * tp / tm) ** a3
        return np.where(inside, val, 0.0)

    return psi


@dataclass
class BasicEstimateReport:
    constant: float
    ratios: np.ndarray
    samples: np.ndarray

    @property
    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)))


def estimate_samples(T: float, k: float, count: int = 100, seed: int = 0) -> np.ndarray:
    """Deterministic (r, t) sample of {0 < t <= T, 0 <= r <= t + k}."""
    from scipy.stats import qmc

    u = qmc.Halton(d=2, scramble=False, seed=seed).random(count + 1)[1:]
    t = T * u[:, 0]
    r = (t + k) * u[:, 1]
    return np.column_stack([r, t])


def basic_estimate_check(spec, a1: float, a2: float, a3: float, T: float, samples=None,
                         q: int = 24, delta: float | None = None) -> BasicEstimateReport:
    """Sample supremum of L(psi) / (k^2 w^-1 X^a1 E(T)) for the basic-estimate weight psi."""
    from .exponents import E_general, default_delta, log_ratio, weight_w

    if a1 < 0 or a3 < 0:
        raise ValueError("a1 and a3 must be nonnegative")
    k = spec.k
    delta = default_delta(spec.p, a2, a3) if delta is None else delta
    pts = estimate_samples(T, k) if samples is None else np.asarray(samples, dtype=float).reshape(-1, 2)
    psi = basic_estimate_psi(spec, a1, a2, a3)
    X = log_ratio(T, k)
    E = E_general(T, k, a2, a3, delta)[0]
    ratios = np.zeros(len(pts))
    for i, (r, t) in enumerate(pts):
        if t <= 0:
            continue
        lhs = L_point(psi, float(r), float(t), spec.n, q=q, k=k)
        rhs = k * k * X ** a1 * E / weight_w(r, t, spec)
        ratios[i] = lhs / rhs
    return BasicEstimateReport(float(np.max(ratios, initial=0.0)), ratios, pts)
