"""Orthogonal polynomials, the spherical-mean kernel h and singular quadrature."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.stats import qmc


def legendre_P(m: int, z):
    """P_m(z) by the three-term recurrence; vectorised over z."""
    if m < 0:
        raise ValueError("degree must be nonnegative")
    z = np.asarray(z, dtype=float)
    p_prev, p = np.ones_like(z), z.copy()
    if m == 0:
        return p_prev[()] if z.ndim == 0 else p_prev
    for j in range(1, m):
        p_prev, p = p, ((2 * j + 1) * z * p - j * p_prev) / (j + 1)
    return p[()] if z.ndim == 0 else p


def chebyshev_T(m: int, z):
    """T_m(z) by T_{m+1} = 2 z T_m - T_{m-1}; vectorised over z."""
    if m < 0:
        raise ValueError("degree must be nonnegative")
    z = np.asarray(z, dtype=float)
    t_prev, t = np.ones_like(z), z.copy()
    if m == 0:
        return t_prev[()] if z.ndim == 0 else t_prev
    for _ in range(1, m):
        t_prev, t = t, 2 * z * t - t_prev
    return t[()] if z.ndim == 0 else t


@dataclass(frozen=True)
class KernelParams:
    n: int

    @property
    def exponent(self) -> float:
        return (self.n - 3) / 2


def _frac_power(x, e: float):
    """x**e for x >= 0 with 0**0 = 1 and an exact 0 at x = 0 when e > 0."""
    x = np.asarray(x, dtype=float)
    if e == 0:
        return np.ones_like(x)
    if float(e).is_integer():
        return x ** int(e)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(e * np.log(x[pos]))
    return out


def kernel_h_unchecked(lam, rho, r, n: int):
    """h without the support check; factors clipped at zero."""
    lam = np.asarray(lam, dtype=float)
    a = np.maximum(lam * lam - (rho - r) ** 2, 0.0)
    b = np.maximum((rho + r) ** 2 - lam * lam, 0.0)
    e = (n - 3) / 2
    return _frac_power(a, e) * _frac_power(b, e)


def kernel_h(lam, rho, r, n: int):
    """{lam^2-(rho-r)^2}^((n-3)/2) {(rho+r)^2-lam^2}^((n-3)/2) on |rho-r| <= lam <= rho+r."""
    lam_a, rho_a, r_a = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, rho, r)))
    slack = 1e-12 * np.maximum(1.0, rho_a + r_a)
    if np.any(lam_a < np.abs(rho_a - r_a) - slack) or np.any(lam_a > rho_a + r_a + slack):
        raise ValueError("kernel_h called outside |rho - r| <= lam <= rho + r")
    h = kernel_h_unchecked(lam_a, rho_a, r_a, n)
    return h[()] if h.ndim == 0 else h


def support_swap_holds(lam, rho, r) -> np.ndarray:
    """|rho-r| <= lam <= rho+r implies |lam-r| <= rho <= lam+r (triangle symmetry)."""
    lam, rho, r = (np.asarray(v, dtype=float) for v in (lam, rho, r))
    tol = 1e-12 * (1 + lam + rho + r)
    premise = (np.abs(rho - r) <= lam) & (lam <= rho + r)
    concl = (np.abs(lam - r) <= rho + tol) & (rho <= lam + r + tol)
    return ~premise | concl


@dataclass
class KernelBoundsReport:
    n: int
    samples: int
    constants: tuple[float, float, float]
    min_ratio_constant: float

    @property
    def finite(self) -> bool:
        return all(math.isfinite(c) for c in self.constants)


def admissible_triples(count: int, scale: float = 1.0, seed: int = 0) -> tuple[np.ndarray, ...]:
    """Deterministic Halton sample of admissible (lam, rho, r)."""
    u = qmc.Halton(d=3, scramble=False, seed=seed).random(count + 1)[1:]
    rho = scale * u[:, 0]
    r = scale * u[:, 1]
    lo, hi = np.abs(rho - r), rho + r
    lam = lo + u[:, 2] * (hi - lo)
    return lam, rho, r


def kernel_h_bounds_check(lam=None, rho=None, r=None, n: int = 5, count: int = 10_000) -> KernelBoundsReport:
    """Smallest constants C_i with h <= C_i * majorant_i over the sample.

    The majorants are r^(n-3) lam^(n-3), rho^(n-3) r^((n-3)/2) lam^((n-3)/2)
    and r^(n-3) rho^(n-3).  Without explicit points a 10^4-point Halton
    sample of admissible triples is used.
    """
    if lam is None:
        lam, rho, r = admissible_triples(count)
    lam, rho, r = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (lam, rho, r)))
    h = kernel_h(lam, rho, r, n)
    e = n - 3
    majorants = (
        r ** e * lam ** e,
        rho ** e * r ** (e / 2) * lam ** (e / 2),
        r ** e * rho ** e,
    )
    consts = []
    for m in majorants:
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(h > 0, h / m, 0.0)
        consts.append(float(np.max(ratio)) if ratio.size else 0.0)
    best = np.minimum.reduce([c * m for c, m in zip(consts, majorants)])
    return KernelBoundsReport(n, int(h.size), tuple(consts), float(np.max(h - best, initial=0.0)))


class RuleKind(str, enum.Enum):
    SMOOTH_GAUSS = "smooth"
    SQRT_ENDPOINT_SINGULAR = "sqrt-singular"


@dataclass(frozen=True)
class QuadratureRule:
    kind: RuleKind
    nodes: np.ndarray
    weights: np.ndarray
    order: int

    def __call__(self, f) -> float:
        return float(np.dot(self.weights, f(self.nodes)))


@lru_cache(maxsize=64)
def _leggauss(m: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(m)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gauss_rule(m: int, lo: float = -1.0, hi: float = 1.0) -> QuadratureRule:
    x, w = _leggauss(m)
    half = 0.5 * (hi - lo)
    return QuadratureRule(RuleKind.SMOOTH_GAUSS, lo + half * (x + 1), half * w, 2 * m)


def sqrt_singular_rule(m: int, lo: float, hi: float, c: float) -> QuadratureRule:
    """Nodes/weights for int_lo^hi f(rho) rho / sqrt(c^2 - rho^2) d rho."""
    if m < 2:
        raise ValueError("need at least two nodes")
    if hi > c * (1 + 1e-14):
        raise ValueError("upper limit exceeds c: integrand undefined")
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    th0 = math.asin(min(max(lo / c, -1.0), 1.0))
    th1 = math.asin(min(hi / c, 1.0))
    x, w = _leggauss(m)
    half = 0.5 * (th1 - th0)
    theta = th0 + half * (x + 1)
    s = np.sin(theta)
    return QuadratureRule(RuleKind.SQRT_ENDPOINT_SINGULAR, c * s, half * w * c * s, 2 * m)


def integrate_sqrt_singular(f, lo: float, hi: float, c: float, m: int = 32) -> float:
    """int_lo^hi f(rho) rho/sqrt(c^2-rho^2) d rho via rho = c sin(theta).

    In the theta variable the weight becomes c sin(theta) d theta, so the
    m-node Gauss rule sees a smooth integrand whenever f is smooth.
    """
    if c <= 0:
        if hi - lo == 0:
            return 0.0
        raise ValueError("c must be positive")
    return sqrt_singular_rule(m, lo, hi, c)(f)
