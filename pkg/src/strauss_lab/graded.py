"""L on a graded lattice in characteristic coordinates alpha = t + r, beta = t - r.

A single node set G serves both axes: uniform with spacing h on [-k, k] and
geometric beyond, up to 2 T_max + k.  Every line on which the kernel of L is
singular or switches form (alpha' = alpha, beta' = beta, alpha' = beta) and
the boundaries r = 0, t = 0 of the domain are cell edges or cell diagonals,
so a tensor rule clustered at the cell edges sees a smooth integrand.

The operator is stored as a dense matrix acting on the vector of node values.
Rows are nonnegative combinations of source nodes with alpha' <= alpha and
beta' <= beta, so positivity and causality are structural.  Long horizons
cost O(log T_max) nodes per axis instead of O(T_max).
"""

from __future__ import annotations

import hashlib
import logging
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np

from .duhamel import (_cache_dir, constant_even, constant_even_centre, constant_odd,
                      graded_rule, m_index)

log = logging.getLogger(__name__)

GRADED_VERSION = 1


def graded_nodes(k: float, h: float, ratio: float, t_max: float) -> np.ndarray:
    """Symmetric uniform nodes on [-k, k], then spacings growing by `ratio`."""
    m = int(round(k / h))
    if m < 1 or abs(m * h - k) > 1e-9 * k:
        raise ValueError("k must be an integer multiple of h")
    if ratio < 1:
        raise ValueError("ratio must be >= 1")
    nodes = list(np.linspace(-k, k, 2 * m + 1))
    top = 2 * t_max + k
    step = h
    while nodes[-1] < top * (1 - 1e-12):
        step *= ratio
        nodes.append(nodes[-1] + step)
    return np.array(nodes)


@dataclass
class GradedLattice:
    """Active nodes (alpha_i, beta_j): beta >= -k, alpha >= beta, t >= 0, t <= t_max."""

    g: np.ndarray
    k: float
    t_max: float

    def __post_init__(self):
        g = self.g
        ng = g.size
        tol = 1e-12 * max(1.0, g[-1])
        A, B = np.meshgrid(np.arange(ng), np.arange(ng), indexing="ij")
        a, b = g[A], g[B]
        active = (b >= -self.k - tol) & (a >= b - tol) & (a + b >= -tol) & (0.5 * (a + b) <= self.t_max + tol)
        self.node_id = np.full((ng, ng), -1, dtype=np.int64)
        ia, ib = np.nonzero(active)
        self.node_id[ia, ib] = np.arange(ia.size)
        self.ia, self.ib = ia, ib
        alpha, beta = g[ia], g[ib]
        self.r = np.maximum(0.5 * (alpha - beta), 0.0)
        self.t = np.maximum(0.5 * (alpha + beta), 0.0)
        self.r[ia == ib] = 0.0

    @classmethod
    def build(cls, k: float, t_max: float, h: float | None = None, ratio: float = 1.15) -> "GradedLattice":
        h = k / 16 if h is None else h
        return cls(graded_nodes(k, h, ratio, t_max), k, t_max)

    @property
    def size(self) -> int:
        return self.ia.size

    @property
    def h(self) -> float:
        return float(self.g[1] - self.g[0])

    def sample(self, fn) -> np.ndarray:
        """Node values of fn(r, t)."""
        return np.asarray(fn(self.r, self.t), dtype=float)

    def key(self) -> str:
        raw = np.round(self.g, 12).tobytes() + repr((self.k, self.t_max)).encode()
        return hashlib.sha1(raw).hexdigest()[:16]


# ------------------------------------------------------------------ kernels

@numba.njit(cache=True)
def _j_even(lam, c, r, e, s_nodes, s_weights):
    x1 = (lam - r) ** 2
    d = 4.0 * lam * r
    c2 = c * c
    if d <= 0.0 or x1 >= c2:
        return 0.0
    acc = 0.0
    if x1 + d <= c2:
        for q in range(s_nodes.size):
            th = 0.5 * math.pi * s_nodes[q]
            sn2 = math.sin(th) ** 2
            den = c2 - x1 - d * sn2
            if den > 0.0:
                acc += 0.5 * math.pi * s_weights[q] * (sn2 * (1.0 - sn2)) ** (e + 0.5) / math.sqrt(den)
        return d ** (2.0 * e + 1.0) * acc
    span = c2 - x1
    for q in range(s_nodes.size):
        th = 0.5 * math.pi * s_nodes[q]
        sn = math.sin(th)
        rem = d - span * sn * sn
        if rem > 0.0:
            acc += 0.5 * math.pi * s_weights[q] * sn ** (2.0 * e + 1.0) * rem ** e
    return span ** (e + 0.5) * acc


@numba.njit(cache=True)
def _kernel(lam, c, r, n, const, s_nodes, s_weights):
    if c <= 0.0 or lam < 0.0:
        return 0.0
    e = 0.5 * (n - 3)
    if n % 2 == 1:
        if r <= 0.0 or lam < abs(c - r) or lam > c + r:
            return 0.0
        a = lam * lam - (c - r) ** 2
        b = (c + r) ** 2 - lam * lam
        if a <= 0.0 or b <= 0.0:
            h = 1.0 if e == 0.0 else 0.0
        else:
            h = (a * b) ** e
        return const * r ** (2.0 - n) * c ** (3.0 - n) * lam * h
    if r <= 0.0:
        if lam >= c:
            return 0.0
        return const * lam ** (n - 1) * c ** (2.0 - n) / math.sqrt((c - lam) * (c + lam))
    if lam + c < r or lam > c + r:
        return 0.0
    return const * r ** (2.0 - n) * c ** (2.0 - n) * lam * _j_even(lam, c, r, e, s_nodes, s_weights)


@numba.njit(cache=True)
def _assemble(g, node_id, ia, ib, k, n, m, c_main, c_centre, u, wu, s_nodes, s_weights, M):
    ng = g.size
    tol = 1e-12 * max(1.0, g[ng - 1])
    bmin = 0
    while g[bmin] < -k - tol:
        bmin += 1
    q = u.size
    odd = n % 2 == 1
    for o in range(ia.size):
        i = ia[o]
        j = ib[o]
        alpha = g[i]
        beta = g[j]
        t = 0.5 * (alpha + beta)
        r = 0.5 * (alpha - beta)
        if i == j:
            r = 0.0
        if t <= tol:
            continue
        if odd and i == j:
            # centre: (1/(2m-1)) int c psi(c, t - c) dc along alpha' = t
            for b in range(bmin, j):
                if g[b] < -t - tol:
                    continue
                n0 = node_id[i, b]
                n1 = node_id[i, b + 1]
                lo = g[b]
                hi = g[b + 1]
                for qq in range(q):
                    bp = lo + (hi - lo) * u[qq]
                    c = 0.5 * (t - bp)
                    w = 0.5 * (hi - lo) * wu[qq] * c / (2 * m - 1)
                    M[o, n0] += w * (1.0 - u[qq])
                    M[o, n1] += w * u[qq]
            continue
        const = c_centre if (not odd and i == j) else c_main
        rr = r
        a_lo = j if odd else 0
        for a in range(a_lo, i):
            for b in range(bmin, j):
                a0 = g[a]
                a1 = g[a + 1]
                b0 = g[b]
                b1 = g[b + 1]
                if a == b:
                    if a0 < -tol:
                        continue
                    kind = 1
                elif abs(a0 + b1) <= tol and b1 <= tol:
                    kind = 2
                elif a0 >= b1 - tol and a0 + b0 >= -tol:
                    kind = 0
                else:
                    continue
                if kind == 0:
                    v00 = node_id[a, b]
                    v10 = node_id[a + 1, b]
                    v01 = node_id[a, b + 1]
                    v11 = node_id[a + 1, b + 1]
                    for p1 in range(q):
                        x = a0 + (a1 - a0) * u[p1]
                        for p2 in range(q):
                            y = b0 + (b1 - b0) * u[p2]
                            lam = 0.5 * (x - y)
                            c = t - 0.5 * (x + y)
                            K = _kernel(lam, c, rr, n, const, s_nodes, s_weights)
                            if K == 0.0:
                                continue
                            w = 0.5 * (a1 - a0) * (b1 - b0) * wu[p1] * wu[p2] * K
                            fx = u[p1]
                            fy = u[p2]
                            M[o, v00] += w * (1 - fx) * (1 - fy)
                            M[o, v10] += w * fx * (1 - fy)
                            M[o, v01] += w * (1 - fx) * fy
                            M[o, v11] += w * fx * fy
                else:
                    # triangle P0, P1, P2 with P0 the vertex off the cut
                    if kind == 1:
                        # alpha' >= beta': (a1, b0) off the diagonal (a0,b0)-(a1,b1)
                        x0, y0, i0 = a1, b0, node_id[a + 1, b]
                        x1, y1, i1 = a0, b0, node_id[a, b]
                        x2, y2, i2 = a1, b1, node_id[a + 1, b + 1]
                    else:
                        # alpha' + beta' >= 0: (a1, b1) off the anti diagonal
                        x0, y0, i0 = a1, b1, node_id[a + 1, b + 1]
                        x1, y1, i1 = a1, b0, node_id[a + 1, b]
                        x2, y2, i2 = a0, b1, node_id[a, b + 1]
                    area2 = abs((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0))
                    for p1 in range(q):
                        s = u[p1]
                        for p2 in range(q):
                            v = u[p2]
                            # Duffy: P = P0 + v (P1 - P0) + v s (P2 - P1)
                            l1 = v * (1 - s)
                            l2 = v * s
                            l0 = 1 - v
                            x = l0 * x0 + l1 * x1 + l2 * x2
                            y = l0 * y0 + l1 * y1 + l2 * y2
                            lam = 0.5 * (x - y)
                            c = t - 0.5 * (x + y)
                            K = _kernel(lam, c, rr, n, const, s_nodes, s_weights)
                            if K == 0.0:
                                continue
                            w = 0.5 * area2 * wu[p1] * wu[p2] * v * K
                            M[o, i0] += w * l0
                            M[o, i1] += w * l1
                            M[o, i2] += w * l2


@dataclass
class GradedOperator:
    lattice: GradedLattice
    n: int
    matrix: np.ndarray
    q: int

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.matrix @ np.asarray(values, dtype=float)


_OPERATORS: dict[tuple, GradedOperator] = {}


def build_graded_operator(lat: GradedLattice, n: int, q: int = 4, q_theta: int = 10,
                          use_cache: bool = True) -> GradedOperator:
    """Assemble L on the graded lattice (memory and disk cached)."""
    if n < 3:
        raise ValueError("n must be >= 3")
    key = (lat.key(), n, q, q_theta, GRADED_VERSION)
    if key in _OPERATORS:
        return _OPERATORS[key]
    cache = _cache_dir() if use_cache else None
    fname = None
    if cache is not None:
        tag = hashlib.sha1(repr(key).encode()).hexdigest()[:12]
        fname = cache / f"graded_n{n}_{lat.size}_{tag}.npy"
        if fname.exists():
            try:
                op = GradedOperator(lat, n, np.load(fname), q)
                if op.matrix.shape == (lat.size, lat.size):
                    _OPERATORS[key] = op
                    return op
            except (OSError, ValueError):
                log.warning("discarding unreadable operator cache %s", fname)
    u, wu = graded_rule(q)
    s_nodes, s_weights = graded_rule(q_theta)
    m = m_index(n)
    c_main = constant_odd(n) if n % 2 else constant_even(n)
    c_centre = 0.0 if n % 2 else constant_even_centre(n)
    M = np.zeros((lat.size, lat.size))
    _assemble(lat.g, lat.node_id, lat.ia, lat.ib, float(lat.k), n, m, c_main, c_centre,
              u, wu, s_nodes, s_weights, M)
    op = GradedOperator(lat, n, M, q)
    if fname is not None:
        tmp = Path(str(fname) + ".tmp")
        with open(tmp, "wb") as fh:
            np.save(fh, M)
        os.replace(tmp, fname)
    _OPERATORS[key] = op
    return op


@dataclass
class GradedFunction:
    """Node values on a GradedLattice; every active node lies in the collar r <= t + k."""

    lattice: GradedLattice
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.lattice.size,):
            raise ValueError("values must have one entry per lattice node")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("non-finite node values")

    @property
    def r(self) -> np.ndarray:
        return self.lattice.r

    @property
    def t(self) -> np.ndarray:
        return self.lattice.t

    @property
    def k(self) -> float:
        return self.lattice.k

    def with_values(self, values) -> "GradedFunction":
        return GradedFunction(self.lattice, values)
