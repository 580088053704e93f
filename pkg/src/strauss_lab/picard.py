"""Weighted L-infinity Picard iteration for U = L(F(U + U0)) and its diagnostics.

The iterates start from W_0 = 0 and W_l = L(F(W_{l-1} + U0)), which has the
same fixed point as the sequence started at U0.  Two discretisations of L
are available: the uniform lattice stencil from `duhamel` and the graded
characteristic lattice from `graded`; the latter reaches long horizons.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .duhamel import GridFunction, build_stencil
from .exponents import (D_of_T, E_nu, E_nu_a, F_nu, Nonlinearity, ProblemSpec,
                        Criticality, Regime, criticality, default_delta, gamma,
                        tau_minus, tau_plus, weight_regime, weight_w)
from .graded import GradedFunction, GradedLattice, build_graded_operator

CLIP = 1e50


def F_scalar(s, spec: ProblemSpec):
    s = np.asarray(s, dtype=float)
    if spec.nonlinearity == Nonlinearity.SIGNED_POWER:
        return spec.A * np.abs(s) ** (spec.p - 1) * s
    if spec.nonlinearity == Nonlinearity.QUADRATIC:
        return spec.A * s * s
    return spec.A * np.abs(s) ** spec.p


def apply_F(U, spec: ProblemSpec):
    """Pointwise F on a GridFunction or GradedFunction."""
    return U.with_values(F_scalar(U.values, spec))


def _flat_nodes(U):
    """(r, t, values, in-collar mask) as flat arrays."""
    if isinstance(U, GradedFunction):
        return U.r, U.t, U.values, np.ones(U.values.shape, dtype=bool)
    R, T = np.meshgrid(U.r_nodes, U.t_nodes, indexing="ij")
    return R.ravel(), T.ravel(), U.values.ravel(), U.support_flag.ravel()


def weighted_norm(U, spec: ProblemSpec, T: float | None = None) -> float:
    """max of w(r, t) |U(r, t)| over collar nodes with t <= T."""
    r, t, v, sup = _flat_nodes(U)
    sel = sup if T is None else sup & (t <= T * (1 + 1e-12))
    if not np.any(sel):
        return 0.0
    w = weight_w(r[sel], t[sel], spec)
    return float(np.max(w * np.abs(v[sel])))


# ------------------------------------------------------------ discretisation

@dataclass(frozen=True)
class LatticeSpec:
    """Resolution of the space-time lattice.

    kind "graded": characteristic lattice, spacing h on [-k, k] and geometric
    growth `ratio` beyond.  kind "uniform": dr = dt = h on [0, T + k] x [0, T].
    """

    kind: str = "graded"
    h: float | None = None
    ratio: float = 1.15
    q: int = 4

    def spacing(self, k: float) -> float:
        return k / 16 if self.h is None else self.h


class _Discretisation:
    def __init__(self, spec: ProblemSpec, T: float, lattice: LatticeSpec):
        k = spec.k
        h = lattice.spacing(k)
        k0 = spec.k0 if spec.k0 is not None else 0.0
        across = math.floor(k / h + 1e-9) - math.ceil(k0 / h - 1e-9) + 1
        if across < 8:
            raise ValueError(f"lattice too coarse: {across} nodes across [k0, k] (need >= 8)")
        if T < 0:
            raise ValueError("T must be nonnegative")
        self.kind = lattice.kind
        self.T = T
        if lattice.kind == "graded":
            if abs(round(k / h) * h - k) > 1e-9 * k:
                raise ValueError("graded lattices need k to be a multiple of h")
            self.lat = GradedLattice.build(k, T, h=h, ratio=lattice.ratio)
            self.op = build_graded_operator(self.lat, spec.n, q=lattice.q)
            self.r, self.t = self.lat.r, self.lat.t
            self.mask = np.ones(self.r.shape, dtype=bool)
        elif lattice.kind == "uniform":
            n_t = int(math.ceil(T / h - 1e-9)) + 1
            n_r = n_t + int(math.ceil(k / h - 1e-9))
            self.grid = GridFunction.lattice(h, n_r, max(n_t, 2), k)
            self.stencil = build_stencil(spec.n, n_r, max(n_t, 2), q=max(lattice.q, 6))
            R, Tm = np.meshgrid(self.grid.r_nodes, self.grid.t_nodes, indexing="ij")
            self.r, self.t = R.ravel(), Tm.ravel()
            self.mask = self.grid.support_flag.ravel()
        else:
            raise ValueError(f"unknown lattice kind {lattice.kind!r}")

    def apply(self, vec: np.ndarray) -> np.ndarray:
        if self.kind == "graded":
            return self.op.apply(vec)
        out = self.stencil.apply(vec.reshape(self.grid.shape), self.grid.delta).ravel()
        return np.where(self.mask, out, 0.0)

    def wrap(self, vec: np.ndarray):
        if self.kind == "graded":
            return GradedFunction(self.lat, vec)
        return self.grid.with_values(vec.reshape(self.grid.shape))

    def sample(self, fn) -> np.ndarray:
        out = np.zeros(self.r.shape)
        out[self.mask] = fn(self.r[self.mask], self.t[self.mask])
        return out


# ------------------------------------------------------------------ iteration

class Verdict(str, enum.Enum):
    RUNNING = "Running"
    CONVERGED = "Converged"
    DIVERGED = "Diverged"
    STALLED = "Stalled"


@dataclass
class IterationState:
    l: int
    U: object
    norm_history: list = field(default_factory=list)
    delta_history: list = field(default_factory=list)
    verdict: Verdict = Verdict.RUNNING
    tol: float = 0.0
    cap: float = math.inf
    residual: float | None = None

    @property
    def contraction_ratio(self) -> float:
        """Last ratio of successive differences (0 once the differences vanish)."""
        d = self.delta_history
        if len(d) < 2 or d[-2] == 0:
            return 0.0
        return d[-1] / d[-2]

    def record(self) -> dict:
        return {"verdict": self.verdict.value, "iterations": self.l,
                "norm_history": list(self.norm_history), "delta_history": list(self.delta_history),
                "residual": self.residual}


def default_tol(spec: ProblemSpec) -> float:
    return 1e-8 * spec.eps ** spec.p if spec.eps > 0 else 1e-300


def divergence_cap(spec: ProblemSpec) -> float:
    return 1e6 * max(1.0, spec.eps ** spec.p)


def _initial(spec: ProblemSpec, data, disc: _Discretisation) -> np.ndarray:
    from .propagator import v_solution

    if spec.eps == 0:
        return np.zeros(disc.r.shape)
    return disc.sample(lambda r, t: v_solution(spec, data, r, t))


def _step(disc, W, U0, spec):
    F = np.clip(F_scalar(W + U0, spec), -1e100, 1e100)
    return np.clip(disc.apply(F), -CLIP, CLIP)


def picard_run(spec: ProblemSpec, data, T: float, lattice: LatticeSpec | None = None,
               max_iter: int = 200, tol: float | None = None, cap: float | None = None,
               U0: np.ndarray | None = None) -> IterationState:
    """Iterate on [0, T] until the update drops below tol, the norm passes cap, or max_iter."""
    if max_iter < 2:
        raise ValueError("max_iter must be >= 2")
    tol = default_tol(spec) if tol is None else tol
    if not tol > 0:
        raise ValueError("tol must be positive")
    cap = divergence_cap(spec) if cap is None else cap
    disc = _Discretisation(spec, T, lattice or LatticeSpec())
    U0 = _initial(spec, data, disc) if U0 is None else U0
    w = np.zeros(disc.r.shape)
    w[disc.mask] = weight_w(disc.r[disc.mask], disc.t[disc.mask], spec)
    W = np.zeros(disc.r.shape)
    state = IterationState(0, disc.wrap(W), tol=tol, cap=cap)
    for l in range(1, max_iter + 1):
        Wn = _step(disc, W, U0, spec)
        norm = float(np.max(w * np.abs(Wn)))
        delta = float(np.max(w * np.abs(Wn - W)))
        W = Wn
        state.l = l
        state.norm_history.append(norm)
        state.delta_history.append(delta)
        if not math.isfinite(norm) or norm > cap:
            state.verdict = Verdict.DIVERGED
            break
        if delta < tol and state.contraction_ratio < 1:
            state.verdict = Verdict.CONVERGED
            break
    else:
        state.verdict = Verdict.STALLED
    state.U = disc.wrap(W)
    if state.verdict is Verdict.CONVERGED:
        state.residual = float(np.max(w * np.abs(W - _step(disc, W, U0, spec))))
    return state


@dataclass
class LifespanEstimate:
    T: float
    T_last_converged: float
    T_first_diverged: float
    trail: list
    iterations: int

    def __float__(self) -> float:
        return self.T


def estimate_lifespan(spec: ProblemSpec, data, T_grid, lattice: LatticeSpec | None = None,
                      max_iter: int = 400, tol: float | None = None,
                      cap: float | None = None) -> LifespanEstimate:
    """Smallest horizon whose Picard run diverges; inf if none within T_grid[-1].

    L is causal, so the run restricted to [0, T] agrees with the run on
    [0, T_grid[-1]] on every node with t <= T.  One long run therefore gives
    the verdict of every shorter horizon; the transition is located exactly
    among the lattice times, which is finer than any bisection on T_grid.
    """
    T_grid = np.asarray(T_grid, dtype=float)
    if T_grid.size == 0 or np.any(np.diff(T_grid) <= 0):
        raise ValueError("T_grid must be nonempty and increasing")
    tol = default_tol(spec) if tol is None else tol
    cap = divergence_cap(spec) if cap is None else cap
    disc = _Discretisation(spec, float(T_grid[-1]), lattice or LatticeSpec())
    U0 = _initial(spec, data, disc)
    w = np.zeros(disc.r.shape)
    w[disc.mask] = weight_w(disc.r[disc.mask], disc.t[disc.mask], spec)
    W = np.zeros(disc.r.shape)
    peak = np.zeros(disc.r.shape)
    delta = np.full(disc.r.shape, np.inf)
    it = 0
    for it in range(1, max_iter + 1):
        Wn = _step(disc, W, U0, spec)
        delta = w * np.abs(Wn - W)
        W = Wn
        peak = np.maximum(peak, w * np.abs(W))
        if np.max(delta) < tol:
            break
    t = disc.t[disc.mask]
    div_t = t[peak[disc.mask] > cap]
    open_t = t[delta[disc.mask] >= tol]
    t_div = float(div_t.min()) if div_t.size else math.inf
    t_open = float(open_t.min()) if open_t.size else math.inf
    settled = t[t < min(t_div, t_open)]
    t_conv = float(settled.max()) if settled.size else 0.0
    trail = []
    for T in T_grid:
        if T >= t_div:
            v = Verdict.DIVERGED
        elif T >= t_open:
            v = Verdict.STALLED
        else:
            v = Verdict.CONVERGED
        trail.append((float(T), v.value))
    return LifespanEstimate(t_div, t_conv, t_div, trail, it)


# ----------------------------------------------------------------- conditions

@dataclass
class ConditionConstants:
    """Constants of the a-priori and decay estimates (None = not fitted)."""

    C: float | None = None
    C_n0p: float | None = None
    C_n1p: float | None = None
    C_npm1p: float | None = None
    C0: float | None = None
    C1: float | None = None
    C2: float | None = None

    def missing(self, n: int) -> list[str]:
        need = ["C", "C_n0p", "C_n1p", "C_npm1p"] + (["C0"] if n % 2 else ["C1", "C2"])
        return [name for name in need if getattr(self, name) is None]


CONSTANT_CAVEAT = ("verdicts are relative to the supplied constants; the a-priori constant C "
                   "is not explicit and fitted values only approximate it")


@dataclass
class ConditionReport:
    parity: str
    eps: float
    T: float
    slacks: dict
    M: float
    constants: ConditionConstants
    caveat: str = CONSTANT_CAVEAT

    @property
    def holds(self) -> dict:
        return {name: s >= 0 for name, s in self.slacks.items()}

    @property
    def verdict(self) -> bool:
        return all(self.holds.values())

    def first_violated(self) -> str | None:
        for name, ok in self.holds.items():
            if not ok:
                return name
        return None


def M0(spec: ProblemSpec, cst: ConditionConstants) -> float:
    p = spec.p
    return 2 ** p * p * spec.A * cst.C_n0p * spec.k ** 2 * cst.C0 ** p


def M1(spec: ProblemSpec, cst: ConditionConstants) -> float:
    p = spec.p
    C1, C2 = cst.C1, cst.C2
    return 2 ** (2 * p) * p * spec.A * spec.k ** 2 * (
        cst.C_n0p * C1 ** p + cst.C_n1p * C1 ** (p - 1) * C2
        + cst.C_npm1p * C1 * C2 ** (p - 1) + cst.C_n0p * C2 ** p)


def contraction_conditions(spec: ProblemSpec, T: float, constants: ConditionConstants,
                           delta: float | None = None) -> ConditionReport:
    """Slack (right minus left side) of every smallness condition of the existence proof."""
    missing = constants.missing(spec.n)
    if missing:
        raise ValueError(f"unfitted constants: {', '.join(missing)}")
    delta = default_delta(spec.p) if delta is None else delta
    p, A, k, e = spec.p, spec.A, spec.k, spec.eps
    C = constants.C
    C1p, Cpm = constants.C_n1p, constants.C_npm1p
    D = D_of_T(spec, T)[0]
    pre = 2 ** (p - 1) * p * A * k * k
    s = {}
    if spec.n % 2:
        M = M0(spec, constants)
        C0 = constants.C0
        E1 = E_nu(spec, T, 1.0, delta)[0]
        Epm = E_nu(spec, T, p - 1, delta)[0]
        s["eps<=1"] = 1.0 - e
        s["bound"] = M * e ** p - 2 ** p * A * C * k * k * (2 * M) ** p * e ** (p * p) * D
        s["contraction"] = 0.5 - pre * (C * (6 * M * e ** p) ** (p - 1) * D
                                        + C1p * (C0 * e) ** (p - 1) * E1)
        s["derivative bound"] = 1.5 * M * e ** p - pre * (
            C * (2 * M) ** p * e ** (p * p) * D
            + Cpm * (2 * M) ** (p - 1) * C0 * e ** (p * p - p + 1) * Epm
            + C1p * 2 * M * C0 ** (p - 1) * e ** (2 * p - 1) * E1)
        s["derivative contraction"] = 0.5 - pre * (C * (2 * M) ** (p - 1) * e ** (p * (p - 1)) * D
                                                   + C1p * C0 ** (p - 1) * e ** (p - 1) * E1)
        return ConditionReport("odd", e, T, s, M, constants)
    M = M1(spec, constants)
    C1, C2 = constants.C1, constants.C2
    E01 = E_nu_a(spec, T, 0.0, 1, delta)[0]
    E10 = E_nu_a(spec, T, 1.0, 0, delta)[0]
    E11 = E_nu_a(spec, T, 1.0, 1, delta)[0]
    Epm0 = E_nu_a(spec, T, p - 1, 0, delta)[0]
    Epm1 = E_nu_a(spec, T, p - 1, 1, delta)[0]
    F1 = F_nu(spec, T, 1.0, delta)[0]
    Fpm = F_nu(spec, T, p - 1, delta)[0]
    h = 2 ** (p - 1)
    s["first iterate"] = 1.0 - e ** (p * (p - 1)) * E01
    s["bound"] = M * e ** p - 2 ** p * A * C * k * k * (2 * M) ** p * e ** (p * p) * D
    s["contraction"] = 0.5 - pre * (C * (6 * M * e ** p) ** (p - 1) * D
                                    + h * C1p * (C1 * e) ** (p - 1) * E10
                                    + h * C1p * C2 ** (p - 1) * E11 * e ** (p * (p - 1)))
    s["first derivative, F_1"] = 1.0 - e ** (p - 1) * F1
    s["first derivative, F_(p-1)"] = 1.0 - e ** ((p - 1) ** 2) * Fpm
    s["derivative bound"] = 1.75 * M * e ** p - pre * (
        C * (2 * M) ** p * e ** (p * p) * D
        + Cpm * (2 * M) ** (p - 1) * C1 * e ** (p * p - p + 1) * Epm0
        + Cpm * (2 * M) ** (p - 1) * C2 * e ** (p * p) * Epm1
        + h * (C1p * C1 ** (p - 1) * e ** (2 * p - 1) * 2 * M * E10
               + C1p * C2 ** (p - 1) * 2 * M * e ** (p * p) * E11))
    s["derivative contraction"] = 0.5 - pre * (
        C * (2 * M) ** (p - 1) * e ** (p * (p - 1)) * D
        + h * (C1p * C1 ** (p - 1) * e ** (p - 1) * E10
               + C1p * C2 ** (p - 1) * e ** (p * (p - 1)) * E11))
    return ConditionReport("even", e, T, s, M, constants)


def lifespan_constant(spec: ProblemSpec, constants: ConditionConstants) -> tuple[float, float]:
    """(c, eps0) of the odd-dimensional existence argument: eps^(p(p-1)) D(T) <= c suffices."""
    if spec.n % 2 == 0:
        raise ValueError("the explicit c is implemented for odd n only")
    missing = constants.missing(spec.n)
    if missing:
        raise ValueError(f"unfitted constants: {', '.join(missing)}")
    p, A, k = spec.p, spec.A, spec.k
    C, C1p, Cpm, C0 = constants.C, constants.C_n1p, constants.C_npm1p, constants.C0
    M = M0(spec, constants)
    c_D = 1.0 / (2 ** (2 * p) * 3 ** (p - 1) * p * A * C * k * k * M ** (p - 1))
    b1 = 2 ** (p + 1) * p * A * k * k * C1p * C0 ** (p - 1)
    b2 = 2 ** (2 * p - 1) * p * A * k * k * Cpm * M ** (p - 2) * C0
    reg = weight_regime(p, spec.n)
    if reg.regime is Regime.ABOVE:
        eps0 = min(1.0, b1 ** (-1 / (p - 1)), b2 ** (-1 / (p - 1) ** 2))
        return c_D, eps0
    return min(c_D, b1 ** (-p), b2 ** (-p / (p - 1))), 1.0


def horizon_from_constant(spec: ProblemSpec, c: float) -> float:
    """Largest T with eps^(p(p-1)) D(T) <= c (inf when D is bounded and the bound holds)."""
    e, p, k = spec.eps, spec.p, spec.k
    budget = c / e ** (p * (p - 1))
    crit = criticality(p, spec.n)
    if crit is Criticality.SUPERCRITICAL:
        return math.inf if budget >= 1 else 0.0
    if crit is Criticality.CRITICAL:
        X = math.exp(budget) if budget < 700 else math.inf
    else:
        X = budget ** (2 / gamma(p, spec.n))
    return max(0.0, 0.5 * k * (X - 3)) if math.isfinite(X) else math.inf


# ----------------------------------------------------------- constant fitting

def _prefix_sup(t: np.ndarray, ratio_num: np.ndarray, budget) -> float:
    """max over prefixes T = t_i of max_{t <= T} num / budget(T)."""
    order = np.argsort(t, kind="stable")
    ts = t[order]
    run = np.maximum.accumulate(ratio_num[order])
    B = np.array([budget(T) for T in ts])
    return float(np.max(run / B))


def fit_constants(spec: ProblemSpec, data, T: float, lattice: LatticeSpec | None = None,
                  delta: float | None = None, deriv_step: float = 1e-4) -> ConditionConstants:
    """Fit every constant as the lattice supremum of its defining ratio up to T.

    The a-priori constants come from applying the lattice operator to the
    extremal weights of each estimate; the decay constants from the linear
    part U0 and its radial derivative (central differences).  The norms in
    the decay constants already carry w, so e.g. C0 = sup tau_+^((n-1)/2) dW0 / eps.
    """
    from .propagator import u0, v1_solution

    disc = _Discretisation(spec, T, lattice or LatticeSpec())
    delta = default_delta(spec.p) if delta is None else delta
    n, p, k = spec.n, spec.p, spec.k
    r, t = disc.r[disc.mask], disc.t[disc.mask]
    w = weight_w(r, t, spec)
    tp, tm = tau_plus(r, t, k), tau_minus(r, t, k)
    q = weight_regime(p, n).q

    def L_of(psi_vals):
        full = np.zeros(disc.r.shape)
        full[disc.mask] = psi_vals
        return disc.apply(full)[disc.mask]

    def sup_ratio(psi_vals, budget):
        return _prefix_sup(t, w * L_of(psi_vals), lambda TT: k * k * budget(TT))

    C = sup_ratio(w ** (-p), lambda TT: D_of_T(spec, TT)[0])
    consts = {}
    for name, nu in (("C_n0p", 0.0), ("C_n1p", 1.0), ("C_npm1p", p - 1)):
        if n % 2:
            collar = (np.abs(t - r) <= k + 1e-12)
            psi = tp ** (-(n - 1) * (p - nu) / 2) * w ** (-nu) * collar
            consts[name] = sup_ratio(psi, lambda TT, nu=nu: E_nu(spec, TT, nu, delta)[0])
        else:
            vals = []
            for a in (0, 1):
                sigma = (p - nu) * (a - (n - 1) / 2)
                psi = tp ** (-(n - 1) * (p - nu) / 2) * tm ** sigma * w ** (-nu)
                vals.append(sup_ratio(psi, lambda TT, nu=nu, a=a: E_nu_a(spec, TT, nu, a, delta)[0]))
            kappa = nu - (n - 1) * p / 2
            psi = tp ** (-(n - 1) * p / 2) * tm ** kappa
            vals.append(sup_ratio(psi, lambda TT, nu=nu: F_nu(spec, TT, nu, delta)[0]))
            consts[name] = max(vals)

    def radial_max(fn):
        """max(|u|, |u_r|) at the lattice nodes."""
        hstep = deriv_step * max(1.0, k)
        val = fn(r, t)
        rp, rm = r + hstep, np.maximum(r - hstep, 0.0)
        der = (fn(rp, t) - fn(rm, t)) / (rp - rm)
        return np.maximum(np.abs(val), np.abs(der))

    eps = spec.eps if spec.eps > 0 else 1.0
    W00 = radial_max(lambda rr, tt: eps * u0(data, rr, tt, n))
    if data.has_f:
        W01 = radial_max(lambda rr, tt: v1_solution(spec, data, rr, tt))
    else:
        W01 = np.zeros(r.shape)
    if n % 2:
        C0 = float(np.max(tp ** ((n - 1) / 2) * (W00 + W01))) / eps
        return ConditionConstants(C, consts["C_n0p"], consts["C_n1p"], consts["C_npm1p"], C0=C0)
    base = (tp * tm) ** ((n - 1) / 2)
    C1 = float(np.max(base * W00)) / eps
    C2 = float(np.max(base * W01 / tm)) / eps ** p
    return ConditionConstants(C, consts["C_n0p"], consts["C_n1p"], consts["C_npm1p"], C1=C1, C2=C2)
