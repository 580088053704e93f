"""Lower-bound iteration for blow-up: sequences, the constant S and thresholds.

The four cases share one skeleton.  A frame inequality
W(xi) >= base + coef * xi^(-kappa) int_b^xi (1 - eta/xi)^m eta^(rho-1) W^p d eta
is fed the ansatz W >= C_j (log or power profile)^(a_j) / xi^(b_j), which
produces recurrences for a_j, b_j and C_j.  Minorising C_{j+1} >= E C_j^p / B^j
yields C_j >= exp(p^(j-1) (log C_1 + S)) and the explicit point xi_0 past
which the bound is infinite.

All thresholds are carried in log space: in the critical cases log(xi_0)
is itself of size eps^(-p(p-1)).
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .duhamel import constant_even, constant_odd
from .exponents import Criticality, ProblemSpec, criticality, strauss_exponent

DIVERGENCE_LEVEL = 1e10


class BlowupCase(str, enum.Enum):
    ODD_CRITICAL = "OddCritical"
    ODD_SUBCRITICAL = "OddSubcritical"
    EVEN_CRITICAL = "EvenCritical"
    EVEN_SUBCRITICAL = "EvenSubcritical"

    @property
    def odd(self) -> bool:
        return self in (BlowupCase.ODD_CRITICAL, BlowupCase.ODD_SUBCRITICAL)

    @property
    def critical(self) -> bool:
        return self in (BlowupCase.ODD_CRITICAL, BlowupCase.EVEN_CRITICAL)


def case_for(spec: ProblemSpec) -> BlowupCase:
    crit = criticality(spec.p, spec.n)
    if crit is Criticality.SUPERCRITICAL:
        raise ValueError(f"p = {spec.p} exceeds p0({spec.n}) = {strauss_exponent(spec.n):.6g}: "
                         "no blow-up bound applies")
    odd = spec.n % 2 == 1
    if crit is Criticality.CRITICAL:
        return BlowupCase.ODD_CRITICAL if odd else BlowupCase.EVEN_CRITICAL
    return BlowupCase.ODD_SUBCRITICAL if odd else BlowupCase.EVEN_SUBCRITICAL


def _check_case(spec: ProblemSpec, case) -> BlowupCase:
    if spec.n < 4:
        raise ValueError("the blow-up frames need n >= 4")
    expected = case_for(spec)
    if case is None:
        return expected
    case = BlowupCase(case)
    if case is not expected:
        raise ValueError(f"case {case.value} is inconsistent with n={spec.n}, p={spec.p} "
                         f"(expected {expected.value})")
    return case


# ----------------------------------------------------- exact sequence tables

def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def pq_exact(p, n: int) -> Fraction:
    p = _as_fraction(p)
    return p * ((n - 1) * p - (n + 1)) / 2


@dataclass
class SequenceTable:
    """a_j, b_j, l_j for j = 1..j_max from the recurrence and the closed form."""

    case: BlowupCase
    p: Fraction
    n: int
    a_rec: list
    a_closed: list
    b_rec: list | None
    b_closed: list | None
    l_rec: list | None
    l_closed: list | None

    @property
    def consistent(self) -> bool:
        pairs = [(self.a_rec, self.a_closed), (self.b_rec, self.b_closed),
                 (self.l_rec, self.l_closed)]
        return all(x == y for x, y in pairs)


def sequence_table(case, p, n: int, j_max: int) -> SequenceTable:
    """Rational-arithmetic tables.  No check that p matches the case."""
    case = BlowupCase(case)
    if j_max < 1:
        raise ValueError("j_max must be >= 1")
    p = _as_fraction(p)
    pq = pq_exact(p, n)
    if case is BlowupCase.ODD_SUBCRITICAL:
        step_a, step_b = Fraction(n - 1), pq + n - 2
    elif case is BlowupCase.EVEN_SUBCRITICAL:
        step_a, step_b = Fraction(n, 2), pq + Fraction(n - 2, 2)
    else:
        step_a, step_b = Fraction(1), None
    a = [Fraction(0)]
    b = [Fraction(0)] if step_b is not None else None
    for _ in range(j_max - 1):
        a.append(p * a[-1] + step_a)
        if b is not None:
            b.append(p * b[-1] + step_b)
    a_closed = [step_a * (p ** (j - 1) - 1) / (p - 1) for j in range(1, j_max + 1)]
    b_closed = None if b is None else [step_b * (p ** (j - 1) - 1) / (p - 1)
                                       for j in range(1, j_max + 1)]
    l_rec = l_closed = None
    if case.critical:
        start = Fraction(2) if case.odd else Fraction(0)
        l_rec, acc = [], start
        for j in range(1, j_max + 1):
            acc += Fraction(1, 2 ** j)
            l_rec.append(acc)
        l_closed = [start + 1 - Fraction(1, 2 ** j) for j in range(1, j_max + 1)]
    return SequenceTable(case, p, n, a, a_closed, b, b_closed, l_rec, l_closed)


# ------------------------------------------------------------ base constants

@dataclass(frozen=True)
class BaseConstants:
    """Numeric constants of the frame for one (spec, case).

    `coef` is D_n (odd) or E_n (even); `source1`/`source2` are E_1/E_2 or
    F_1/F_2; `E` and `B` are the per-step minorant constants.  K and L only
    exist for even n; `decay` is the sup-norm decay constant of u0 that
    enters K.
    """

    C: float
    C_g: float
    coef: float
    source1: float
    source2: float
    E: float
    B: float
    K: float | None = None
    L: float | None = None
    decay: float | None = None

    def as_dict(self) -> dict:
        return asdict(self)


def data_constants(spec: ProblemSpec, data=None, t_span: float = 20.0) -> tuple[float, float | None]:
    """(C_g, decay constant) fitted from u0 of the blow-up profile.

    The decay constant is a sup over the sampled collar t <= t_span k only;
    it is needed in even dimensions alone.
    """
    from .propagator import LinearSolution, fit_decay_constant, lower_bound_u0, profile_from_spec

    data = profile_from_spec(spec) if data is None else data
    sol = LinearSolution(data, spec.n)
    lb = lower_bound_u0(sol, spec)
    if not lb.ok:
        raise ValueError(lb.message)
    decay = None
    if spec.n % 2 == 0:
        k = spec.k
        R, T = np.meshgrid(np.linspace(0.0, (t_span + 1) * k, 4 * int(t_span) + 5),
                           np.linspace(0.0, t_span * k, 4 * int(t_span) + 1))
        m = R <= T + k
        decay = fit_decay_constant(sol, R[m], T[m])
    return lb.C_g, decay


def base_constants(spec: ProblemSpec, case=None, C_g: float | None = None,
                   decay: float | None = None) -> BaseConstants:
    case = _check_case(spec, case)
    if C_g is None or (decay is None and not case.odd):
        fit_g, fit_d = data_constants(spec)
        C_g = fit_g if C_g is None else C_g
        decay = fit_d if decay is None else decay
    n, p, k0, k1 = spec.n, spec.p, spec.k0, spec.k1
    if not C_g > 0:
        raise ValueError("C_g must be positive")
    if case.odd:
        C = constant_odd(n)
        E1 = C * C_g ** p * (k1 - k0) / ((n - 1) * 2.0 ** ((n - 1) * p - (3 * n - 9) / 2))
        E2 = E1 / 2.0 ** ((3 * n - 5) / 2)
        D = C / (2.0 ** (n - 3) * (n - 1))
        if case.critical:
            E, B = D * (p - 1) / 6.0 ** (n - 2), 2.0 ** (n - 2) * p
        else:
            E = D * math.factorial(n - 2) * (p - 1) ** (n - 1) / (n - 1) ** (n - 1)
            B = p ** (n - 1)
        return BaseConstants(C, C_g, D, E1, E2, E, B)
    C = constant_even(n)
    F1 = C * C_g ** p * (k1 - k0) * 2.0 ** ((11 - 3 * n) / 2 - (n - 1) * p) / (n * (n - 1))
    F2 = F1 / (2.0 ** (3 * n - 3) * 3.0 ** ((n - 1) * p / 2 - (3 * n - 3) / 2))
    En = C * 3.0 ** ((n - 1) / 2) / (2.0 ** ((2 * n - 9) / 2) * 5.0 ** (n / 2) * n * (n - 1))
    if case.critical:
        E, B = En * (p - 1) / 2.0 ** ((n - 2) / 2), 2.0 ** ((n - 2) / 2) * p
    else:
        h = n // 2
        E = En * math.factorial(h - 1) * (2 * (p - 1)) ** h / n ** h
        B = p ** h
    expo = n - (n - 1) * p / 2
    if not decay or not decay > 0:
        raise ValueError("even cases need a positive decay constant")
    K = (2.0 ** (2 * n - (n - 1) * p / 2 - 1) * decay / F1) ** (1 / expo)
    L = (p - 1) / expo
    return BaseConstants(C, C_g, En, F1, F2, E, B, K, L, decay)


# ------------------------------------------------------------------ constant S

def _tail_bound(logE: float, logB: float, p: float, J: int) -> float:
    x = 1.0 / p
    geo = x ** (J + 1) / (1 - x)
    lin = x ** (J + 1) * ((J + 1) - J * x) / (1 - x) ** 2
    return abs(logE) * geo + abs(logB) * lin


def constant_S(spec: ProblemSpec, case, E_or_F: float, B: float | None = None) -> float:
    """Infimum over J >= 1 of sum_{m=1}^{J} (log E - m log B) / p^m.

    B defaults to the case's base (2^(n-2) p, p^(n-1), 2^((n-2)/2) p, p^(n/2)).
    """
    if not E_or_F > 0:
        raise ValueError("E must be positive")
    case = BlowupCase(case)
    p, n = spec.p, spec.n
    if B is None:
        B = {BlowupCase.ODD_CRITICAL: 2.0 ** (n - 2) * p,
             BlowupCase.ODD_SUBCRITICAL: p ** (n - 1),
             BlowupCase.EVEN_CRITICAL: 2.0 ** ((n - 2) / 2) * p,
             BlowupCase.EVEN_SUBCRITICAL: p ** (n / 2)}[case]
    return _running_min_S(math.log(E_or_F), math.log(B), p)


def _running_min_S(logE: float, logB: float, p: float) -> float:
    total, best, J = 0.0, math.inf, 0
    while True:
        J += 1
        total += (logE - J * logB) / p ** J
        best = min(best, total)
        if _tail_bound(logE, logB, p, J) < 1e-14 or J > 100_000:
            return best


def S_limit(logE: float, logB: float, p: float) -> float:
    """Closed-form limit of the partial sums."""
    return logE / (p - 1) - logB * p / (p - 1) ** 2


# -------------------------------------------------------------- sequences

@dataclass
class BlowupSequences:
    case: BlowupCase
    eps: float
    table: SequenceTable
    logC: np.ndarray
    logC_minorant: np.ndarray
    S: float
    base: BaseConstants

    @property
    def a(self) -> list:
        return self.table.a_rec

    @property
    def b(self) -> list | None:
        return self.table.b_rec

    @property
    def l(self) -> list | None:
        return self.table.l_rec

    @property
    def j_max(self) -> int:
        return len(self.logC)

    def normalised(self) -> np.ndarray:
        """log C_j / p^(j-1)."""
        p = float(self.table.p)
        return self.logC / p ** np.arange(self.j_max)

    def rows(self) -> list[dict]:
        out = []
        for j in range(self.j_max):
            out.append({
                "j": j + 1,
                "a_j": float(self.table.a_rec[j]),
                "b_j": "" if self.b is None else float(self.b[j]),
                "l_j": "" if self.l is None else float(self.l[j]),
                "log_C_j": float(self.logC[j]),
            })
        return out

    def to_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(rows[0]))
            wr.writeheader()
            wr.writerows(rows)


def _log_source(spec: ProblemSpec, base: BaseConstants) -> float:
    if spec.eps <= 0:
        raise ValueError("eps must be positive for blow-up bounds")
    return math.log(base.source2) + spec.p * math.log(spec.eps)


def build_sequences(spec: ProblemSpec, case=None, j_max: int = 40,
                    base: BaseConstants | None = None) -> BlowupSequences:
    case = _check_case(spec, case)
    if j_max < 2:
        raise ValueError("j_max must be >= 2")
    base = base_constants(spec, case) if base is None else base
    n, p = spec.n, spec.p
    table = sequence_table(case, Fraction(p), n, j_max)
    a = [float(x) for x in table.a_rec]
    logC = np.empty(j_max)
    logC[0] = _log_source(spec, base)
    logD = math.log(base.coef)
    for j in range(1, j_max):
        prev, aj = logC[j - 1], a[j - 1]
        if case is BlowupCase.ODD_CRITICAL:
            step = (logD - (n - 2) * math.log(3) - (j + 1) * (n - 2) * math.log(2)
                    - math.log(p * aj + 1))
        elif case is BlowupCase.ODD_SUBCRITICAL:
            step = logD + math.lgamma(n - 1) - (n - 1) * math.log(p * aj + n - 1)
        elif case is BlowupCase.EVEN_CRITICAL:
            step = logD - (n - 2) * (j + 1) / 2 * math.log(2) - math.log(p * aj + 1)
        else:
            step = logD + math.lgamma(n / 2) - (n / 2) * math.log(p * aj + n / 2)
        logC[j] = step + p * prev
    minor = np.empty(j_max)
    minor[0] = logC[0]
    logE, logB = math.log(base.E), math.log(base.B)
    for j in range(1, j_max):
        minor[j] = logE + p * minor[j - 1] - j * logB
    S = _running_min_S(logE, logB, p)
    return BlowupSequences(case, spec.eps, table, logC, minor, S, base)


# --------------------------------------------------------------- thresholds

@dataclass
class Threshold:
    case: BlowupCase
    eps: float
    log_xi0: float
    log_T_upper: float
    S: float
    constants: dict = field(default_factory=dict)

    @property
    def xi0(self) -> float:
        return math.exp(self.log_xi0) if self.log_xi0 < 709 else math.inf

    @property
    def T_upper(self) -> float:
        return math.exp(self.log_T_upper) if self.log_T_upper < 709 else math.inf

    @property
    def log_log_xi0(self) -> float:
        return math.log(self.log_xi0)

    def __iter__(self):
        yield self.xi0
        yield self.T_upper

    def to_json(self) -> dict:
        return {"case": self.case.value, "eps": self.eps, "xi0": self.xi0,
                "log_xi0": self.log_xi0, "T_upper": self.T_upper,
                "log_T_upper": self.log_T_upper, "S": self.S, "constants": self.constants}


def max_admissible_eps(spec: ProblemSpec, base: BaseConstants) -> float:
    """Largest eps with K eps^(-L) >= 4k (even cases)."""
    return (base.K / (4 * spec.k)) ** (1 / base.L)


def frame_base_point(spec: ProblemSpec, case, base: BaseConstants) -> float:
    """Lower limit of the frame integral: 2k (odd) or K eps^(-L)/2 (even)."""
    case = BlowupCase(case)
    if case.odd:
        return 2 * spec.k
    return 0.5 * base.K * spec.eps ** (-base.L)


def _check_admissible(spec: ProblemSpec, case: BlowupCase, base: BaseConstants) -> None:
    if case.odd:
        return
    if base.K * spec.eps ** (-base.L) < 4 * spec.k:
        raise ValueError(f"eps = {spec.eps:g} is too large: need K eps^-L >= 4k, "
                         f"i.e. eps <= {max_admissible_eps(spec, base):.6g}")


def blowup_threshold(spec: ProblemSpec, case=None, base: BaseConstants | None = None) -> Threshold:
    """Explicit xi_0 and the lifespan bound T_upper = 3 xi_0 (odd) or 7 xi_0 (even)."""
    case = _check_case(spec, case)
    base = base_constants(spec, case) if base is None else base
    _check_admissible(spec, case, base)
    n, p, eps, k = spec.n, spec.p, spec.eps, spec.k
    if not eps > 0:
        raise ValueError("eps must be positive")
    S = constant_S(spec, case, base.E, base.B)
    log_src = S + math.log(base.source2)
    if case.critical:
        big = math.exp(-(p - 1) * log_src - p * (p - 1) * math.log(eps))
        floor = math.log(3 * k) if case.odd else math.log(base.K) - base.L * math.log(eps)
        log_xi0 = floor + big
    else:
        one_pq = 1 - float(pq_exact(Fraction(p), n))
        top = (n - 1) if case.odd else n / 2
        log_xi0 = (top * math.log(2) - (p - 1) * log_src - p * (p - 1) * math.log(eps)) / one_pq
        floor = math.log(4 * k) if case.odd else math.log(base.K) - base.L * math.log(eps)
        log_xi0 = max(log_xi0, floor)
    log_T = log_xi0 + math.log(3.0 if case.odd else 7.0)
    return Threshold(case, eps, log_xi0, log_T, S, base.as_dict())


def thresholds_json(thresholds: list[Threshold]) -> str:
    return json.dumps([t.to_json() for t in thresholds], indent=2, allow_nan=True)


# ------------------------------------------------------ numeric frame iteration

def _frame_shape(spec: ProblemSpec, case: BlowupCase) -> tuple[int, float, int]:
    """(m, kappa, rho): kernel power, outer power of xi, extra eta power."""
    n = spec.n
    m = n - 2 if case.odd else (n - 2) // 2
    if case.critical:
        return m, 0.0, 0
    return m, float(pq_exact(Fraction(spec.p), n)), 1


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _G_minus_u(u: np.ndarray, m: int) -> np.ndarray:
    """int_0^u ((1 - e^-v)^m - 1) dv, bounded and accurate for all u >= 0."""
    u = np.asarray(u, dtype=float)
    out = np.empty_like(u)
    small = u <= 1.0
    us = u[small]
    v = 0.5 * us[:, None] * (_GL_X[None, :] + 1)
    out[small] = 0.5 * us * np.sum(_GL_W * ((-np.expm1(-v)) ** m - 1), axis=1)
    ub = u[~small]
    w1 = 0.5 * (_GL_X + 1)
    g1 = 0.5 * np.sum(_GL_W * ((-np.expm1(-w1)) ** m - 1))
    extra = np.zeros_like(ub)
    for i in range(1, m + 1):
        extra += math.comb(m, i) * (-1) ** i * (math.exp(-i) - np.exp(-i * ub)) / i
    out[~small] = g1 + extra
    return out


def frame_weights(log_xi: np.ndarray, m: int, kappa: float, rho: int,
                  rule: str = "trapezoid") -> np.ndarray:
    """Product-integration weights M with (M @ W^p)_i ~ frame integral at node i.

    The kernel (1 - e^(sigma - s))^m e^(rho sigma) is integrated exactly on
    each interval against the mean of the endpoint values of W^p
    ("trapezoid") or against the left value ("lower").  Iterates increase
    in xi, so "lower" never overestimates the frame.
    """
    if rule not in ("trapezoid", "lower"):
        raise ValueError(f"unknown rule {rule!r}")
    left = 1.0 if rule == "lower" else 0.5
    s = np.asarray(log_xi, dtype=float)
    N = s.size
    M = np.zeros((N, N))
    for i in range(1, N):
        sa, sb = s[:i], s[1:i + 1]
        ua, ub = s[i] - sa, s[i] - sb
        if rho == 0:
            seg = (sb - sa) + _G_minus_u(ua, m) - _G_minus_u(ub, m)
            seg = seg * math.exp(-kappa * s[i])
        else:
            ha = (-np.expm1(-ua)) ** (m + 1)
            hb = (-np.expm1(-ub)) ** (m + 1)
            seg = (ha - hb) / (m + 1) * math.exp((1 - kappa) * s[i])
        M[i, :i] += left * seg
        M[i, 1:i + 1] += (1 - left) * seg
    return M


@dataclass
class FrameRun:
    case: BlowupCase
    log_xi: np.ndarray
    W: np.ndarray
    rounds: int
    log_xi_divergence: float | None
    diverged_round: int | None

    @property
    def diverged(self) -> bool:
        return self.log_xi_divergence is not None


def frame_grid(spec: ProblemSpec, case, log_xi_max: float, count: int = 2000,
               base: BaseConstants | None = None, first: float = 1e-3) -> np.ndarray:
    """Grid in log xi from the base point, geometric in the distance to it."""
    case = _check_case(spec, case)
    base = base_constants(spec, case) if base is None else base
    s0 = math.log(frame_base_point(spec, case, base))
    span = log_xi_max - s0
    if not span > 0:
        raise ValueError("log_xi_max must exceed the base point")
    offs = np.geomspace(min(first, span / 2), span, count - 1)
    return np.concatenate([[s0], s0 + offs])


def iterate_frame_numeric(spec: ProblemSpec, case=None, log_xi_grid=None, j_max: int = 50,
                          base: BaseConstants | None = None,
                          level: float = DIVERGENCE_LEVEL, rule: str = "trapezoid") -> FrameRun:
    """Iterate W_{j+1} = RHS[W_j] from W_1 = source for up to j_max rounds.

    Reports the smallest grid point where some iterate exceeds `level`; the
    iterates increase with j, so later rounds can only move it down.

    `log_xi_grid` holds log xi and must start at the case's base point.
    """
    case = _check_case(spec, case)
    base = base_constants(spec, case) if base is None else base
    _check_admissible(spec, case, base)
    if log_xi_grid is None:
        th = blowup_threshold(spec, case, base)
        log_xi_grid = frame_grid(spec, case, th.log_xi0 + math.log(10.0), base=base)
    s = np.asarray(log_xi_grid, dtype=float)
    s0 = math.log(frame_base_point(spec, case, base))
    if abs(s[0] - s0) > 1e-9 * max(1.0, abs(s0)) or np.any(np.diff(s) <= 0):
        raise ValueError("grid must be increasing and start at the base point")
    m, kappa, rho = _frame_shape(spec, case)
    M = frame_weights(s, m, kappa, rho, rule) * base.coef
    src = base.source2 * spec.eps ** spec.p
    clip = 10 * level
    W = np.full(s.size, src)
    first, div_round, j = s.size, None, 1
    for j in range(2, j_max + 1):
        Wn = np.minimum(src + M @ W ** spec.p, clip)
        hit = np.nonzero(Wn > level)[0]
        done = np.allclose(Wn, W, rtol=1e-14, atol=0)
        W = Wn
        if hit.size and hit[0] < first:
            first, div_round = int(hit[0]), j
        if done:
            break
    div_at = float(s[first]) if first < s.size else None
    return FrameRun(case, s, W, j, div_at, div_round)


def frame_supersolution_floor(spec: ProblemSpec, case=None,
                              base: BaseConstants | None = None) -> float:
    """log xi below which the frame (with equality) stays finite.

    The kernel is at most 1, so the frame solution is dominated by the
    solution of the integral equation without it; in the critical cases
    that is the ODE Y' = coef Y^p in log xi, which blows up after a log
    distance (source)^(1-p) / (coef (p-1)) from the base point.
    """
    case = _check_case(spec, case)
    if not case.critical:
        raise ValueError("the log-distance floor is only available in the critical cases")
    base = base_constants(spec, case) if base is None else base
    src = base.source2 * spec.eps ** spec.p
    dist = math.exp((1 - spec.p) * math.log(src) - math.log(base.coef * (spec.p - 1)))
    return math.log(frame_base_point(spec, case, base)) + dist


# ------------------------------------------------------------ frame predicate

@dataclass
class FramePredicateReport:
    points: np.ndarray
    u: np.ndarray
    rhs: np.ndarray
    source: np.ndarray
    tol: float

    @property
    def violations(self) -> int:
        return int(np.sum(self.u < self.rhs - self.tol))

    @property
    def holds(self) -> bool:
        return self.violations == 0


def frame_source_term(spec: ProblemSpec, r, t, base: BaseConstants) -> np.ndarray:
    """The eps^p term of the pointwise frame in Sigma_0."""
    n, p = spec.n, spec.p
    r = np.asarray(r, dtype=float)
    d = np.asarray(t, dtype=float) - r
    if n % 2:
        return base.source1 * d ** ((3 * n - 5) / 2 - (n - 1) * p / 2) / r ** ((3 * n - 7) / 2) * spec.eps ** p
    return base.source1 * d ** ((3 * n - 3) / 2 - (n - 1) * p / 2) / r ** ((3 * n - 5) / 2) * spec.eps ** p


def sigma0_points(t_max: float, k: float, count: int = 40, seed: int = 0) -> np.ndarray:
    """Halton points of Sigma_0 = {2k <= t - r <= r} with t <= t_max."""
    from scipy.stats import qmc

    if t_max < 4 * k:
        raise ValueError("horizon too short to reach Sigma_0 (need t_max >= 4k)")
    pts = qmc.Halton(2, seed=seed).random(8 * count)
    t = 4 * k + pts[:, 0] * (t_max - 4 * k)
    d = 2 * k + pts[:, 1] * (t / 2 - 2 * k)
    out = np.column_stack([t - d, t])
    return out[:count]


def frame_lower_bound_odd(u_grid, spec: ProblemSpec, points=None, tol: float = 1e-12,
                          q: int = 12, base: BaseConstants | None = None, u0=None) -> FramePredicateReport:
    """Check u >= frame RHS at points of Sigma_0.

    `u_grid` is the full solution u = U + eps u0 as a callable (a
    GridFunction works).  For even n the frame also carries eps u0, which is
    evaluated with `u0` (defaults to the exact free solution).
    """
    n, p, k = spec.n, spec.p, spec.k
    case = _check_case(spec, None)
    base = base_constants(spec, case) if base is None else base
    if points is None:
        t_max = float(getattr(u_grid, "t_nodes", [0.0])[-1])
        r_max = float(getattr(u_grid, "r_nodes", [0.0])[-1])
        points = sigma0_points(t_max, k)
        points = points[points[:, 0] <= r_max]
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.shape[0] == 0:
        raise ValueError("no sample points in Sigma_0")
    r, t = points[:, 0], points[:, 1]
    d = t - r
    if np.any(d < 2 * k - 1e-12) or np.any(d > r + 1e-12):
        raise ValueError("points must lie in Sigma_0 = {2k <= t - r <= r}")
    x, wq = np.polynomial.legendre.leggauss(q)
    e = (n - 3) / 2 if n % 2 else (n - 2) / 2
    u_vals = np.asarray(u_grid(r, t), dtype=float)
    rhs = np.empty(r.size)
    for i in range(r.size):
        ri, ti, di = r[i], t[i], d[i]
        b = 2 * k + 0.5 * (x + 1) * (di - 2 * k)
        wb = 0.5 * (di - 2 * k) * wq
        lo = 2 * di + b
        hi = ti + ri
        total = 0.0
        for bb, wbb, aa_lo in zip(b, wb, lo):
            if hi <= aa_lo:
                continue
            a = aa_lo + 0.5 * (x + 1) * (hi - aa_lo)
            wa = 0.5 * (hi - aa_lo) * wq
            lam, tau = 0.5 * (a - bb), 0.5 * (a + bb)
            f = np.abs(np.asarray(u_grid(lam, tau), dtype=float)) ** p
            total += wbb * (di - bb) ** e * np.sum(wa * (hi - a) ** e * f)
        total *= 0.5
        if n % 2:
            pre = base.C * 2 ** ((n - 1) / 2) * di ** ((n - 1) / 2) / ri ** ((3 * n - 7) / 2)
        else:
            pre = base.C * 2 ** ((n - 1) / 2) * di ** ((n - 1) / 2) / ((n - 1) * ri ** ((3 * n - 5) / 2))
        rhs[i] = pre * total
    src = frame_source_term(spec, r, t, base)
    rhs = rhs + src
    if n % 2 == 0:
        if u0 is None:
            from .propagator import profile_from_spec, u0 as u0_fn

            data = profile_from_spec(spec)
            u0 = lambda rr, tt: u0_fn(data, rr, tt, n)
        rhs = rhs + spec.eps * np.asarray(u0(r, t), dtype=float)
    return FramePredicateReport(points, u_vals, rhs, src, tol)
