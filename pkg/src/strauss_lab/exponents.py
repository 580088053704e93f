"""Exponents, weights and a-priori estimate functions.

Everything here is closed-form arithmetic on the parameters (n, p, eps, k).
The regime tests compare p against (n+1)/(n-1) and against the Strauss
exponent with an absolute tolerance of ``REGIME_TOL``; ties go to the
critical branch, which carries the larger budget.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

REGIME_TOL = 1e-12


class Nonlinearity(str, enum.Enum):
    ABS_POWER = "abs"
    SIGNED_POWER = "signed"
    QUADRATIC = "quadratic"


class Regime(str, enum.Enum):
    ABOVE = "above"
    AT = "at"
    BELOW = "below"


class Criticality(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    CRITICAL = "critical"
    SUBCRITICAL = "subcritical"


@dataclass(frozen=True)
class ProblemSpec:
    """Identity of one experiment.

    ``k0`` and ``k1`` default to the admissible blow-up radii for ``n``
    (see :func:`strauss_lab.propagator.admissible_k0`) when left as None.
    """

    n: int
    p: float
    eps: float
    k: float = 1.0
    nonlinearity: Nonlinearity = Nonlinearity.ABS_POWER
    A: float = 1.0
    k0: float | None = None
    k1: float | None = None
    profile: str = "bump"

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 3:
            raise ValueError(f"n must be an integer >= 3, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "nonlinearity", Nonlinearity(self.nonlinearity))
        if not self.p > 1:
            raise ValueError(f"p must exceed 1, got {self.p}")
        if not self.eps >= 0:
            raise ValueError(f"eps must be nonnegative, got {self.eps}")
        if not self.k > 0:
            raise ValueError(f"k must be positive, got {self.k}")
        if not self.A > 0:
            raise ValueError(f"A must be positive, got {self.A}")
        if self.k0 is None:
            from .propagator import admissible_k0

            object.__setattr__(self, "k0", admissible_k0(self.n, self.k))
        if self.k1 is None:
            object.__setattr__(self, "k1", 0.5 * (self.k0 + self.k))
        if not 0 < self.k0 < self.k1 < self.k:
            raise ValueError(
                f"need 0 < k0 < k1 < k, got k0={self.k0}, k1={self.k1}, k={self.k}"
            )
        if self.nonlinearity is Nonlinearity.QUADRATIC and (self.n, self.p) != (4, 2):
            raise ValueError("the quadratic nonlinearity A*s^2 is only allowed for n=4, p=2")

    def with_eps(self, eps: float) -> "ProblemSpec":
        return ProblemSpec(self.n, self.p, eps, self.k, self.nonlinearity, self.A,
                           self.k0, self.k1, self.profile)

    @property
    def q(self) -> float:
        return q_exponent(self.p, self.n)

    @property
    def regime(self) -> Regime:
        return weight_regime(self.p, self.n).regime

    @property
    def criticality(self) -> Criticality:
        return criticality(self.p, self.n)


@dataclass(frozen=True)
class WeightRegime:
    regime: Regime
    q: float

    def __post_init__(self):
        if (self.regime is Regime.AT) != (self.q == 0.0):
            raise ValueError("inconsistent weight regime and q")


def gamma(p: float, n: int) -> float:
    return 2.0 + (n + 1) * p - (n - 1) * p * p


def strauss_exponent(n: int) -> float:
    """Positive root p0(n) of gamma(p, n) = 0."""
    if n < 2:
        raise ValueError("n must be >= 2")
    return (n + 1 + math.sqrt(n * n + 10 * n - 7)) / (2.0 * (n - 1))


def q_exponent(p: float, n: int) -> float:
    return (n - 1) * p / 2.0 - (n + 1) / 2.0


def conformal_exponent(n: int) -> float:
    return (n + 1) / (n - 1)


def weight_regime(p: float, n: int) -> WeightRegime:
    d = p - conformal_exponent(n)
    if abs(d) <= REGIME_TOL:
        return WeightRegime(Regime.AT, 0.0)
    return WeightRegime(Regime.ABOVE if d > 0 else Regime.BELOW, q_exponent(p, n))


def criticality(p: float, n: int) -> Criticality:
    d = p - strauss_exponent(n)
    if abs(d) <= REGIME_TOL:
        return Criticality.CRITICAL
    return Criticality.SUPERCRITICAL if d > 0 else Criticality.SUBCRITICAL


def tau_plus(r, t, k):
    return (np.asarray(t, dtype=float) + r + 2 * k) / k


def tau_minus(r, t, k):
    return (np.asarray(t, dtype=float) - r + 2 * k) / k


def weight_w(r, t, spec: ProblemSpec):
    """Weight of the L-infinity norm; accepts scalars or arrays."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t - r + 2 * spec.k <= 0):
        raise ValueError("weight_w needs t - r + 2k > 0")
    tp = tau_plus(r, t, spec.k)
    tm = tau_minus(r, t, spec.k)
    n = spec.n
    reg = weight_regime(spec.p, n)
    if reg.regime is Regime.ABOVE:
        w = tp ** ((n - 1) / 2) * tm ** reg.q
    elif reg.regime is Regime.AT:
        w = tp ** ((n - 1) / 2) / np.log(4 * tp / tm)
    else:
        w = tp ** ((n - 1) / 2 + reg.q)
    return w[()] if w.ndim == 0 else w


def a_of_eps(eps: float) -> float:
    """The a > 0 solving a^2 eps^2 log(a+1) = 1."""
    if not eps > 0:
        raise ValueError("eps must be positive")

    def f(a):
        return a * a * eps * eps * math.log1p(a) - 1.0

    lo, hi = 1e-8, 1.0 / eps + 10.0
    while f(hi) < 0:
        hi *= 2.0
    return brentq(f, lo, hi, rtol=1e-15, xtol=1e-300, maxiter=500)


def log_ratio(T: float, k: float) -> float:
    """X = (2T + 3k)/k, the common argument of all estimate functions."""
    if T < 0:
        raise ValueError("T must be nonnegative")
    return (2.0 * T + 3.0 * k) / k


def default_delta(p: float, a2: float | None = None, a3: float | None = None) -> float:
    delta = 0.5 / p
    if a3 is not None and a2 is not None and a3 > 0 and a2 > -1:
        delta = min(delta, (1 + a2) / (2 * a3))
    return delta


def _same(x: float, y: float) -> bool:
    return abs(x - y) <= REGIME_TOL


def D_of_T(spec: ProblemSpec, T: float) -> tuple[float, str]:
    X = log_ratio(T, spec.k)
    crit = criticality(spec.p, spec.n)
    if crit is Criticality.SUPERCRITICAL:
        return 1.0, "p>p0"
    if crit is Criticality.CRITICAL:
        return math.log(X), "p=p0"
    return X ** (gamma(spec.p, spec.n) / 2), "p<p0"


def E_nu(spec: ProblemSpec, T: float, nu: float, delta: float) -> tuple[float, str]:
    """Odd-dimensional budget for |U0|^(p-nu)|U|^nu."""
    if _same(nu, spec.p):
        return D_of_T(spec, T)
    X = log_ratio(T, spec.k)
    reg = weight_regime(spec.p, spec.n)
    if reg.regime is Regime.ABOVE:
        return 1.0, "above"
    if reg.regime is Regime.AT:
        return X ** (nu * delta), "at"
    return X ** (-nu * reg.q), "below"


def E_nu_a(spec: ProblemSpec, T: float, nu: float, a: int, delta: float) -> tuple[float, str]:
    """Even-dimensional budget; a = 0, 1 selects the tau_minus power of U0."""
    if _same(nu, spec.p):
        return D_of_T(spec, T)
    X = log_ratio(T, spec.k)
    n, p = spec.n, spec.p
    reg = weight_regime(p, n)
    sigma = (p - nu) * (a - (n - 1) / 2)
    mu = sigma - nu * reg.q
    if reg.regime is Regime.ABOVE:
        if mu < -1 - REGIME_TOL:
            return 1.0, "above:mu<-1"
        if _same(mu, -1):
            return math.log(X), "above:mu=-1"
        return X ** (1 + mu), "above:mu>-1"
    if reg.regime is Regime.AT:
        if _same(sigma, -1) and _same(nu, 0):
            return math.log(X), "at:sigma=-1,nu=0"
        if sigma > -1 + REGIME_TOL:
            return X ** (1 + sigma), "at:sigma>-1"
        return X ** (nu * delta), "at:otherwise"
    if sigma < -1 - REGIME_TOL:
        return X ** (-nu * reg.q), "below:sigma<-1"
    if _same(sigma, -1):
        return math.log(X) * X ** (-nu * reg.q), "below:sigma=-1"
    return X ** (1 + mu), "below:sigma>-1"


def F_nu(spec: ProblemSpec, T: float, nu: float, delta: float) -> tuple[float, str]:
    """Even-dimensional budget for |U00|^(p-nu)|U01|^nu."""
    if _same(nu, 0):
        return E_nu_a(spec, T, 0.0, 0, delta)
    if _same(nu, spec.p):
        return E_nu_a(spec, T, 0.0, 1, delta)
    X = log_ratio(T, spec.k)
    kappa = nu - (spec.n - 1) * spec.p / 2
    if kappa < -1 - REGIME_TOL:
        return 1.0, "kappa<-1"
    if _same(kappa, -1):
        return math.log(X), "kappa=-1"
    return X ** (1 + kappa), "kappa>-1"


def E_general(T: float, k: float, a2: float, a3: float, delta: float) -> tuple[float, str]:
    """Budget of the basic estimate for the exponents (a1, a2, a3); a1 enters separately."""
    X = log_ratio(T, k)
    if a2 > -1 + REGIME_TOL:
        return X ** (1 + a2), "a2>-1"
    if a3 > 0:
        return X ** (delta * a3), "a2<=-1,a3>0"
    if _same(a2, -1):
        return math.log(X), "a2=-1,a3=0"
    return 1.0, "a2<-1,a3=0"


@dataclass
class EstimateBudget:
    D: float
    Enu: dict
    Enua: dict
    Fnu: dict
    mu: float
    sigma: float
    kappa: float
    delta: float
    branches: dict = field(default_factory=dict)


def estimate_budget(spec: ProblemSpec, T: float, nu: float, a: int, delta: float | None = None) -> EstimateBudget:
    if delta is None:
        delta = default_delta(spec.p)
    if not delta > 0:
        raise ValueError("delta must be positive")
    if not -REGIME_TOL <= nu <= spec.p + REGIME_TOL:
        raise ValueError("nu must lie in [0, p]")
    if a not in (0, 1):
        raise ValueError("a must be 0 or 1")
    n, p = spec.n, spec.p
    q = weight_regime(p, n).q
    sigma = (p - nu) * (a - (n - 1) / 2)
    mu = sigma - nu * q
    kappa = nu - (n - 1) * p / 2
    D, bD = D_of_T(spec, T)
    E, bE = E_nu(spec, T, nu, delta)
    Ea, bEa = E_nu_a(spec, T, nu, a, delta)
    F, bF = F_nu(spec, T, nu, delta)
    return EstimateBudget(
        D=D, Enu={nu: E}, Enua={(nu, a): Ea}, Fnu={nu: F},
        mu=mu, sigma=sigma, kappa=kappa, delta=delta,
        branches={"D": bD, "Enu": bE, "Enua": bEa, "Fnu": bF},
    )


@dataclass(frozen=True)
class LifespanForm:
    """T ~ eps^exponent (power) or log T ~ eps^exponent (exponential)."""

    kind: str
    exponent: float
    side: str

    def describe(self) -> str:
        c = "c" if self.side == "lower" else "C"
        if self.kind == "power":
            return f"{c}*eps^({self.exponent:.6g})"
        return f"exp({c}*eps^({self.exponent:.6g}))"


def lifespan_exponent(p: float, n: int) -> float:
    return -2.0 * p * (p - 1) / gamma(p, n)


def lifespan_bounds(spec: ProblemSpec) -> tuple[LifespanForm, LifespanForm]:
    n, p = spec.n, spec.p
    crit = criticality(p, n)
    if crit is Criticality.SUPERCRITICAL:
        raise ValueError(f"p={p} > p0({n}): small data exist globally, no finite lifespan bound")
    if n == 3:
        warnings.warn("the lifespan theorems are stated for n >= 4", stacklevel=2)
    if crit is Criticality.CRITICAL:
        e = -p * (p - 1)
        return LifespanForm("exponential", e, "lower"), LifespanForm("exponential", e, "upper")
    e = lifespan_exponent(p, n)
    return LifespanForm("power", e, "lower"), LifespanForm("power", e, "upper")
