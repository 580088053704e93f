"""Numerical laboratory for radial semilinear wave equations in n >= 3."""

from .exponents import (
    Criticality,
    Nonlinearity,
    ProblemSpec,
    Regime,
    gamma,
    lifespan_exponent,
    q_exponent,
    strauss_exponent,
    weight_w,
)

__version__ = "0.1.0"

__all__ = [
    "Criticality",
    "Nonlinearity",
    "ProblemSpec",
    "Regime",
    "gamma",
    "lifespan_exponent",
    "q_exponent",
    "strauss_exponent",
    "weight_w",
]
