"""Gamma/lognormal moment matching and the CAR informativeness measure.

A ``Gamma(a, b)`` prior on a Poisson rate is worth ``a`` prior events over
``b`` units of exposure. Matching its first two moments with a lognormal
gives ``sigma2 = log(1 + 1/a)``, so any log-scale variance ``v`` maps back
to ``a = 1 / (exp(v) - 1)`` effective prior events. For the BYM model the
relevant variance is the lower bound on the conditional variance of
``log(lambda_i)`` given the other regions, ``sigma2 + (sigma2 + tau2) / m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .numerics import GammaParams, LognormalParams

__all__ = [
    "DEFAULT_M0",
    "InformativenessQuery",
    "EffectivePriorEvents",
    "gamma_to_lognormal",
    "lognormal_to_gamma",
    "conditional_variance_bound",
    "conditional_precision_bound",
    "informativeness",
    "a_hat",
    "events_from_log_variance",
    "min_log_variance",
]

DEFAULT_M0 = 3

# below this the effective event count is numerical noise
_MIN_LOG_VARIANCE = 1e-12


@dataclass(frozen=True)
class InformativenessQuery:
    sigma2: float
    tau2: float
    m0: int = DEFAULT_M0

    def __post_init__(self):
        for name in ("sigma2", "tau2"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")
            object.__setattr__(self, name, v)
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise DomainError(f"m0 must be an integer >= 1, got {self.m0!r}")
        object.__setattr__(self, "m0", int(self.m0))


@dataclass(frozen=True)
class EffectivePriorEvents:
    a_hat: float
    m0: int | None = None


def gamma_to_lognormal(g: GammaParams) -> LognormalParams:
    sigma2 = math.log1p(1.0 / g.a)
    return LognormalParams(math.log(g.a / g.b) - sigma2 / 2.0, sigma2)


def lognormal_to_gamma(ln: LognormalParams) -> GammaParams:
    denom = math.expm1(ln.sigma2)
    a = 1.0 / denom
    if not math.isfinite(a) or denom == 0.0:
        raise OverflowError(f"sigma2={ln.sigma2!r} too small: matched gamma shape overflows")
    return GammaParams(a, a / math.exp(ln.mu + ln.sigma2 / 2.0))


def conditional_variance_bound(sigma2, tau2, m0):
    """Upper bound on Var(log lambda_i | rest) for a region with ``m0`` neighbours."""
    return sigma2 + (sigma2 + tau2) / m0


def conditional_precision_bound(q: InformativenessQuery) -> float:
    """Lower bound 1 / (sigma2 + (sigma2 + tau2)/m) on the conditional precision.

    The bound is attained when a region neighbours every other region. As
    the neighbours' rates become better determined the precision rises
    towards ``1 / (sigma2 + tau2/m)``; that limit is not computed here.
    """
    return 1.0 / conditional_variance_bound(q.sigma2, q.tau2, q.m0)


def events_from_log_variance(v):
    """Effective prior events ``1/(exp(v) - 1)`` for a log-scale variance ``v``."""
    v = np.asarray(v, dtype=float)
    if np.any(~(v >= _MIN_LOG_VARIANCE)):
        bad = v[~(v >= _MIN_LOG_VARIANCE)].ravel()[0]
        raise OverflowError(
            f"log-scale variance {bad!r} below {_MIN_LOG_VARIANCE}: effective prior events diverge"
        )
    with np.errstate(over="ignore"):  # huge variances carry ~0 events
        out = 1.0 / np.expm1(v)
    return out if out.ndim else float(out)


def a_hat(sigma2, tau2, m0=DEFAULT_M0):
    """Vectorized informativeness over arrays of (sigma2, tau2) draws."""
    return events_from_log_variance(conditional_variance_bound(np.asarray(sigma2, float), np.asarray(tau2, float), m0))


def informativeness(q: InformativenessQuery) -> EffectivePriorEvents:
    return EffectivePriorEvents(float(a_hat(q.sigma2, q.tau2, q.m0)), q.m0)


def min_log_variance(a_floor: float) -> float:
    """Smallest conditional log-variance keeping informativeness below ``a_floor``."""
    if not a_floor > 0.0:
        raise DomainError(f"informativeness cap must be > 0, got {a_floor!r}")
    return math.log1p(1.0 / a_floor)
