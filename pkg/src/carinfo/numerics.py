"""Distribution helpers used by every sampler.

Gamma distributions are parameterized by shape ``a`` and *rate* ``b``;
inverse-gamma distributions by shape and *scale* (so that
``IG(1, 1/100)`` has mode ``1/200``).
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv, gammainc, gammaln, ndtr, ndtri

from .errors import DomainError, SamplerError

__all__ = [
    "GammaParams",
    "LognormalParams",
    "RngStream",
    "derive_stream_id",
    "gamma_logpdf",
    "gamma_cdf",
    "gamma_quantile",
    "inverse_gamma_logpdf",
    "inverse_gamma_mode",
    "draw_gamma",
    "draw_inverse_gamma",
    "draw_normal",
    "draw_poisson",
    "draw_uniform",
    "draw_truncated_gamma",
    "draw_truncated_inverse_gamma",
    "draw_truncated_normal",
]

_U64 = 2**64


def _positive(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value <= 0.0:
        raise DomainError(f"{name} must be finite and > 0, got {value!r}")
    return value


@dataclass(frozen=True)
class GammaParams:
    """Gamma(a, b) with shape ``a`` (prior events) and rate ``b`` (prior exposure)."""

    a: float
    b: float

    def __post_init__(self):
        object.__setattr__(self, "a", _positive("gamma shape a", self.a))
        object.__setattr__(self, "b", _positive("gamma rate b", self.b))

    @property
    def mean(self) -> float:
        return self.a / self.b

    @property
    def variance(self) -> float:
        return self.a / self.b**2


@dataclass(frozen=True)
class LognormalParams:
    """log(x) ~ N(mu, sigma2)."""

    mu: float
    sigma2: float

    def __post_init__(self):
        mu = float(self.mu)
        if not math.isfinite(mu):
            raise DomainError(f"lognormal mu must be finite, got {mu!r}")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", _positive("lognormal sigma2", self.sigma2))

    @property
    def mean(self) -> float:
        return math.exp(self.mu + self.sigma2 / 2.0)

    @property
    def variance(self) -> float:
        return math.expm1(self.sigma2) * math.exp(2.0 * self.mu + self.sigma2)


def derive_stream_id(*labels) -> int:
    """Map an arbitrary tuple of labels to a stable 64-bit stream id."""
    digest = hashlib.blake2b(repr(labels).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


@dataclass
class RngStream:
    """A single-owner random stream identified by ``(seed, stream_id)``.

    Two streams built from the same pair produce bit-identical sequences;
    streams with different ids are statistically independent (they are
    distinct children of the same ``SeedSequence``).
    """

    seed: int
    stream_id: int = 0
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            value = getattr(self, name)
            if int(value) != value or not 0 <= int(value) < _U64:
                raise DomainError(f"{name} must be an unsigned 64-bit integer, got {value!r}")
            setattr(self, name, int(value))
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(seq))

    def child(self, *labels) -> "RngStream":
        """A new independent stream keyed on this stream's id and ``labels``."""
        return RngStream(self.seed, derive_stream_id(self.stream_id, *labels))


# -- densities ---------------------------------------------------------------


def gamma_logpdf(x, a, b):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    out = a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(safe) - b * safe
    return np.where(x > 0.0, out, -np.inf)


def gamma_cdf(x, params: GammaParams):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0.0, gammainc(params.a, params.b * np.maximum(x, 0.0)), 0.0)


def inverse_gamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    safe = np.where(x > 0.0, x, 1.0)
    out = shape * np.log(scale) - gammaln(shape) - (shape + 1.0) * np.log(safe) - scale / safe
    return np.where(x > 0.0, out, -np.inf)


def inverse_gamma_mode(shape: float, scale: float) -> float:
    return _positive("scale", scale) / (_positive("shape", shape) + 1.0)


# -- quantile ----------------------------------------------------------------


def _standard_gamma_ppf(a: float, p: float) -> float:
    """Solve P(a, x) = p for x, Newton on log(x) guarded by a bisection bracket."""
    log_norm = gammaln(a)

    def f(t):
        return float(gammainc(a, math.exp(min(t, 709.0)))) - p

    # initial guess: small-x series for tiny p, Wilson-Hilferty otherwise
    if p < 0.05 and a < 5.0:
        t = (math.log(p) + math.log(a) + log_norm) / a
    else:
        z = math.sqrt(2.0) * float(erfinv(2.0 * p - 1.0))
        c = 1.0 / (9.0 * a)
        t = math.log(max(a * (1.0 - c + z * math.sqrt(c)) ** 3, 1e-300))
    t = min(max(t, -745.0), 709.0)

    # bracket [lo, hi] on the log scale
    step = 1.0
    lo = hi = t
    if f(t) < 0.0:
        while f(hi) < 0.0:
            if hi >= 709.0:
                raise DomainError(f"gamma quantile at p={p!r} overflows for shape {a!r}")
            lo, hi = hi, min(hi + step, 709.0)
            step *= 2.0
    else:
        while f(lo) >= 0.0:
            lo, hi = lo - step, lo
            step *= 2.0
            if lo < -745.0:
                # below the smallest subnormal double
                return 0.0

    t = min(max(t, lo), hi)
    for _ in range(400):
        ft = f(t)
        if ft == 0.0:
            break
        if ft < 0.0:
            lo = t
        else:
            hi = t
        x = math.exp(t)
        slope = math.exp(a * t - x - log_norm)  # d P / d log x
        t_new = t - ft / slope if slope > 1e-300 else math.nan
        if not lo < t_new < hi:
            t_new = 0.5 * (lo + hi)
        if abs(t_new - t) <= 1e-15 * max(1.0, abs(t)) or hi - lo <= 1e-15 * max(1.0, abs(t)):
            t = t_new
            break
        t = t_new
    return math.exp(t)


def gamma_quantile(params: GammaParams, p: float) -> float:
    """Value x with P(X <= x) = p for X ~ Gamma(a, rate b)."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p!r}")
    return _standard_gamma_ppf(params.a, p) / params.b


# -- variates ----------------------------------------------------------------


def draw_gamma(params: GammaParams, rng: RngStream, size=None):
    # numpy's generator is Marsaglia-Tsang squeeze/rejection, boosted for a < 1
    return rng.generator.gamma(params.a, 1.0 / params.b, size=size)


def draw_inverse_gamma(shape: float, scale: float, rng: RngStream, size=None):
    shape = _positive("inverse-gamma shape", shape)
    scale = _positive("inverse-gamma scale", scale)
    return scale / rng.generator.standard_gamma(shape, size=size)


def draw_normal(mean: float, sd: float, rng: RngStream, size=None):
    mean = float(mean)
    if not math.isfinite(mean):
        raise DomainError(f"normal mean must be finite, got {mean!r}")
    return rng.generator.normal(mean, _positive("normal sd", sd), size=size)


def draw_poisson(mean, rng: RngStream, size=None):
    m = np.asarray(mean, dtype=float)
    if np.any(~np.isfinite(m)) or np.any(m < 0.0):
        raise DomainError("poisson mean must be finite and >= 0")
    return rng.generator.poisson(m, size=size)


def draw_uniform(low: float, high: float, rng: RngStream, size=None):
    low, high = float(low), float(high)
    if not (math.isfinite(low) and math.isfinite(high) and low < high):
        raise DomainError(f"uniform bounds must satisfy low < high, got ({low!r}, {high!r})")
    return rng.generator.uniform(low, high, size=size)


def draw_truncated_gamma(
    shape: float,
    rate: float,
    rng: RngStream,
    lower: float = 0.0,
    upper: float = math.inf,
    max_attempts: int = 1000,
) -> float:
    """One Gamma(shape, rate) draw restricted to ``(lower, upper)``.

    Plain rejection while the interval holds at least half the mass, for at
    most ``max_attempts`` proposals; otherwise inverse-CDF sampling on the
    truncated interval.
    """
    params = GammaParams(shape, rate)
    if not lower < upper:
        raise DomainError(f"empty truncation interval ({lower!r}, {upper!r})")
    gen = rng.generator
    c_lo = float(gamma_cdf(lower, params)) if lower > 0.0 else 0.0
    c_hi = float(gamma_cdf(upper, params)) if math.isfinite(upper) else 1.0
    if not c_hi > c_lo:
        raise SamplerError(
            f"truncated gamma(shape={shape:.6g}, rate={rate:.6g}) has no mass on "
            f"({lower:.6g}, {upper:.6g})"
        )
    if c_hi - c_lo >= 0.5:
        for _ in range(max_attempts):
            x = gen.gamma(params.a, 1.0 / params.b)
            if lower < x < upper:
                return float(x)
    for _ in range(max_attempts):
        u = c_lo + (c_hi - c_lo) * gen.random()
        if 0.0 < u < 1.0:
            x = gamma_quantile(params, u)
            if lower < x < upper:
                return x
    raise SamplerError(
        f"inverse-CDF fallback failed for gamma(shape={shape:.6g}, rate={rate:.6g}) "
        f"on ({lower:.6g}, {upper:.6g})"
    )


def draw_truncated_inverse_gamma(
    shape: float,
    scale: float,
    rng: RngStream,
    lower: float = 0.0,
    upper: float = math.inf,
    max_attempts: int = 1000,
) -> float:
    """One IG(shape, scale) draw restricted to ``(lower, upper)``."""
    # x ~ IG(shape, scale)  <=>  1/x ~ Gamma(shape, rate=scale)
    g_upper = math.inf if lower <= 0.0 else 1.0 / lower
    g_lower = 0.0 if not math.isfinite(upper) else 1.0 / upper
    try:
        g = draw_truncated_gamma(shape, scale, rng, g_lower, g_upper, max_attempts)
    except SamplerError as exc:
        raise SamplerError(
            f"truncated inverse-gamma(shape={shape:.6g}, scale={scale:.6g}) failed at "
            f"constraint boundary ({lower:.6g}, {upper:.6g}): {exc}"
        ) from exc
    return 1.0 / g


def draw_truncated_normal(mean: float, sd: float, lower: float, upper: float, rng: RngStream) -> float:
    sd = _positive("normal sd", sd)
    a, b = ndtr((lower - mean) / sd), ndtr((upper - mean) / sd)
    if not b > a:
        raise SamplerError(f"truncated normal N({mean:.6g}, {sd:.6g}^2) has no mass on ({lower}, {upper})")
    x = mean + sd * ndtri(a + (b - a) * rng.generator.random())
    return float(min(max(x, lower), upper))
