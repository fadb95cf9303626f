"""Shared MCMC plumbing: configuration, adaptive proposals, chain output."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..approx import DEFAULT_M0
from ..errors import ConfigError, ContractError, DomainError
from ..numerics import RngStream, derive_stream_id

__all__ = [
    "McmcConfig",
    "Restriction",
    "ChainOutput",
    "AdaptiveScale",
    "run_chains",
    "reflect",
    "canonical_order",
    "theta_step",
]

MIN_RETAINED = 100


@dataclass(frozen=True)
class McmcConfig:
    """Sampling budget. ``burn_in`` defaults to half of ``iterations``."""

    iterations: int = 100_000
    burn_in: int | None = None
    thin: int = 10
    seed: int = 0
    chains: int = 2
    target_accept: float = 0.44
    adapt_window: int = 50
    stream_base: int = 0

    def __post_init__(self):
        if self.burn_in is None:
            object.__setattr__(self, "burn_in", self.iterations // 2)
        for name in ("iterations", "burn_in", "thin", "chains", "adapt_window", "seed", "stream_base"):
            v = getattr(self, name)
            if int(v) != v:
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if self.iterations < 1 or self.burn_in < 0 or self.burn_in >= self.iterations:
            raise ConfigError(f"need 0 <= burn_in < iterations, got burn_in={self.burn_in}, iterations={self.iterations}")
        if self.thin < 1:
            raise ConfigError(f"thin must be >= 1, got {self.thin}")
        if self.chains < 1:
            raise ConfigError(f"chains must be >= 1, got {self.chains}")
        if self.adapt_window < 1:
            raise ConfigError(f"adapt_window must be >= 1, got {self.adapt_window}")
        if not 0.0 < self.target_accept < 1.0:
            raise ConfigError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.retained < MIN_RETAINED:
            raise ConfigError(
                f"config retains {self.retained} draws per chain; at least {MIN_RETAINED} required"
            )

    @property
    def retained(self) -> int:
        return (self.iterations - self.burn_in) // self.thin

    def is_kept(self, it: int) -> bool:
        k = it - self.burn_in
        return k >= 0 and (k + 1) % self.thin == 0 and k // self.thin < self.retained

    def chain_stream(self, chain: int) -> RngStream:
        return RngStream(self.seed, derive_stream_id(self.stream_base, chain))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Restriction:
    """Cap on informativeness: keep ``a_hat(sigma2, tau2, m0) < a_floor``."""

    a_floor: float
    m0: int = DEFAULT_M0

    def __post_init__(self):
        a = float(self.a_floor)
        if not math.isfinite(a) or a <= 0.0:
            raise DomainError(f"restriction cap must be finite and > 0, got {self.a_floor!r}")
        if int(self.m0) != self.m0 or self.m0 < 1:
            raise DomainError(f"restriction m0 must be an integer >= 1, got {self.m0!r}")
        object.__setattr__(self, "a_floor", a)
        object.__setattr__(self, "m0", int(self.m0))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class ChainOutput:
    """Retained draws, arrays shaped ``(chains, draws, ...)``.

    Per-region parameters carry a trailing axis aligned with ``region_ids``.
    """

    model: str
    region_ids: tuple[str, ...]
    draws: Mapping[str, np.ndarray]
    acceptance: Mapping[str, np.ndarray]
    config: McmcConfig
    m0: int | None = None
    restriction: Restriction | None = None
    fixed: Mapping[str, object] = field(default_factory=dict)
    islands: tuple[str, ...] = ()

    def __post_init__(self):
        for arr in list(self.draws.values()) + list(self.acceptance.values()):
            arr.flags.writeable = False

    @property
    def n_chains(self) -> int:
        return self.config.chains

    @property
    def n_draws(self) -> int:
        return self.config.retained

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.draws[name]
        except KeyError:
            raise ContractError(f"{self.model} chain has no parameter {name!r}") from None

    def pooled(self, name: str) -> np.ndarray:
        arr = self[name]
        return arr.reshape(-1, *arr.shape[2:])

    def region_index(self, region_id: str) -> int:
        return self.region_ids.index(region_id)


class AdaptiveScale:
    """Per-coordinate random-walk scales tuned towards a target acceptance rate.

    Scales move on the log scale once per window by
    ``min(0.1, 1/sqrt(window index))``; after ``freeze()`` they stay fixed.
    """

    def __init__(self, initial, target: float, window: int):
        self.log_scale = np.log(np.asarray(initial, dtype=float)).copy()
        self.target = target
        self.window = window
        self._acc = np.zeros_like(self.log_scale)
        self._count = 0
        self._batches = 0
        self.frozen = False
        self.kept_acc = np.zeros_like(self.log_scale)
        self.kept_n = 0

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def record(self, accepted, kept_phase: bool) -> None:
        if kept_phase:
            self.kept_acc += accepted
            self.kept_n += 1
            return
        if self.frozen:
            return
        self._acc += accepted
        self._count += 1
        if self._count == self.window:
            self._batches += 1
            delta = min(0.1, 1.0 / math.sqrt(self._batches))
            rate = self._acc / self.window
            self.log_scale += np.where(rate > self.target, delta, -delta)
            self._acc[...] = 0.0
            self._count = 0

    def freeze(self) -> None:
        self.frozen = True

    def acceptance_rate(self) -> np.ndarray:
        if self.kept_n == 0:
            return np.full_like(self.kept_acc, np.nan)
        return self.kept_acc / self.kept_n


def reflect(x, lower: float, upper: float):
    """Fold ``x`` back into ``[lower, upper]`` by reflection at the bounds."""
    width = upper - lower
    y = np.mod(np.asarray(x, dtype=float) - lower, 2.0 * width)
    y = np.where(y > width, 2.0 * width - y, y)
    return lower + y


def canonical_order(data):
    """Data sorted by region id, plus the permutation mapping back to input order.

    Samplers work in sorted order so that permuting the input rows only
    permutes the per-region output.
    """
    order = sorted(range(data.size), key=lambda k: data.region_ids[k])
    inverse = np.empty(len(order), dtype=int)
    inverse[order] = np.arange(len(order))
    return data.take(order), inverse


def theta_step(theta, y, n, eta, prec, scale, gen):
    """Vectorized random-walk Metropolis on log-rates.

    Target per region: y*t - n*exp(t) - prec*(t - eta)^2/2. Regions are
    conditionally independent given ``eta`` so one joint sweep is exact.
    Returns the new state and the acceptance indicators.
    """
    prop = theta + scale * gen.standard_normal(theta.shape)
    log_r = (
        y * (prop - theta)
        - n * (np.exp(prop) - np.exp(theta))
        - 0.5 * prec * ((prop - eta) ** 2 - (theta - eta) ** 2)
    )
    acc = np.log(gen.random(theta.shape)) < log_r
    return np.where(acc, prop, theta), acc


ChainFn = Callable[[McmcConfig, int, RngStream], tuple[dict, dict]]


def run_chains(cfg: McmcConfig, chain_fn: ChainFn) -> tuple[dict, dict]:
    """Run ``cfg.chains`` chains sequentially and stack their outputs.

    Each chain draws only from its own stream, so results do not depend on
    execution order.
    """
    per_draws, per_acc = [], []
    for c in range(cfg.chains):
        d, a = chain_fn(cfg, c, cfg.chain_stream(c))
        per_draws.append(d)
        per_acc.append(a)
    draws = {k: np.stack([d[k] for d in per_draws]) for k in per_draws[0]}
    acc = {k: np.stack([np.asarray(a[k], dtype=float) for a in per_acc]) for k in per_acc[0]}
    return draws, acc
