"""Poisson-gamma models: the conjugate update and the hierarchical fit."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

from ..data import CountData
from ..errors import ConfigError, DomainError
from ..numerics import GammaParams, RngStream
from .base import AdaptiveScale, ChainOutput, McmcConfig, canonical_order, reflect, run_chains

__all__ = ["posterior_poisson_gamma", "fit_poisson_gamma_hier"]

A_BOUNDS = (0.0, 10.0)
LAMBDA0_BOUNDS = (0.0, 1e-3)


def posterior_poisson_gamma(y: int, n: float, prior: GammaParams) -> GammaParams:
    """Gamma(a, b) prior, y ~ Poisson(n * lambda)  ->  Gamma(a + y, b + n)."""
    if int(y) != y or y < 0:
        raise DomainError(f"y must be a non-negative integer, got {y!r}")
    if not n > 0:
        raise DomainError(f"n must be > 0, got {n!r}")
    return GammaParams(prior.a + y, prior.b + n)


def _resolve(name, bounds, fixed):
    lo, hi = map(float, bounds)
    if name in fixed:
        v = float(fixed[name])
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"fixed {name} must be finite and > 0, got {fixed[name]!r}")
        return lo, hi, v
    if lo == hi:
        if not lo > 0:
            raise DomainError(f"degenerate bounds for {name} must be > 0, got {bounds!r}")
        return lo, hi, lo
    if not 0.0 <= lo < hi:
        raise ConfigError(f"bounds for {name} must satisfy 0 <= low < high, got {bounds!r}")
    return lo, hi, None


def fit_poisson_gamma_hier(
    data: CountData,
    cfg: McmcConfig,
    a_bounds=A_BOUNDS,
    lambda0_bounds=LAMBDA0_BOUNDS,
    fixed: dict | None = None,
) -> ChainOutput:
    """Hierarchical Poisson-gamma fit.

    lambda_i ~ Gamma(a, a/lambda0), a ~ U(a_bounds), lambda0 ~ U(lambda0_bounds).
    The rates are drawn from their conjugate conditionals; ``a`` and
    ``lambda0`` move by reflecting random-walk Metropolis. Either
    hyperparameter can be pinned through ``fixed`` or degenerate bounds.
    """
    fixed = dict(fixed or {})
    a_lo, a_hi, a_fix = _resolve("a", a_bounds, fixed)
    l_lo, l_hi, l_fix = _resolve("lambda0", lambda0_bounds, fixed)
    dc, inverse = canonical_order(data)
    y = dc.y.astype(float)
    n = dc.n
    n_reg = dc.size

    def log_cond(a, lam0, s_log, s_lin):
        # log prod_i Gamma(lambda_i | a, a / lam0), dropping terms free of (a, lam0)
        b = a / lam0
        return n_reg * (a * math.log(b) - gammaln(a)) + a * s_log - b * s_lin

    def chain(cfg: McmcConfig, c: int, rng: RngStream):
        gen = rng.generator
        if a_fix is None:
            a = float(gen.uniform(a_lo + 0.1 * (a_hi - a_lo), a_hi - 0.1 * (a_hi - a_lo)))
        else:
            a = a_fix
        if l_fix is None:
            crude = (y.sum() + 0.5) / n.sum()
            lam0 = float(np.clip(crude * math.exp(0.1 * gen.standard_normal()), l_lo + 0.02 * (l_hi - l_lo), l_hi - 0.02 * (l_hi - l_lo)))
        else:
            lam0 = l_fix
        a_prop = AdaptiveScale(0.1 * (a_hi - a_lo) if a_fix is None else 1.0, cfg.target_accept, cfg.adapt_window)
        l_prop = AdaptiveScale(0.1 * lam0, cfg.target_accept, cfg.adapt_window)

        keep = cfg.retained
        out = {
            "lambda": np.empty((keep, n_reg)),
            "a": np.empty(keep),
            "lambda0": np.empty(keep),
            "b": np.empty(keep),
        }
        k = 0
        for it in range(cfg.iterations):
            kept_phase = it >= cfg.burn_in
            if it == cfg.burn_in:
                a_prop.freeze()
                l_prop.freeze()
            b = a / lam0
            lam = gen.gamma(y + a, 1.0 / (n + b))
            s_log = float(np.log(lam).sum())
            s_lin = float(lam.sum())
            if a_fix is None:
                cur = log_cond(a, lam0, s_log, s_lin)
                prop = float(reflect(a + a_prop.scale * gen.standard_normal(), a_lo, a_hi))
                ok = a_lo < prop < a_hi and math.log(gen.random()) < log_cond(prop, lam0, s_log, s_lin) - cur
                if ok:
                    a = prop
                a_prop.record(float(ok), kept_phase)
            if l_fix is None:
                cur = log_cond(a, lam0, s_log, s_lin)
                prop = float(reflect(lam0 + l_prop.scale * gen.standard_normal(), l_lo, l_hi))
                ok = l_lo < prop < l_hi and math.log(gen.random()) < log_cond(a, prop, s_log, s_lin) - cur
                if ok:
                    lam0 = prop
                l_prop.record(float(ok), kept_phase)
            if cfg.is_kept(it):
                out["lambda"][k] = lam
                out["a"][k] = a
                out["lambda0"][k] = lam0
                out["b"][k] = a / lam0
                k += 1
        acc = {
            "a": float(a_prop.acceptance_rate()) if a_fix is None else 1.0,
            "lambda0": float(l_prop.acceptance_rate()) if l_fix is None else 1.0,
            "lambda": 1.0,
        }
        return out, acc

    draws, acc = run_chains(cfg, chain)
    draws["lambda"] = draws["lambda"][:, :, inverse]
    draws["a_hat"] = draws["a"].copy()
    return ChainOutput(
        model="pg",
        region_ids=data.region_ids,
        draws=draws,
        acceptance=acc,
        config=cfg,
        fixed={k: v for k, v in (("a", a_fix), ("lambda0", l_fix)) if v is not None},
    )
