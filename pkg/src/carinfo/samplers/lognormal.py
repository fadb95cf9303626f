"""Poisson-lognormal model with exchangeable log-rates."""
from __future__ import annotations

import math

import numpy as np

from ..approx import events_from_log_variance
from ..data import CountData
from ..errors import ConfigError, DomainError
from ..numerics import RngStream, draw_truncated_gamma, draw_truncated_normal
from .base import AdaptiveScale, ChainOutput, McmcConfig, canonical_order, run_chains, theta_step

__all__ = ["fit_poisson_lognormal"]

MU_BOUNDS = (-20.0, 0.0)
GAMMA_BOUNDS = (0.0, 10.0)


def fit_poisson_lognormal(
    data: CountData,
    cfg: McmcConfig,
    mu_bounds=MU_BOUNDS,
    gamma_bounds=GAMMA_BOUNDS,
    fixed: dict | None = None,
) -> ChainOutput:
    """log(lambda_i) ~ N(mu, 1/gamma), mu ~ U(mu_bounds), gamma ~ U(gamma_bounds).

    Log-rates move by adaptive random-walk Metropolis; ``mu`` and the
    precision ``gamma`` are drawn from their full conditionals truncated to
    the uniform supports. ``fixed`` may pin ``mu`` and either ``gamma`` or
    ``sigma2`` (= 1/gamma).

    Draws include ``a_hat = 1/(exp(1/gamma) - 1)``, the matched-gamma
    prior event count.
    """
    fixed = dict(fixed or {})
    if "sigma2" in fixed:
        if "gamma" in fixed:
            raise ConfigError("fix either gamma or sigma2, not both")
        fixed["gamma"] = 1.0 / float(fixed.pop("sigma2"))
    mu_lo, mu_hi = map(float, mu_bounds)
    g_lo, g_hi = map(float, gamma_bounds)
    if not (mu_lo < mu_hi and 0.0 <= g_lo < g_hi):
        raise ConfigError(f"invalid hyperparameter bounds mu={mu_bounds!r}, gamma={gamma_bounds!r}")
    mu_fix = fixed.get("mu")
    g_fix = fixed.get("gamma")
    if mu_fix is not None and not math.isfinite(float(mu_fix)):
        raise DomainError(f"fixed mu must be finite, got {mu_fix!r}")
    if g_fix is not None and not (math.isfinite(float(g_fix)) and float(g_fix) > 0):
        raise DomainError(f"fixed gamma must be finite and > 0, got {g_fix!r}")

    dc, inverse = canonical_order(data)
    y = dc.y.astype(float)
    n = dc.n
    n_reg = dc.size

    def chain(cfg: McmcConfig, c: int, rng: RngStream):
        gen = rng.generator
        theta = np.log((y + 0.5) / n) + 0.1 * gen.standard_normal(n_reg)
        mu = float(mu_fix) if mu_fix is not None else float(np.clip(theta.mean(), mu_lo + 1e-3, mu_hi - 1e-3))
        if g_fix is not None:
            gam = float(g_fix)
        else:
            spread = theta.var() if n_reg > 1 else 1.0
            gam = float(np.clip(1.0 / max(spread, 1e-3), g_lo + 0.01 * (g_hi - g_lo), g_hi - 0.01 * (g_hi - g_lo)))
        prop = AdaptiveScale(2.0 / np.sqrt(y + gam + 1.0), cfg.target_accept, cfg.adapt_window)

        keep = cfg.retained
        out = {"theta": np.empty((keep, n_reg)), "mu": np.empty(keep), "gamma": np.empty(keep)}
        k = 0
        for it in range(cfg.iterations):
            kept_phase = it >= cfg.burn_in
            if it == cfg.burn_in:
                prop.freeze()
            theta, acc = theta_step(theta, y, n, mu, gam, prop.scale, gen)
            prop.record(acc, kept_phase)
            if mu_fix is None:
                mu = draw_truncated_normal(theta.mean(), 1.0 / math.sqrt(n_reg * gam), mu_lo, mu_hi, rng)
            if g_fix is None:
                ss = float(((theta - mu) ** 2).sum())
                gam = draw_truncated_gamma(1.0 + n_reg / 2.0, max(0.5 * ss, 1e-300), rng, g_lo, g_hi)
            if cfg.is_kept(it):
                out["theta"][k] = theta
                out["mu"][k] = mu
                out["gamma"][k] = gam
                k += 1
        return out, {"theta": prop.acceptance_rate()}

    draws, acc = run_chains(cfg, chain)
    draws["theta"] = draws["theta"][:, :, inverse]
    acc["theta"] = acc["theta"][:, inverse]
    draws["lambda"] = np.exp(draws["theta"])
    draws["sigma2"] = 1.0 / draws["gamma"]
    draws["a_hat"] = events_from_log_variance(draws["sigma2"])
    return ChainOutput(
        model="pln",
        region_ids=data.region_ids,
        draws=draws,
        acceptance=acc,
        config=cfg,
        fixed={k: float(v) for k, v in (("mu", mu_fix), ("gamma", g_fix)) if v is not None},
    )
