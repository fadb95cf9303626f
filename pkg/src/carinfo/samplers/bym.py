"""BYM model: lognormal rates around covariates plus intrinsic CAR effects.

    y_i ~ Poisson(n_i * exp(theta_i))
    theta_i ~ N(x_i' beta + z_i, sigma2)
    z_i | z_-i ~ N(mean of neighbouring z, tau2 / m_i)

with p(beta) flat, sigma2 ~ IG(1, 1/100) and tau2 ~ IG(1, 1/7) (shape,
scale). The ICAR effects are kept at zero mean within every connected
component; islands have no spatial effect.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import solve_triangular

from ..approx import DEFAULT_M0, a_hat, min_log_variance
from ..data import CountData
from ..errors import ConfigError, DomainError, ValidationError
from ..graph import AdjacencyGraph
from ..numerics import RngStream, draw_truncated_inverse_gamma
from .base import AdaptiveScale, ChainOutput, McmcConfig, Restriction, canonical_order, run_chains, theta_step

__all__ = ["fit_bym", "SIGMA2_PRIOR", "TAU2_PRIOR", "BymStructure"]

SIGMA2_PRIOR = (1.0, 1.0 / 100.0)
TAU2_PRIOR = (1.0, 1.0 / 7.0)

# eigenvalues of D - W below this (relative) are treated as the null space
_NULL_TOL = 1e-9


class BymStructure:
    """Spectral form of the ICAR precision for one graph.

    ``basis`` spans the orthogonal complement of the null space of D - W,
    i.e. vectors summing to zero on every component and vanishing on
    islands; ``eigvals`` are the matching positive eigenvalues.
    """

    def __init__(self, graph: AdjacencyGraph):
        r = graph.laplacian()
        vals, vecs = np.linalg.eigh(r)
        keep = vals > _NULL_TOL * max(1.0, float(vals.max()))
        self.eigvals = vals[keep]
        self.basis = vecs[:, keep]
        self.rank = int(keep.sum())
        self.islands = np.array(graph.islands, dtype=int)
        self.groups = [np.array(c) for c in graph.components if len(c) > 1]
        self.edges = np.array(graph.edges(), dtype=int).reshape(-1, 2)

    def center(self, z: np.ndarray) -> np.ndarray:
        for g in self.groups:
            z[g] -= z[g].mean()
        z[self.islands] = 0.0
        return z

    def edge_ss(self, z: np.ndarray) -> float:
        if not len(self.edges):
            return 0.0
        d = z[self.edges[:, 0]] - z[self.edges[:, 1]]
        return float(d @ d)


def _check_design(X: np.ndarray) -> None:
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise ValidationError(f"covariate matrix (with intercept) is not full column rank: {X.shape[1]} columns")


def _sigma2_floor(tau2: float, k: float, m0: int) -> float:
    # a_hat < cap  <=>  sigma2 * (1 + 1/m0) + tau2 / m0 > k
    return max(0.0, (k - tau2 / m0) / (1.0 + 1.0 / m0))


def _tau2_floor(sigma2: float, k: float, m0: int) -> float:
    return max(0.0, m0 * (k - sigma2 * (1.0 + 1.0 / m0)))


def fit_bym(
    data: CountData,
    graph: AdjacencyGraph,
    cfg: McmcConfig,
    restriction: Restriction | None = None,
    fixed: dict | None = None,
    m0: int | None = None,
    sigma2_prior=SIGMA2_PRIOR,
    tau2_prior=TAU2_PRIOR,
) -> ChainOutput:
    """Fit the BYM model by Metropolis-within-Gibbs.

    One sweep updates, in order: the log-rates (random-walk Metropolis,
    adapted during burn-in towards ``cfg.target_accept``); the ICAR effects
    (exact draw from their Gaussian full conditional under the zero-sum
    constraint); ``beta`` (flat-prior normal conditional); ``sigma2`` and
    ``tau2`` (inverse-gamma conditionals). Under ``restriction`` the two
    variance draws are truncated so that the informativeness at
    ``restriction.m0`` stays below ``restriction.a_floor``.

    ``fixed`` may pin ``sigma2``, ``tau2`` and/or ``beta``. Draws of
    ``a_hat`` use ``restriction.m0`` when restricted, else ``m0`` (default 3).
    """
    fixed = dict(fixed or {})
    unknown = set(fixed) - {"sigma2", "tau2", "beta"}
    if unknown:
        raise ConfigError(f"cannot fix {sorted(unknown)} in the BYM model")
    if set(data.region_ids) != set(graph.region_ids):
        missing = sorted(set(data.region_ids) ^ set(graph.region_ids))
        raise ValidationError(f"count data and adjacency graph cover different regions: {missing}")
    report_m0 = restriction.m0 if restriction is not None else int(m0 or DEFAULT_M0)

    dc, inverse = canonical_order(data)
    gc = graph.reorder(dc.region_ids)
    X = dc.X
    _check_design(X)
    y = dc.y.astype(float)
    n = dc.n
    n_reg, p = X.shape
    spec = BymStructure(gc)

    xtx_chol = np.linalg.cholesky(X.T @ X)
    proj = np.linalg.solve(X.T @ X, X.T)  # (X'X)^-1 X'

    s_fix = fixed.get("sigma2")
    t_fix = fixed.get("tau2")
    b_fix = fixed.get("beta")
    for name, v in (("sigma2", s_fix), ("tau2", t_fix)):
        if v is not None and not (math.isfinite(float(v)) and float(v) > 0):
            raise DomainError(f"fixed {name} must be finite and > 0, got {v!r}")
    if b_fix is not None:
        b_fix = np.atleast_1d(np.asarray(b_fix, dtype=float))
        if b_fix.shape != (p,):
            raise DomainError(f"fixed beta must have {p} entries, got {b_fix.shape}")

    k_cap = min_log_variance(restriction.a_floor) if restriction is not None else None
    if restriction is not None and s_fix is not None and t_fix is not None:
        if not a_hat(s_fix, t_fix, restriction.m0) < restriction.a_floor:
            raise ConfigError("fixed (sigma2, tau2) violate the informativeness restriction")

    s_shape = sigma2_prior[0] + n_reg / 2.0
    t_shape = tau2_prior[0] + spec.rank / 2.0

    def chain(cfg: McmcConfig, c: int, rng: RngStream):
        gen = rng.generator
        theta = np.log((y + 0.5) / n) + 0.1 * gen.standard_normal(n_reg)
        beta = b_fix.copy() if b_fix is not None else proj @ theta
        z = np.zeros(n_reg)
        sigma2 = float(s_fix) if s_fix is not None else 0.1 * math.exp(0.2 * gen.standard_normal())
        tau2 = float(t_fix) if t_fix is not None else 0.1 * math.exp(0.2 * gen.standard_normal())
        if k_cap is not None:
            m = restriction.m0
            if s_fix is None:
                sigma2 = max(sigma2, 1.5 * _sigma2_floor(tau2, k_cap, m))
            elif t_fix is None:
                tau2 = max(tau2, 1.5 * _tau2_floor(sigma2, k_cap, m))
        prop = AdaptiveScale(2.0 / np.sqrt(y + 1.0 / sigma2 + 1.0), cfg.target_accept, cfg.adapt_window)

        keep = cfg.retained
        out = {
            "theta": np.empty((keep, n_reg)),
            "z": np.empty((keep, n_reg)),
            "beta": np.empty((keep, p)),
            "sigma2": np.empty(keep),
            "tau2": np.empty(keep),
        }
        k = 0
        for it in range(cfg.iterations):
            kept_phase = it >= cfg.burn_in
            if it == cfg.burn_in:
                prop.freeze()
            xb = X @ beta

            # (i) log-rates
            theta, acc = theta_step(theta, y, n, xb + z, 1.0 / sigma2, prop.scale, gen)
            prop.record(acc, kept_phase)

            # (ii) ICAR effects: independent coordinates in the eigenbasis
            if spec.rank:
                resid = spec.basis.T @ (theta - xb)
                var = 1.0 / (spec.eigvals / tau2 + 1.0 / sigma2)
                w = var * resid / sigma2 + np.sqrt(var) * gen.standard_normal(spec.rank)
                z = spec.center(spec.basis @ w)

            # (iii) regression coefficients
            if b_fix is None:
                mean = proj @ (theta - z)
                beta = mean + math.sqrt(sigma2) * solve_triangular(xtx_chol.T, gen.standard_normal(p), lower=False)
                xb = X @ beta

            # (iv) non-spatial variance
            if s_fix is None:
                e = theta - xb - z
                scale = sigma2_prior[1] + 0.5 * float(e @ e)
                lo = _sigma2_floor(tau2, k_cap, restriction.m0) if k_cap is not None else 0.0
                sigma2 = draw_truncated_inverse_gamma(s_shape, scale, rng, lower=lo)

            # (v) spatial variance
            if t_fix is None:
                scale = tau2_prior[1] + 0.5 * spec.edge_ss(z)
                lo = _tau2_floor(sigma2, k_cap, restriction.m0) if k_cap is not None else 0.0
                tau2 = draw_truncated_inverse_gamma(t_shape, scale, rng, lower=lo)

            if cfg.is_kept(it):
                out["theta"][k] = theta
                out["z"][k] = z
                out["beta"][k] = beta
                out["sigma2"][k] = sigma2
                out["tau2"][k] = tau2
                k += 1
        return out, {"theta": prop.acceptance_rate()}

    draws, acc = run_chains(cfg, chain)
    for name in ("theta", "z"):
        draws[name] = draws[name][:, :, inverse]
    acc["theta"] = acc["theta"][:, inverse]
    draws["lambda"] = np.exp(draws["theta"])
    draws["a_hat"] = a_hat(draws["sigma2"], draws["tau2"], report_m0)
    fixed_echo = {k: float(v) for k, v in (("sigma2", s_fix), ("tau2", t_fix)) if v is not None}
    if b_fix is not None:
        fixed_echo["beta"] = b_fix.tolist()
    return ChainOutput(
        model="bym",
        region_ids=data.region_ids,
        draws=draws,
        acceptance=acc,
        config=cfg,
        m0=report_m0,
        restriction=restriction,
        fixed=fixed_echo,
        islands=tuple(gc.region_ids[i] for i in gc.islands),
    )
