"""Model fitters and their shared output type."""
from __future__ import annotations

import numpy as np

from ..approx import a_hat, events_from_log_variance
from ..errors import ContractError
from .base import ChainOutput, McmcConfig, Restriction
from .bym import fit_bym
from .conjugate import fit_poisson_gamma_hier, posterior_poisson_gamma
from .lognormal import fit_poisson_lognormal

__all__ = [
    "ChainOutput",
    "McmcConfig",
    "Restriction",
    "posterior_poisson_gamma",
    "fit_poisson_gamma_hier",
    "fit_poisson_lognormal",
    "fit_bym",
    "effective_prior_events_draws",
    "FITTERS",
]

FITTERS = {"pg": fit_poisson_gamma_hier, "pln": fit_poisson_lognormal, "bym": fit_bym}


def effective_prior_events_draws(chain: ChainOutput, m0: int | None = None) -> np.ndarray:
    """Informativeness per retained draw, shaped ``(chains, draws)``.

    BYM chains map (sigma2, tau2) through the conditional-variance bound at
    ``m0`` (default: the chain's own m0); lognormal chains map the log-scale
    variance 1/gamma; gamma chains report their shape ``a`` directly.
    """
    draws = chain.draws
    if chain.model == "bym":
        if "sigma2" not in draws or "tau2" not in draws:
            raise ContractError("BYM chain lacks sigma2/tau2 draws")
        return a_hat(draws["sigma2"], draws["tau2"], int(m0 or chain.m0 or 3))
    if chain.model == "pln":
        if "gamma" not in draws:
            raise ContractError("lognormal chain lacks gamma draws")
        return events_from_log_variance(1.0 / np.asarray(draws["gamma"]))
    if chain.model == "pg":
        if "a" not in draws:
            raise ContractError("gamma chain lacks a draws")
        return np.array(draws["a"], dtype=float)
    raise ContractError(f"unknown model {chain.model!r}")
