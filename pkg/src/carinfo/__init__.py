"""Disease-mapping fits with a measure of how many prior events the model contributes."""

__version__ = "0.1.0"

from .approx import (  # noqa: E402
    EffectivePriorEvents,
    InformativenessQuery,
    conditional_precision_bound,
    gamma_to_lognormal,
    informativeness,
    lognormal_to_gamma,
)
from .data import CountData, load_counts  # noqa: E402
from .graph import AdjacencyGraph, complete_graph, load_adjacency  # noqa: E402
from .numerics import GammaParams, LognormalParams, RngStream, gamma_quantile  # noqa: E402
from .samplers import (  # noqa: E402
    ChainOutput,
    McmcConfig,
    Restriction,
    effective_prior_events_draws,
    fit_bym,
    fit_poisson_gamma_hier,
    fit_poisson_lognormal,
    posterior_poisson_gamma,
)

__all__ = [
    "__version__",
    "GammaParams",
    "LognormalParams",
    "RngStream",
    "gamma_quantile",
    "InformativenessQuery",
    "EffectivePriorEvents",
    "gamma_to_lognormal",
    "lognormal_to_gamma",
    "conditional_precision_bound",
    "informativeness",
    "AdjacencyGraph",
    "load_adjacency",
    "complete_graph",
    "CountData",
    "load_counts",
    "McmcConfig",
    "Restriction",
    "ChainOutput",
    "posterior_poisson_gamma",
    "fit_poisson_gamma_hier",
    "fit_poisson_lognormal",
    "fit_bym",
    "effective_prior_events_draws",
]
