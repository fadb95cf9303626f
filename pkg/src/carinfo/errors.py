"""Exception hierarchy.

The CLI maps these onto exit codes: anything deriving from ``ValueError``
is a usage/validation failure (exit 2), ``SamplerError`` is a runtime
failure (exit 1).
"""


class CarInfoError(Exception):
    """Base class for all package errors."""


class DomainError(CarInfoError, ValueError):
    """A parameter lies outside the domain of a distribution or formula."""


class ValidationError(CarInfoError, ValueError):
    """Input data (counts, adjacency) failed validation."""


class ConfigError(CarInfoError, ValueError):
    """An MCMC or study configuration is inconsistent."""


class ContractError(CarInfoError, ValueError):
    """A caller handed over an object lacking what the operation needs."""


class SamplerError(CarInfoError, RuntimeError):
    """A sampler could not produce a valid draw."""
