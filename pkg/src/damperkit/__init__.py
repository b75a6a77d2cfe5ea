"""damperkit: delay and jitter bounds for networks with dampers and non-ideal clocks."""

__version__ = "0.1.0"

from . import analysis, bounds, clocks, config, curves, dampers, sim, tfa  # noqa: E402
from .errors import ConfigError, ContractError, DamperkitError, DomainError, InfeasibleError  # noqa: E402

__all__ = [
    "analysis",
    "bounds",
    "clocks",
    "config",
    "curves",
    "dampers",
    "sim",
    "tfa",
    "ConfigError",
    "ContractError",
    "DamperkitError",
    "DomainError",
    "InfeasibleError",
]
