"""Exception types shared across the package."""


class DamperkitError(Exception):
    """Base class for all errors raised by damperkit."""


class DomainError(DamperkitError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(DamperkitError, ValueError):
    """A configuration is malformed or describes an impossible setup."""


class ContractError(DamperkitError, ValueError):
    """A bound was requested for a block that violates the bound's hypotheses.

    The message names the operation that does apply, when there is one.
    """


class InfeasibleError(DamperkitError, ValueError):
    """A constructive witness was requested for an unreachable target."""
