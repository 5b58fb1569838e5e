"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: DomainError and ContractError are
configuration/contract failures (exit code 2), NumericalError is a
numerical failure (exit code 3).
"""


class BnlabError(Exception):
    """Base class for all package errors."""


class DomainError(BnlabError, ValueError):
    """An evaluation point lies outside the model's domain of definition."""


class ContractError(BnlabError, ValueError):
    """An operation was requested in a regime where it is undefined."""


class NumericalError(BnlabError, RuntimeError):
    """A numerical procedure failed to converge or produced non-finite values."""
