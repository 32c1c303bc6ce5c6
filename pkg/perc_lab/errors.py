# perc_lab/errors.py

from .constants import EXIT_BUDGET, EXIT_CONFIG, EXIT_FAILURE, EXIT_PRECONDITION


class PercLabError(Exception):
    """Base class for every error raised by perc_lab."""

    exit_code = EXIT_FAILURE


class ConfigError(PercLabError):
    """Raised when an experiment config fails schema validation."""

    exit_code = EXIT_CONFIG


class PreconditionError(PercLabError):
    """Raised when an operation is called outside its preconditions."""

    exit_code = EXIT_PRECONDITION


class GraphSpecError(PreconditionError):
    """Raised for invalid graph specs and malformed edge-list files."""


class GeometryError(PreconditionError):
    """Raised when a block or ball does not fit inside its enclosing region."""


class BudgetExhaustedError(PercLabError):
    """Raised when a sample, search or enumeration budget runs out."""

    exit_code = EXIT_BUDGET


class MidBallNotFoundError(BudgetExhaustedError):
    """Raised when no path index certifies a mid-ball at the estimated level."""


class ReplayError(PercLabError):
    """Raised when a manifest cannot be replayed (missing or unreadable outputs)."""

    exit_code = EXIT_PRECONDITION


class NoAvoidingPathError(PreconditionError):
    """Raised when every L-R path meets the r-neighbourhood of the forbidden set."""
