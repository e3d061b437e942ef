"""Exception types shared across the package."""


class FerroflowError(Exception):
    """Base class for all package errors."""


class ConfigurationError(FerroflowError):
    """Invalid user input: mesh extents, config keys, dipole placement, ..."""


class SolverError(FerroflowError):
    """A linear solve failed (singular factorization, bad residual)."""


class StepError(FerroflowError):
    """A time step could not be completed (e.g. Picard non-convergence)."""
