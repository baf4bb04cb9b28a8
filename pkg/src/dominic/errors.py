"""Exception types shared across the package."""


class DominicError(Exception):
    pass


class ConfigError(DominicError, ValueError):
    """Invalid or unsupported configuration."""


class UsageError(DominicError, RuntimeError):
    """An API was called in a state or with inputs it does not accept."""


class DomainError(DominicError, ValueError):
    """A numerical argument lies outside the function's domain."""


class TieInstabilityError(DominicError, RuntimeError):
    """Nearest-neighbour assignment changes under a finite-difference probe."""


class TrainingAbort(DominicError, RuntimeError):
    """Training produced a non-finite loss or otherwise diverged."""
