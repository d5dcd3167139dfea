"""Exception hierarchy shared by all modules."""


class OMTError(Exception):
    """Base class for errors raised by :mod:`omt_holonomy`."""


class DomainError(OMTError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class UsageError(OMTError, ValueError):
    """Inputs are malformed (wrong shape, mismatched dimensions, bad config)."""


class PreconditionError(OMTError, ValueError):
    """A documented precondition does not hold; carries the offending residual."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class NonConvergenceError(OMTError, RuntimeError):
    """An iterative solver stopped without reaching its tolerance."""

    def __init__(self, message, residual=None, stage=None):
        super().__init__(message)
        self.residual = residual
        self.stage = stage


class IntegrationBreakdown(OMTError, RuntimeError):
    """The transport factor left GL+(n) during integration."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
