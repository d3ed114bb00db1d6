"""Exception types shared across the package."""


class BpreError(Exception):
    """Base class for all package errors."""


class LawError(BpreError, ValueError):
    """Invalid law parameters, or an operation applied to an unsuitable law."""


class LawParseError(LawError):
    """A law specification string could not be parsed."""


class QuadratureError(BpreError, RuntimeError):
    """A numerical integration did not reach the requested tolerance."""


class KappaUndefinedError(LawError):
    """Exponential-moment root requested for a law with no finite exponential
    moments (heavy-tailed on the right): kappa undefined."""


class StepCapExceededError(BpreError, RuntimeError):
    """A random-walk simulation exceeded its step budget before hitting the
    target level."""

    def __init__(self, message, steps_done=None):
        super().__init__(message)
        self.steps_done = steps_done
