"""Exception hierarchy shared by all modules."""


class AdiabatError(Exception):
    """Base class for errors raised by this package."""


class ModelDomainError(AdiabatError, ValueError):
    """A model function was evaluated outside its domain (e.g. eta <= 0)."""

    def __init__(self, message, t=None):
        if t is not None:
            message = f"{message} (at t = {float(t)!r})"
        super().__init__(message)
        self.t = t


class IntegrationError(AdiabatError, RuntimeError):
    """Step-size underflow or step budget exhausted.

    ``last_good_time`` is the time of the last accepted step.
    """

    def __init__(self, message, last_good_time):
        super().__init__(f"{message}; last good time t = {float(last_good_time)!r}")
        self.last_good_time = last_good_time


class ConvergenceError(AdiabatError, RuntimeError):
    """Newton iteration failed, or a root could not be bracketed."""


class NoClosedOrbitError(AdiabatError, ValueError):
    """The energy level does not bound a closed orbit inside the box."""


class UnresolvedError(AdiabatError):
    """The measured change is not resolved above numerical noise."""


class ConfigError(AdiabatError, ValueError):
    """Experiment configuration could not be parsed or validated."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
