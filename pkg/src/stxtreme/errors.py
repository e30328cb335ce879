"""Exception and warning types shared across the package."""


class StxtremeError(Exception):
    """Base class for all errors raised by stxtreme."""


class InsufficientData(StxtremeError, ValueError):
    pass


class NoConvergence(StxtremeError, RuntimeError):
    """Optimizer failed to converge; ``last`` holds the last iterate."""

    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


class DomainError(StxtremeError, ValueError):
    pass


class EvaluationError(StxtremeError, FloatingPointError):
    """A likelihood contribution was not finite.

    ``context`` carries whatever locates the failure (arguments, parameters,
    station pair and lag, ...).
    """

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class SimulationBudgetExceeded(StxtremeError, RuntimeError):
    pass


class JackknifeIncomplete(StxtremeError, RuntimeError):
    def __init__(self, message, failed_blocks, result=None):
        super().__init__(message)
        self.failed_blocks = list(failed_blocks)
        self.result = result


class ParseError(StxtremeError, ValueError):
    def __init__(self, message, line=None, path=None):
        loc = ""
        if path is not None:
            loc += f"{path}:"
        if line is not None:
            loc += f"{line}: "
        elif loc:
            loc += " "
        super().__init__(loc + message)
        self.line = line
        self.path = path


class SurrogateWarning(UserWarning):
    pass


class CoeffAtBound(UserWarning):
    pass
