"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` used by the command-line interface:
2 for domain and data problems, 3 for numerical failures.
"""


class NtkLapError(Exception):
    exit_code = 2


class DomainError(NtkLapError, ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateInputError(DomainError):
    """A zero vector was passed where a direction is required."""


class ConfigError(NtkLapError, ValueError):
    """Inconsistent or illegal configuration."""


class ParseError(NtkLapError, ValueError):
    def __init__(self, message, lines=()):
        super().__init__(message)
        self.lines = list(lines)


class EmptyDataError(NtkLapError, ValueError):
    pass


class InsufficientDataError(NtkLapError, ValueError):
    pass


class SingularSystemError(NtkLapError, ArithmeticError):
    pass


class NumericalError(NtkLapError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalError):
    pass


class FitError(NumericalError):
    """Raised when no restart of a least-squares fit converged.

    The best parameters found so far are kept on ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
