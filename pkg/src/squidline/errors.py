"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class SquidlineError(Exception):
    exit_code = 1


class ValidationError(SquidlineError, ValueError):
    exit_code = 2


class ConvergenceError(SquidlineError):
    """Iterative solver or root finder did not reach tolerance."""

    exit_code = 3


class AccuracyError(SquidlineError):
    """Integrator or truncation accuracy check failed."""

    exit_code = 4


class TruncationError(AccuracyError):
    exit_code = 5


class ConditioningError(SquidlineError):
    exit_code = 6


class DomainError(ValidationError):
    exit_code = 7


class NoDoubleWell(SquidlineError):
    """The potential has a single minimum at the requested bias."""

    exit_code = 8

    def __init__(self, minimum: float):
        super().__init__(f"potential has a single well (minimum at gamma={minimum:.6g})")
        self.minimum = minimum


class ValidityError(SquidlineError):
    """Perturbative regime requirement violated."""

    exit_code = 9
