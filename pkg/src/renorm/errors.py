"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class RenormError(Exception):
    exit_code = 1

    def __init__(self, message, stage=None, payload=None):
        super().__init__(message)
        self.stage = stage
        self.payload = payload or {}

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class UsageError(RenormError):
    exit_code = 1


class DomainError(RenormError, ValueError):
    """Argument outside the admissible set of an operation."""
    exit_code = 1


class EvaluationError(RenormError):
    """Non-finite samples or evaluation outside a certified region."""
    exit_code = 3


class CompositionError(EvaluationError):
    """Range of the inner function escapes the domain of the outer one."""


class FeasibilityError(RenormError):
    exit_code = 2


class RegimeError(RenormError):
    exit_code = 2


class LinearizationError(RenormError):
    exit_code = 3


class SolverError(RenormError):
    exit_code = 3


class NonConvergenceError(RenormError):
    exit_code = 3


class DivergenceError(NonConvergenceError):
    pass


class VerificationError(RenormError):
    exit_code = 4
