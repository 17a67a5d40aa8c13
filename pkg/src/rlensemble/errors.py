"""Exception hierarchy. Each class carries the CLI exit code it maps to."""

from __future__ import annotations


class RLEnsembleError(Exception):
    exit_code = 1


class ValidationError(RLEnsembleError, ValueError):
    """Bad parameters, config, or a violated call contract."""

    exit_code = 2


class ContractError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message: str, row: int | None = None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class StructureError(ValidationError):
    pass


class NumericError(RLEnsembleError, ArithmeticError):
    exit_code = 3


class TrainingError(NumericError):
    pass


class DegenerateDenominatorError(NumericError):
    pass


class UndefinedMetricError(NumericError):
    pass


class OptimizationError(NumericError):
    def __init__(self, message: str, best_weights=None, best_objective: float | None = None):
        super().__init__(message)
        self.best_weights = best_weights
        self.best_objective = best_objective


class ArtifactError(RLEnsembleError, OSError):
    exit_code = 4
