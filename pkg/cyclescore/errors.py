"""Exception hierarchy shared by the engine."""


class CycleScoreError(Exception):
    """Base class for every error raised by the engine."""


class SchemaError(CycleScoreError, ValueError):
    """A schema file is malformed or breaks a schema invariant."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class DesignError(CycleScoreError, ValueError):
    """A design or design vector does not fit the schema."""


class DegenerateGeometryError(CycleScoreError):
    """Frame geometry cannot be evaluated (zero seat angle, solid tubes, ...)."""


class EvaluatorError(CycleScoreError):
    """An evaluator failed; `criterion` names the failing output family."""

    def __init__(self, message: str, criterion: str | None = None):
        self.criterion = criterion
        super().__init__(message)


class MetricError(CycleScoreError, ValueError):
    """A metric received inputs it cannot score."""


class OptimizationError(CycleScoreError):
    """An optimizer could not continue."""
