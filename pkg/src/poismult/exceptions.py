"""Exception and warning types shared across the package."""


class PoismultError(Exception):
    """Base class for all package errors."""


class SchemaError(PoismultError):
    """A column-role map does not match the file being ingested."""


class DataValidationError(PoismultError):
    """Input data violates a structural invariant (counts, categories, ids)."""


class ModelSpecError(PoismultError):
    """A model specification is inconsistent with the data or unsupported."""


class AliasingError(PoismultError):
    """The structural design block is rank deficient.

    ``column`` names the first column that is linearly dependent on the
    ones before it (after elimination of the nuisance constants).
    """

    def __init__(self, column: str):
        self.column = column
        super().__init__(f"design column {column!r} is aliased (rank-deficient structural block)")


class NonConvergenceError(PoismultError):
    """An iterative fit diverged or exhausted its iteration budget.

    ``trace`` carries the objective values seen so far; ``ecm_iteration``
    is set when the failure happened inside an ECM cycle.
    """

    def __init__(self, message: str, trace=None, ecm_iteration=None):
        self.trace = list(trace) if trace is not None else []
        self.ecm_iteration = ecm_iteration
        super().__init__(message)


class PredictionError(PoismultError):
    """Prediction was requested for inputs the fit cannot handle."""


class QuadratureError(PoismultError):
    """Adaptive quadrature failed to reach its error target.

    ``achieved`` is the relative-error estimate at the point of failure.
    """

    def __init__(self, message: str, achieved=None):
        self.achieved = achieved
        super().__init__(message)


class SeparationWarning(UserWarning):
    """A category intercept has no supporting counts; its MLE is infinite."""


class DegenerateVarianceWarning(UserWarning):
    """A variance parameter was driven to its lower bound (vanishing random effect)."""
