"""Exception types raised by emsplit."""


class EmsplitError(Exception):
    """Base class for all library errors."""


class IllPosedMassError(EmsplitError, ValueError):
    """Mass coupling matrix is not symmetric positive definite."""


class SplitValidationError(EmsplitError, ValueError):
    """A potential split violates its reconstruction or sign conditions."""


class SingularConfigurationError(EmsplitError, ValueError):
    """A pair separation fell to or below the potential's admissible minimum.

    Attributes:
        pair: ``(A, B)`` particle indices of the offending pair. ``B`` is
            ``None`` for the central field (distance to the origin).
        distance: The offending separation.
    """

    def __init__(self, pair, distance, message=None):
        self.pair = pair
        self.distance = distance
        a, b = pair
        where = f"particle {a} and the origin" if b is None else f"pair ({a}, {b})"
        super().__init__(message or f"separation {distance!r} of {where} is not admissible")


class StepFailure(EmsplitError, RuntimeError):
    """Newton iteration did not converge within ``l_max`` corrections.

    Attributes:
        report: The :class:`~emsplit.solver.StepReport` of the failed step.
        step_index: Index of the failed step in the schedule, if known.
    """

    def __init__(self, message, report=None, step_index=None):
        self.report = report
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class TangentSingularError(StepFailure):
    """The Newton matrix could not be factorized."""


class ConvergenceStudyError(EmsplitError, RuntimeError):
    """At least one run of a convergence study failed.

    Attributes:
        rows: All rows of the study; failed ones have ``failed=True``.
    """

    def __init__(self, message, rows=()):
        self.rows = list(rows)
        super().__init__(message)


class ConfigError(EmsplitError, ValueError):
    """An experiment configuration or bodies file is malformed.

    Attributes:
        path: The offending file, if any.
        line: 1-based line number, if the error is tied to one line.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
