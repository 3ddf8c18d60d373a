"""Exception hierarchy for ucinfer."""


class UcinferError(Exception):
    """Base class for all package errors."""


class SystemParseError(UcinferError):
    """System file is not valid JSON or misses required fields."""


class SystemValidationError(UcinferError):
    """System data violates a structural invariant.

    Carries the full list of violations in ``violations``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class LpValidationError(UcinferError):
    """LP/MILP data fails shape or finiteness checks."""


class SimplexIterationLimit(UcinferError):
    """Simplex exceeded its iteration budget (likely a cycling bug)."""


class SimplexNumericalError(UcinferError):
    """No kernel settings produced a certified-feasible optimal point."""


class UcInfeasibleError(UcinferError):
    """Unit-commitment MILP infeasible even with load shedding.

    With per-bus shed slack this signals a modeling bug or an
    over-generation lock, not a normal operating condition.
    """


class AmbiguousCommitmentError(UcinferError):
    """Observed dispatch has entries too close to zero to classify."""


class InfeasibleConeError(UcinferError):
    """Polar-cone working set has empty intersection with the prior box."""


class TrainingDivergedError(UcinferError):
    """Training loss became non-finite.

    ``checkpoint`` holds the last finite-loss parameter vector, or None
    when divergence happened before the first completed epoch.
    """

    def __init__(self, message, checkpoint=None):
        self.checkpoint = checkpoint
        super().__init__(message)


class IncompatibleModelError(UcinferError):
    """Model and data disagree on dimensions or instance identity."""


class DegenerateModelError(UcinferError):
    """Posterior draws stray absurdly far outside the prior support."""


class DatasetFormatError(UcinferError):
    """Dataset file is malformed or truncated."""


class ConfigError(UcinferError):
    """Run configuration is malformed."""
