"""Exception and warning types raised across the package."""


class AggkoError(Exception):
    """Base class for all package errors."""


class InvalidInput(AggkoError, ValueError):
    pass


class SingularCovariance(AggkoError):
    pass


class NotPositiveDefinite(AggkoError):
    pass


class DegenerateOutcome(AggkoError):
    pass


class DegenerateSignal(AggkoError):
    pass


class SolverFailure(AggkoError):
    """Raised when a path fit fails at every grid point.

    ``run_index`` is filled in by callers that fit several paths (the
    aggregation loop, the simulation harness) so the failing run can be
    identified.
    """

    def __init__(self, message, run_index=None):
        super().__init__(message)
        self.run_index = run_index


class InvalidSchedule(AggkoError, ValueError):
    pass


class UndefinedPower(AggkoError):
    pass


# microbiome pipeline

class LoadError(AggkoError):
    pass


class EmptyCohort(AggkoError):
    pass


class AllZeroTable(AggkoError):
    pass


class NonPositiveEntry(AggkoError):
    pass


class DegenerateKnockoffs(UserWarning):
    """The perturbation vector is so small that knockoffs nearly copy X."""


class EmptyGroup(UserWarning):
    pass
