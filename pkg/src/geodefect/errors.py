"""Exception hierarchy shared by all geodefect modules."""


class GeodefectError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GeodefectError):
    """Invalid run configuration, model descriptor, or CLI arguments."""


class OutOfDomainError(GeodefectError):
    """A chart point lies outside the chart domain."""


class NotPositiveDefiniteError(GeodefectError):
    """A metric evaluation failed the positive-definiteness check.

    Signals either a bad model or a deformation amplitude large enough
    to destroy the metric.
    """


class StencilError(GeodefectError):
    """A finite-difference stencil would leave the chart domain."""


class RankDeficiencyError(GeodefectError):
    """Input vectors are linearly dependent within tolerance."""


class FrameError(GeodefectError):
    """A supplied frame or quadruple is not g-orthonormal within tolerance."""


class DegenerateSpanError(GeodefectError):
    """Two vectors fail to span a 2-plane."""


class DeformationError(GeodefectError):
    """A deformation could not be built or no amplitude in the schedule
    passed its verification gates."""


class BudgetExhaustedError(GeodefectError):
    """The metric-distance budget was exhausted before all defects cleared.

    Carries the partial audit log and the last metric so callers can
    report partial progress.
    """

    def __init__(self, message, metric=None, audit=None):
        super().__init__(message)
        self.metric = metric
        self.audit = audit if audit is not None else []
