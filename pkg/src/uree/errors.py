"""Exception and warning types raised across the package."""


class UreeError(Exception):
    """Base class for all package errors."""


class DatasetFormatError(UreeError):
    """A study-record document could not be parsed."""


class NoUsableData(UreeError):
    """An arm has neither a survival reading, plot measurements nor observed deaths."""


class DegenerateCell(UreeError):
    """A 2x2 cell is zero (0 or n events), so the log odds ratio is infinite."""


class InvalidMeasurement(UreeError):
    """Plot measurements violate x > w > 0, y > z > 0."""


class InvalidSummary(UreeError):
    """A follow-up summary cannot be turned into a lognormal model."""


class NoDonorStudies(UreeError):
    """Mean-only follow-up needs at least one other study reporting a variance."""


class InconsistentBounds(UreeError):
    """Lower event bound exceeds the upper bound."""


class DomainViolation(UreeError):
    """Observed-deaths inflation used outside 0 < e/n < 0.5, 0 <= auc < 0.5."""


class EmptySupport(UreeError):
    """Reading and censoring supports for the KM-implied deaths do not overlap."""


class NonFiniteLikelihood(UreeError):
    """The sampler met a non-finite log likelihood."""


class InsufficientChains(UreeError):
    """Convergence diagnostics need at least two chains."""


class GridTooCoarse(UreeError):
    """Grid refinement changed a quadrature result by more than the tolerance."""


class NonConvergence(UserWarning):
    """Iterative estimator stopped at the iteration cap."""


class MissingObservedDeaths(UserWarning):
    """Greenwood variance needed an event count that was not extracted."""


class ExtractionWarning(UserWarning):
    """Data-handling fallback applied (continuity correction, clamping, ...)."""
