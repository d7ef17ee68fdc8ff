"""Exception hierarchy shared by all modules."""


class MongeLabError(Exception):
    """Base class for every error raised by the package."""


class NonConvexDomain(MongeLabError):
    pass


class OutsideDomain(MongeLabError):
    pass


class NotOnOffsetBoundary(MongeLabError):
    pass


class CollarTooThick(MongeLabError):
    pass


class InsufficientStencil(MongeLabError):
    pass


class NonPositiveRHS(MongeLabError):
    pass


class NotConverged(MongeLabError):
    """Raised when an iterative solve misses its tolerance.

    The best iterate and its report are attached so callers can inspect
    or reuse them.
    """

    def __init__(self, message, field=None, report=None):
        super().__init__(message)
        self.field = field
        self.report = report


class DegenerateCoefficients(MongeLabError):
    pass


class InnerSolveFailed(MongeLabError):
    def __init__(self, message, stage):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class WLostPositivity(MongeLabError):
    pass


class ContinuationStalled(MongeLabError):
    pass


class InvalidProblem(MongeLabError):
    pass


class EmptySection(MongeLabError):
    pass


class DegeneratePointSet(MongeLabError):
    pass


class TooFewSamples(MongeLabError):
    pass


class ConfigError(MongeLabError):
    pass


class UnknownSuite(MongeLabError):
    pass


class SectionEscapes(UserWarning):
    """Issued when a section reaches the domain boundary."""
