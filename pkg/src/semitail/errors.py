"""Exception and warning types raised across the package."""


class InferenceError(RuntimeError):
    """Base class for failures of a statistical fit (CLI exit code 3)."""


class TooFewExceedances(InferenceError):
    pass


class DegenerateCurvature(InferenceError):
    pass


class ZeroVariance(InferenceError):
    pass


class DegenerateMoments(InferenceError):
    pass


class EmptySample(InferenceError):
    pass


class EmptyGrid(InferenceError):
    pass


class NoValidDiagnostics(InferenceError):
    pass


class BoundaryMaximum(UserWarning):
    """The MAP tail index is pinned against 0 or 1."""
