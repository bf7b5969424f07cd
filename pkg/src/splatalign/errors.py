"""Exception taxonomy shared by all splatalign modules."""


class SplatalignError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(SplatalignError):
    """Caller violated a documented precondition (bad value, bad range)."""


class BehindCameraError(SplatalignError):
    """Projection requested for a point with non-positive camera depth."""


class DegenerateInputError(SplatalignError):
    """Input is structurally degenerate (parallel columns, zero vector, ...)."""


class DegenerateConfigurationError(SplatalignError):
    """Point configuration with insufficient rank for a rigid fit."""


class UndefinedAngleError(SplatalignError):
    """Angular metric requested for a zero-length vector."""


class ManifestError(SplatalignError):
    """Scene manifest failed to load. ``code`` identifies the failure class."""

    def __init__(self, code: str, message: str):
        super().__init__(f"[{code}] {message}")
        self.code = code


class FormatError(SplatalignError):
    """A binary or text file does not conform to its documented format."""


class ValidationError(SplatalignError):
    """Loaded data violates a type invariant."""


class EstimationFailedError(SplatalignError):
    """Pairwise pose estimation could not find enough inliers."""


class UnsolvableSceneError(SplatalignError):
    """The pose graph is disconnected; absolute poses cannot be recovered."""


class NumericalRankError(SplatalignError):
    """A linear system that should be full rank was not."""


class EmptySceneError(SplatalignError):
    """Scene merge produced zero Gaussians."""


class DimensionMismatchError(SplatalignError):
    """Two arrays that must share a shape do not."""


class DivergenceError(SplatalignError):
    """Optimization objective exceeded the divergence guard."""
