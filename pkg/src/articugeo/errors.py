"""Exception types raised by articugeo."""


class ArticugeoError(Exception):
    """Base class for all library errors."""


class InvalidDepthError(ArticugeoError, ValueError):
    pass


class BehindCameraError(ArticugeoError, ValueError):
    pass


class DimensionMismatchError(ArticugeoError, ValueError):
    pass


class IncompleteStateError(ArticugeoError, ValueError):
    """A rig state lacks the motion or cross-vehicle data a context needs."""


class UnknownVehicleError(ArticugeoError, KeyError):
    pass


class DegenerateGeometryError(ArticugeoError, ValueError):
    """Point sets too degenerate (collinear) for a rigid alignment."""


class EmptyOverlapError(ArticugeoError, ValueError):
    """No correspondences within the gating distance."""


class EmptyEvaluationError(ArticugeoError, ValueError):
    pass


class FormatError(ArticugeoError, ValueError):
    """Malformed file; message carries path and line where known."""
