"""Exception types shared by every stage of the pipeline."""


class BimcloudError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(BimcloudError, ValueError):
    """A caller-supplied parameter is outside its valid domain."""


class EmptyInputError(BimcloudError, ValueError):
    pass


class FormatError(BimcloudError, ValueError):
    """A file could not be parsed."""


class UnsupportedFormatError(FormatError):
    pass


class ShapeError(BimcloudError, ValueError):
    """Array or layer dimensions do not match what was expected."""


class InvalidLabelsError(BimcloudError, ValueError):
    pass


class DegeneracyError(BimcloudError):
    """Geometry is too degenerate to fit a model (collinear, rank deficient)."""


class ZeroVarianceError(BimcloudError):
    pass


class InsufficientInputError(BimcloudError):
    pass


class InvertedGeometryError(BimcloudError):
    """The ceiling was found at or below the floor."""
