"""Exception hierarchy shared by all dirbench modules."""


class DirbenchError(Exception):
    """Base class for all errors raised by this package."""


class PhantomSpecError(DirbenchError, ValueError):
    """A phantom specification is degenerate or does not fit in the image."""


class ImageFormatError(DirbenchError):
    """An image or DVF file could not be decoded."""


class MalformedHeaderError(ImageFormatError):
    pass


class TruncatedPayloadError(ImageFormatError):
    pass


class DimensionMismatchError(ImageFormatError):
    pass


class DomainError(DirbenchError, ValueError):
    """A point lies outside the domain on which a transform is defined."""


class MeshInitError(DirbenchError):
    pass


class LocationError(DirbenchError):
    """A point is not covered by any simplex of the target mesh."""


class EvaluationError(DirbenchError):
    """An objective evaluated to a non-finite value."""


class InnerRunError(DirbenchError):
    """A single-objective gradient-descent registration diverged."""


class ConfigError(DirbenchError, ValueError):
    pass


class ArchiveFormatError(DirbenchError):
    """An archive manifest or model file is missing fields or has an unknown format."""
