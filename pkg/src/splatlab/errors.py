"""Exception hierarchy shared by every splatlab module."""


class SplatError(Exception):
    """Base class for all splatlab errors."""


class InvalidParameterError(SplatError, ValueError):
    pass


class ShapeMismatchError(SplatError, ValueError):
    pass


class InsufficientPointsError(SplatError, ValueError):
    pass


class EmptySceneError(SplatError, RuntimeError):
    pass


class BehindCameraError(SplatError, ValueError):
    pass


class SingularCovarianceError(SplatError, ValueError):
    pass


class FormatError(SplatError, ValueError):
    """A persisted artifact could not be decoded."""


class MagicMismatchError(FormatError):
    pass


class TruncatedFileError(FormatError):
    pass


class IntegrityError(FormatError):
    """Checksum did not match the payload."""


class UnsupportedVersionError(FormatError):
    pass


class UnsupportedDepthError(FormatError):
    pass


class MissingPropertyError(FormatError):
    pass


class ValidationError(FormatError):
    """Decoded content violates a structural invariant."""
