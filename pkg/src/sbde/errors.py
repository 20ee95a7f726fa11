"""Exception hierarchy shared by all pipeline stages."""


class SbdeError(Exception):
    """Base class for all toolkit errors."""


class ImageDecodeError(SbdeError):
    """File exists but cannot be decoded as a supported image."""


class UnsupportedImageError(SbdeError):
    """Decodable image in a mode we refuse (16-bit, CMYK, ...)."""


class AnnotationError(SbdeError):
    """Malformed or inconsistent annotation data."""


class ManifestError(SbdeError):
    """Malformed manifest record or missing referenced file."""


class ShapeMismatchError(SbdeError):
    """Two grids that must share dimensions do not."""


class EmptyMaskError(SbdeError):
    """Operation requires at least one foreground pixel."""


class MaskBecameEmptyError(SbdeError):
    """Morphological optimization erased the whole mask (input was noise)."""


class BackendError(SbdeError):
    """Base class for segmenter/inpainter/classifier backend failures."""


class BackendUnreachableError(BackendError):
    """Remote backend could not be contacted."""


class BackendMalformedResponseError(BackendError):
    """Remote backend answered, but not per protocol."""


class BallotError(SbdeError):
    """Preference ballot violates the ranking rules."""


class ConfigError(SbdeError):
    """Invalid run configuration."""
