"""Exception types shared across the toolkit.

All data/validation failures raise a NucleitkError subclass so the CLI can
map them to exit code 2 uniformly.
"""


class NucleitkError(Exception):
    """Base class for all toolkit errors."""


class DimensionMismatchError(NucleitkError, ValueError):
    """Two rasters that must share a shape do not."""

    def __init__(self, what: str, shape_a, shape_b):
        super().__init__(f"{what}: shapes differ, {tuple(shape_a)} vs {tuple(shape_b)}")


class DegenerateHistogramError(NucleitkError, ValueError):
    """Image histogram has a single occupied bin; no threshold separates it."""


class HoleCoversImageError(NucleitkError, ValueError):
    """Inpainting hole leaves no known pixel to propagate from."""


class MissingFileError(NucleitkError, FileNotFoundError):
    """Input path does not exist."""


class MalformedImageError(NucleitkError, ValueError):
    """File exists but is not a decodable image of the expected format."""


class BitDepthError(NucleitkError, ValueError):
    """Image bit depth does not match the requested raster type."""


class TooManyInstancesError(NucleitkError, ValueError):
    """More than 65535 instances; ids would not fit the 16-bit id space."""


class ValidationError(NucleitkError, ValueError):
    """Numeric input violates a documented domain invariant."""
