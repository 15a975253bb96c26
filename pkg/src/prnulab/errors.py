"""Exception hierarchy shared by all prnulab modules."""


class PrnulabError(Exception):
    """Base class for every error raised by this package."""


class DecodeError(PrnulabError):
    """File exists but cannot be decoded as an image."""


class UnsupportedFormatError(PrnulabError):
    """File is readable but not a supported raster format."""


class SizeError(PrnulabError):
    """Raster smaller than the pipeline minimum (64x64)."""


class ShapeError(PrnulabError):
    """Operands have mismatched dimensions."""


class DecompositionError(PrnulabError):
    """Image too small for the requested wavelet decomposition depth."""


class DegenerateInputError(PrnulabError):
    """Correlation input is constant (zero centered norm)."""


class DegenerateSurfaceError(PrnulabError):
    """All off-peak correlation energy is exactly zero."""


class EmptyAccumulatorError(PrnulabError):
    """Fingerprint finalization requested with no accumulated images."""


class InsufficientReferenceError(PrnulabError):
    """Fewer zoom-eligible images than the reference minimum."""

    def __init__(self, user_id: str, eligible: int, minimum: int):
        self.user_id = user_id
        self.eligible = eligible
        self.minimum = minimum
        self.shortfall = minimum - eligible
        super().__init__(
            f"user {user_id!r}: {eligible} zoom-eligible images, "
            f"need at least {minimum} (short by {self.shortfall})"
        )


class NoMismatchPoolError(PrnulabError):
    """A campaign unit has a single user, so no mismatch images exist."""


class UnknownUserError(PrnulabError):
    """Requested user is not present in the campaign unit."""


class ConfigError(PrnulabError):
    """Invalid configuration file or scenario description."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
