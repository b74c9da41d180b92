"""Exception hierarchy shared across the package."""


class KDEError(Exception):
    """Base class for all errors raised by disckde."""


class StructuralError(KDEError, ValueError):
    """Malformed input: dimension mismatch, empty dataset, ragged rows."""


class DomainError(KDEError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ConfigError(KDEError, ValueError):
    """Invalid or missing configuration (kernel descriptor, build params)."""


class GeometryError(KDEError, ValueError):
    """Shell radii that do not define a valid well-separated configuration."""


class ContractError(KDEError):
    """A point is outside the radius band it was promised to lie in."""


class NumericError(KDEError, ArithmeticError):
    """Quadrature or series evaluation failed to converge."""


class SizeError(KDEError, ValueError):
    """Instance too large for an exhaustive routine."""


class BuildError(KDEError, RuntimeError):
    """Tree construction exceeded its recursion-depth cap."""


class IndexFormatError(KDEError, ValueError):
    """Index file is corrupt or was written by an incompatible version."""


class DataError(KDEError, ValueError):
    """Unreadable or malformed point file."""
