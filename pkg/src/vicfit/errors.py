"""Exception hierarchy.

Every error raised by this package derives from VicError so callers (and the
CLI) can map failures onto exit codes without fishing for numpy/PIL internals.
"""


class VicError(Exception):
    """Base class for all package errors."""


class OrderTooHigh(VicError):
    """Requested series order exceeds what exact integer coefficients allow."""


class BasisIndexError(VicError):
    """Basis function index outside 0..order."""


class DomainError(VicError):
    """Argument outside the function's domain (abscissa or transverse offset)."""


class MeshTooLarge(VicError):
    """Virtual-beam mesh would exceed the node budget."""


class IoError(VicError):
    """Unreadable or unsupported image file."""


class DegenerateImage(VicError):
    """Constant image: luminance cannot be normalized."""


class OutOfBounds(VicError):
    """Subpixel sample support exceeds the image; carries the offending point."""

    def __init__(self, point, message=None):
        self.point = tuple(float(c) for c in point)
        super().__init__(message or f"sample support outside image at {self.point}")


class OverlapError(VicError):
    """No-overlap condition violated: |curvature| * half-width >= 1 somewhere."""


class IllConditioned(VicError):
    """Normal matrix condition estimate beyond the trust threshold."""

    def __init__(self, condition, dim, order=None):
        self.condition = float(condition)
        self.dim = int(dim)
        self.order = order
        where = f"system dim {dim}" + (f", series order {order}" if order is not None else "")
        super().__init__(
            f"normal matrix condition {self.condition:.3e} exceeds 1e12 ({where})"
        )


class NoDescent(VicError):
    """Backtracking exhausted without finding a non-increasing step."""


class SeedError(VicError):
    """Trace seed does not lie on a fiber (first segment looks like background)."""


class InitRankError(VicError):
    """Series bootstrap system is rank deficient (degenerate abscissae)."""


class OracleDivergence(VicError):
    """Elastica fixed-point iteration failed to converge."""


class RenderBounds(VicError):
    """Synthetic curve exits the required image margin."""


class ConfigError(VicError):
    """Bad CLI/config input (unknown field, wrong type, missing key)."""
