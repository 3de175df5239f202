"""Exception types raised across the package."""


class FlatPathError(Exception):
    """Base class for every error raised by flatpath."""


class SingularBasis(FlatPathError, ValueError):
    """A lattice basis (or metric) is singular to working precision."""


class DimensionMismatch(FlatPathError, ValueError):
    pass


class InvalidParameters(FlatPathError, ValueError):
    """Nonpositive lengths, unknown families, t <= 0 and similar."""


class TruncationCapExceeded(FlatPathError, RuntimeError):
    """The lattice-sum radius needed for the requested tolerance exceeds the hard cap.

    This usually means the diffusion time is too small (or the imaginary part of an
    analytic-continuation argument too large) for the tolerance asked for.
    """


class UnderResolvedQuadrature(FlatPathError, RuntimeError):
    """A quadrature rule fails its exactness sentinel for the integrand's mode content."""


class NotConverged(FlatPathError, RuntimeError):
    pass


class FiniteDifferenceBreakdown(FlatPathError, RuntimeError):
    """Finite-difference noise floor exceeds the signal being measured."""
