"""Exception types shared across the package."""


class KolmocirError(Exception):
    """Base class for all library errors."""


class NonPositiveParameter(KolmocirError):
    """A model parameter that must be strictly positive (and finite) is not."""


class FellerTypeViolation(KolmocirError):
    """sigma^2 > 4*theta*kappa, i.e. the derived dimension delta falls below 1."""


class DimensionTooSmall(KolmocirError):
    """Requested squared-Bessel dimension below the supported delta >= 1 range."""


class AffineMixOnInteger(KolmocirError):
    """Affine two-term mixture requested for an integer dimension."""


class UnknownFunction(KolmocirError):
    """Test-function name not in the catalog."""


class MissingArgs(KolmocirError):
    """Catalog function constructed with missing or malformed arguments."""


class OrderExceedsQ(KolmocirError):
    """A derivative of the test function beyond its available order q was requested."""


class NestingTooDeep(KolmocirError):
    """Iterated-integral nesting level above the configured cap."""


class InsufficientSmoothness(KolmocirError):
    """Derivative request (j, i) violates the smoothness budget 2j + 4i <= q."""


class StepTooLarge(KolmocirError):
    """Finite-difference step would leave the nonnegative state domain."""


class QuadratureNotConverged(KolmocirError):
    """Adaptive quadrature failed to reach the requested accuracy."""
