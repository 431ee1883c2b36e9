"""Exception hierarchy.

Every numerical failure derives from :class:`FrontierError` so callers (and the
CLI) can separate configuration mistakes from numerical breakdowns.
"""


class FrontierError(Exception):
    """Base class for all package errors."""


class NumericalError(FrontierError):
    """A computation broke down numerically (CLI exit code 3)."""


class SingularCovariance(NumericalError):
    """Population covariance is not numerically positive definite."""


class SingularSampleCovariance(NumericalError):
    """Sample covariance matrix is numerically singular (n too close to p?)."""


class NotPositiveDefinite(NumericalError):
    """A rank-one downdate would leave the matrix indefinite."""


class NotPositiveSemiDefinite(NumericalError):
    pass


class SingularOmega(NumericalError):
    pass


class DegenerateSlope(NumericalError):
    """The frontier slope is (numerically) zero but a non-GMV quantity needs it."""


class NonpositiveSlopeEstimate(NumericalError):
    """The bias-corrected slope estimate is not positive."""


class DegenerateDof(FrontierError):
    """A latent variable would have fewer than one degree of freedom."""


class DomainError(FrontierError, ValueError):
    """A portfolio function was evaluated outside its domain."""


class InsufficientSample(FrontierError, ValueError):
    pass


class ConfigError(FrontierError, ValueError):
    """Invalid experiment configuration (CLI exit code 2)."""
