"""Exception hierarchy shared by the solver modules."""


class BandwagonError(Exception):
    """Base class for all domain errors raised by the package."""


class InvalidMobilityError(BandwagonError, ValueError):
    """A mobility specification produced a negative flip-cost factor."""


class NonSmoothPointError(BandwagonError, ValueError):
    """The vector field is not differentiable at the requested point."""


class UnsupportedLinearizationError(BandwagonError, ValueError):
    """The origin cannot be linearised for this mobility specification."""


class ConvergenceError(BandwagonError, RuntimeError):
    """An iterative solver failed to converge.

    The ``residual`` attribute carries the last residual norm.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StiffnessError(BandwagonError, RuntimeError):
    """Step size underflow in the explicit integrator."""

    def __init__(self, message, t=None, state=None):
        super().__init__(message)
        self.t = t
        self.state = state


class ClassificationError(BandwagonError, ValueError):
    """A fixed point does not have the stability type an operation needs."""


class NoCrossingError(BandwagonError, RuntimeError):
    """A traced manifold terminated before crossing the line ``z = 0``."""

    def __init__(self, message, manifold=None):
        super().__init__(message)
        self.manifold = manifold


class BracketError(BandwagonError, ValueError):
    """A bisection bracket does not enclose a sign change."""


class NoReturnError(BandwagonError, RuntimeError):
    """An orbit failed to come back to the Poincare section.

    ``attractor`` names where the orbit went instead.
    """

    def __init__(self, message, attractor=None):
        super().__init__(message)
        self.attractor = attractor


class NoCycleError(BandwagonError, RuntimeError):
    """The section scan found no periodic orbit."""


class RangeError(BandwagonError, ValueError):
    """A time argument lies outside the span of the underlying orbit."""
