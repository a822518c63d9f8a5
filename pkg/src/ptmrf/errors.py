"""Exception hierarchy shared by the solver modules."""


class MrfError(Exception):
    """Base class for all errors raised by :mod:`ptmrf`."""


class DegreeTooLow(MrfError, ValueError):
    """The potential has degree < 1, so the moment recursion cannot march."""


class PrecisionExhausted(MrfError, ArithmeticError):
    """An intermediate value left the representable range of the working precision."""


class IndexOutOfRange(MrfError, IndexError):
    """A moment table is too short for the requested expansion order."""


class ConfigError(MrfError, ValueError):
    """Invalid solver or run configuration."""


class DerivativeVanished(MrfError, ArithmeticError):
    """Newton's method hit a (near) zero derivative, typically at a double root."""


class NotConverged(MrfError, RuntimeError):
    """An iterative refinement did not reach tolerance.

    The last iterate is kept on ``estimate`` so callers can inspect it.
    """

    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class BranchLost(MrfError, RuntimeError):
    """A continuation step jumped farther than the trust radius.

    ``last_alpha`` is the last parameter value at which the branch was still
    tracked reliably; ``partial`` holds the points gathered before the failure.
    """

    def __init__(self, message, last_alpha=None, partial=None):
        super().__init__(message)
        self.last_alpha = last_alpha
        self.partial = partial


class NoTransition(MrfError, RuntimeError):
    """A pair of branches never changes from real to complex on the scanned grid."""


class BracketInvalid(MrfError, ValueError):
    """Both ends of a critical-point bracket have the same character."""


class DoubleRootDivergence(MrfError, RuntimeError):
    """The coalescence (double-root) refinement left its bracket."""


class EigSolverFailure(MrfError, RuntimeError):
    """The dense eigenvalue computation of the oracle failed."""
