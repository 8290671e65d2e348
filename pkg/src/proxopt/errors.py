"""Exception types raised by the solver and diagnostics."""


class ProxoptError(Exception):
    """Base class for all package errors."""


class RankDeficient(ProxoptError):
    """The constraint Jacobian lost full row rank at the evaluation point."""


class AmbiguousProjection(ProxoptError):
    """The metric projection is not unique (point on the tube boundary)."""


class NoConvergence(ProxoptError):
    """An inner iterative procedure (e.g. the level-set projection) stalled."""


class DescentViolation(ProxoptError):
    """A gradient projection step failed the sufficient-decrease inequality.

    This almost always means the supplied Lipschitz constants are wrong.
    """

    def __init__(self, message, k=None, f_old=None, f_new=None, bound=None):
        super().__init__(message)
        self.k = k
        self.f_old = f_old
        self.f_new = f_new
        self.bound = bound


class InvalidStepSize(ProxoptError, ValueError):
    """Step size outside ``(0, min{1/L1, R/L0})``."""


class MaxStepsExceeded(ProxoptError):
    """Iteration budget exhausted; carries the partial trace and last iterate."""

    def __init__(self, message, trace=None, x=None):
        super().__init__(message)
        self.trace = trace
        self.x = x


class SingularJacobian(ProxoptError):
    """``F'(z0)`` is numerically singular, the Newton phase cannot be frozen."""


class DivergenceDetected(ProxoptError):
    """``||F(z_k)||`` grew on consecutive Newton steps."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class IncompleteLedger(ProxoptError, ValueError):
    """Constants needed for a computation are missing or invalid."""

    def __init__(self, message, missing=()):
        super().__init__(message)
        self.missing = tuple(missing)


class CannotEstimate(ProxoptError):
    """A ledger field has neither a user value nor a way to estimate it."""


class FallbackExhausted(ProxoptError):
    """The combined driver never certified a Newton basin nor reached ``eps``."""

    def __init__(self, message, trace=None, x=None):
        super().__init__(message)
        self.trace = trace
        self.x = x


class DegenerateSpectrum(ProxoptError, ValueError):
    """Repeated eigenvalues: the stationary set is not a finite set."""


class NoSampler(ProxoptError):
    """A diagnostic needs random feasible points but no sampler is available."""


class DerivativeMismatch(ProxoptError):
    """Finite differences disagree with a supplied derivative evaluator."""

    def __init__(self, message, evaluator=None, probe=None, rel_error=None):
        super().__init__(message)
        self.evaluator = evaluator
        self.probe = probe
        self.rel_error = rel_error
