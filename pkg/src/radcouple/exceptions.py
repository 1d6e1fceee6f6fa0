"""Exception hierarchy.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`DomainError`
(and its subclasses) to exit code 3.
"""


class RadCoupleError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(RadCoupleError, ValueError):
    """An experiment configuration failed validation."""


class DomainError(RadCoupleError, ValueError):
    """A radius, curvature or parameter lies outside the admissible domain."""


class CutLocusError(DomainError):
    """Two points are at (or too close to) each other's cut locus."""


class DimensionMismatchError(RadCoupleError, ValueError):
    pass


class BlowUpError(RadCoupleError, ArithmeticError):
    """The Riccati flow diverged, i.e. a focal point was crossed."""


class NotContractionError(DomainError):
    """A correlation matrix is not a contraction (``I - J J^T`` not PSD)."""


class InfeasibleTargetError(DomainError):
    """A target speed lies outside the drift window."""


class DegenerateControlError(DomainError):
    """All principal curvatures vanish but the target differs from ``A(r)``."""


class NoLimitError(DomainError):
    """Curvature data show no finite limit at infinity (or the model is compact)."""


class PathTooShortError(RadCoupleError, ValueError):
    pass


class WindowViolationError(DomainError):
    """A prescribed distance law left the drift window.

    Attributes
    ----------
    t, rho : float
        Time and distance at the first violation.
    window : DriftWindow
        The window at ``rho``.
    speed : float
        The offending target speed.
    """

    def __init__(self, t, rho, window, speed):
        self.t = t
        self.rho = rho
        self.window = window
        self.speed = speed
        super().__init__(
            f"target speed {speed:.12g} outside drift window "
            f"[{window.lo:.12g}, {window.hi:.12g}] at t={t:.12g}, rho={rho:.12g}"
        )
