"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`LatticeH2Error`, so callers (the CLI in particular) can separate
model failures from programming errors.
"""


class LatticeH2Error(Exception):
    """Base class for all package errors."""


class AssumptionViolation(LatticeH2Error, ValueError):
    """A feedback kernel lies outside the admissible class.

    Parameters
    ----------
    which : str
        Name of the violated assumption, e.g. ``"ReflectionSymmetry"``.
    detail : str
        Human readable explanation.
    """

    def __init__(self, which, detail=""):
        self.which = which
        self.detail = detail
        super().__init__(f"{which}: {detail}" if detail else which)


class WindowTooLarge(LatticeH2Error, ValueError):
    """Kernel window does not fit on the torus without self-overlap."""


class DimensionMismatch(LatticeH2Error, ValueError):
    pass


class DegenerateArray(LatticeH2Error, ValueError):
    pass


class SingularPhi(LatticeH2Error, ArithmeticError):
    pass


class UnstableBlock(LatticeH2Error, ArithmeticError):
    """A per-frequency block is not Hurwitz (or a static symbol has the wrong sign)."""

    def __init__(self, message, theta=None):
        self.theta = theta
        super().__init__(message)


class ZeroAveraging(LatticeH2Error, ArithmeticError):
    """Averaging symbol vanishes at a nonzero frequency while noise is present."""

    def __init__(self, message, theta=None):
        self.theta = theta
        super().__init__(message)


class InvalidVariant(LatticeH2Error, ValueError):
    pass


class SingularLyapunov(LatticeH2Error, ArithmeticError):
    pass


class InsufficientData(LatticeH2Error, ValueError):
    pass


class UnstableStep(LatticeH2Error, ArithmeticError):
    """Explicit integration step is too large for the state matrix."""

    def __init__(self, message, suggested_dt=None):
        self.suggested_dt = suggested_dt
        super().__init__(message)


class InsufficientSamples(LatticeH2Error, ValueError):
    pass


class ParseError(LatticeH2Error, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class NegativeWeight(ParseError):
    pass


class NotConnectedWarning(UserWarning):
    pass
