"""Exception hierarchy.

Numerical failures derive from :class:`NumericalError` (CLI exit code 3);
configuration problems from :class:`ConfigError` (exit code 2).
"""


class KerrsimError(Exception):
    pass


class ConfigError(KerrsimError, ValueError):
    pass


class NumericalError(KerrsimError, ArithmeticError):
    pass


class DivergentInductance(NumericalError):
    """Junction inductance diverges (flux at a half quantum)."""


class RootBracketingFailure(NumericalError):
    pass


class KerrBoundViolation(NumericalError):
    """K/nu exceeds the 2*pi*Z0/R_K ceiling."""


class NonpositiveKerr(NumericalError):
    pass


class NonpositiveDetuning(NumericalError):
    pass


class BelowBifurcation(NumericalError):
    """No spinodal exists at the requested drive power."""


class StepSizeTooLarge(NumericalError):
    pass


class NonconvergentBranches(NumericalError):
    """Only one steady state, and nothing to switch to."""


class GridTooNarrow(NumericalError):
    pass


class RangeNotSpanned(NumericalError):
    pass


class LinearityViolated(NumericalError):
    pass


class UncoupledMode(NumericalError):
    """Even modes have a current node at the SQUID array and carry no Kerr coupling."""


class BiasDrift(NumericalError):
    pass


class NotConverged(NumericalError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class InsufficientSpan(NumericalError):
    pass


class DegenerateData(NumericalError):
    pass
