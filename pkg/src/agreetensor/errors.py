"""Exception and warning types raised across the package."""


class AgreeTensorError(Exception):
    """Base class for all package errors."""


class InvalidTensor(AgreeTensorError, ValueError):
    pass


class InvalidParams(AgreeTensorError, ValueError):
    pass


class ZeroMass(AgreeTensorError, ArithmeticError):
    """The unnormalized total of a model tensor is zero."""


class DegenerateChance(AgreeTensorError, ArithmeticError):
    """Chance agreement equals one, so kappa is undefined.

    ``pair`` names the offending rater pair (e.g. ``"12"``) when raised from
    a three-way computation.
    """

    def __init__(self, message, pair=None):
        super().__init__(message)
        self.pair = pair


class UnsupportedFamily(AgreeTensorError, ValueError):
    pass


class DegreeTooLarge(AgreeTensorError, ValueError):
    pass


class BudgetExceeded(AgreeTensorError, RuntimeError):
    pass


class HypothesisViolated(AgreeTensorError, ValueError):
    pass


class NotDefined(AgreeTensorError, ArithmeticError):
    """Hadamard product of two points with disjoint supports."""


class BoundaryPoint(AgreeTensorError, ValueError):
    pass


class SupportMismatch(AgreeTensorError, ValueError):
    pass


class ConvergenceWarning(UserWarning):
    """A fitter hit ``max_iter`` before meeting its tolerance."""


class ZeroMarginWarning(UserWarning):
    """A sufficient statistic of the data sits on the parameter boundary."""


ZeroMarginUnsupported = ZeroMarginWarning


class DimensionMismatch(AgreeTensorError, ValueError):
    """A polynomial mentions cells outside the tensor it is evaluated on."""


class NotConverged(AgreeTensorError, RuntimeError):
    """Raised by the fitters only with ``strict=True``; otherwise they warn."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result
