"""Errors raised across the two-level verification stack."""


class TwoLevelError(Exception):
    """Base class for every domain failure"""


class NotSPD(TwoLevelError, ValueError):
    """A matrix required to be SPD failed its Cholesky certification"""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class NoConvergence(TwoLevelError):
    pass


class NegativeSpectrum(TwoLevelError, ValueError):
    """A matrix required to be SPSD has a clearly negative eigenvalue"""

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


class ShapeMismatch(TwoLevelError, ValueError):
    pass


class InvalidSize(TwoLevelError, ValueError):
    pass


class UnsatisfiableFlag(TwoLevelError, ValueError):
    pass


class RetriesExhausted(TwoLevelError):
    pass


class SmootherInvalid(TwoLevelError, ValueError):
    """M_s + M_s^T - A_s is not SPD"""

    def __init__(self, message, lambda_min=None):
        super().__init__(message)
        self.lambda_min = lambda_min


class RankCondition(TwoLevelError, ValueError):
    """The columns of (S P) do not span R^n"""


class BreakdownNumerical(TwoLevelError):
    pass


class SingularBlock(TwoLevelError):
    pass


class UnknownSolver(TwoLevelError, ValueError):
    pass


class SubspaceMismatch(TwoLevelError):
    pass


class BranchMismatch(TwoLevelError):
    pass


class NegativeRadicand(TwoLevelError):
    pass


class ConfigError(TwoLevelError, ValueError):
    """Bad run configuration; carries the JSON position or the dotted field path when known"""

    def __init__(self, message, line=None, column=None, field=None):
        super().__init__(message)
        self.line = line
        self.column = column
        self.field = field


class UnknownParameter(TwoLevelError, ValueError):
    pass


class IoError(TwoLevelError):
    """Reading or writing a problem or report file failed"""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
