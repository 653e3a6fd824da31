"""Exception hierarchy shared by every layer of the package."""


class AVCCError(Exception):
    """Base class for all errors raised by this package."""


class ZeroInverse(AVCCError, ZeroDivisionError):
    pass


class QuantOverflow(AVCCError, OverflowError):
    """A value does not fit the signed range of the field."""


class AccumulationOverflow(QuantOverflow):
    """A decoded integer result could wrap around the field modulus."""


class DuplicatePoints(AVCCError, ValueError):
    pass


class DuplicateEvalPoint(DuplicatePoints):
    pass


class ShapeMismatch(AVCCError, ValueError):
    pass


class DimensionMismatch(ShapeMismatch):
    pass


class InsufficientResults(AVCCError):
    pass


class InsufficientVerifiedResults(InsufficientResults):
    pass


class InfeasibleScheme(AVCCError, ValueError):
    """The scheme violates N >= (K+T-1)*deg_f + S + M + 1."""


class SchemeCollapse(AVCCError):
    """The adaptation policy would drive the code dimension below one."""


class ConfigError(AVCCError, ValueError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class MismatchedRuns(AVCCError, ValueError):
    pass
