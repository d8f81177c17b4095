"""Exception types raised across the package."""


class HiddenNonlocalityError(ValueError):
    """Base class for all package errors."""


class NotHermitian(HiddenNonlocalityError):
    pass


class InvalidState(HiddenNonlocalityError):
    pass


class DimensionMismatch(HiddenNonlocalityError):
    pass


class InvalidPovm(HiddenNonlocalityError):
    pass


class NonUnitVector(HiddenNonlocalityError):
    pass


class NotDichotomic(HiddenNonlocalityError):
    pass


class InvalidParameter(HiddenNonlocalityError):
    pass


class ZeroSuccessProbability(HiddenNonlocalityError):
    pass


class InvalidSettingsFile(HiddenNonlocalityError):
    pass
