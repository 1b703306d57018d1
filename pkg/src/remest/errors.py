"""Exception hierarchy shared across the package."""


class RemestError(Exception):
    """Base class for all package errors."""


class NonConvergence(RemestError):
    pass


class DimensionMismatch(RemestError, ValueError):
    pass


class DegenerateDraw(RemestError):
    pass


class ConstraintViolation(RemestError, ValueError):
    """An action breaks the channel-assignment or power constraints of its scenario."""


class PowerBudgetViolation(ConstraintViolation):
    pass


class JointSpaceTooLarge(RemestError):
    """The joint channel space H**M exceeds the cap for exact computation."""


class ShapeMismatch(RemestError, ValueError):
    pass


class MissingCache(RemestError):
    pass


class NonFiniteGradient(RemestError, FloatingPointError):
    pass


class NonPositiveStd(RemestError, ValueError):
    pass


class ResampleCapExceeded(RemestError):
    pass


class ConfigError(RemestError, ValueError):
    pass
