"""Exception types shared across the package.

Everything derives from IsaclearnError so callers can catch broadly, but the
concrete classes map onto distinct failure modes: bad arguments, inconsistent
array shapes, configs that cannot be run, numerically hopeless inputs, and
optimization blow-ups.
"""


class IsaclearnError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgumentError(IsaclearnError, ValueError):
    """An argument value is outside its documented domain."""


class ShapeError(IsaclearnError, ValueError):
    """Array dimensions are inconsistent with the operation's contract."""


class DegenerateOutputError(IsaclearnError, ArithmeticError):
    """A computation produced an output with no usable content (e.g. zero norm)."""


class IllConditionedError(IsaclearnError, ArithmeticError):
    """A linear solve was requested on a (near-)rank-deficient system."""


class ConfigError(IsaclearnError, ValueError):
    """A run configuration is malformed or internally inconsistent."""


class DivergenceError(IsaclearnError, ArithmeticError):
    """Training produced a non-finite loss or gradient."""
