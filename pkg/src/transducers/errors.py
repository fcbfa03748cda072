"""Exception types shared across the package.

Every error carries a short machine-readable name (the class name) and a
human-readable message.  The CLI maps ``ValidationError`` subclasses to exit
code 2.
"""

from __future__ import annotations


class TransducerError(Exception):
    """Base class for all package errors."""


class ValidationError(TransducerError, ValueError):
    """Input data failed a structural or numerical precondition."""


class NotAContraction(ValidationError):
    pass


class GramMismatch(ValidationError):
    def __init__(self, x: int, y: int, delta: float):
        self.x, self.y, self.delta = x, y, delta
        super().__init__(f"Gram matrices differ at ({x}, {y}) by {delta:.3e}")


class ShapeMismatch(ValidationError):
    pass


class NotUnitary(ValidationError):
    pass


class SubspaceMismatch(ValidationError):
    pass


class DimMismatch(ValidationError):
    pass


class InadmissibleInitialState(ValidationError):
    pass


class NotAligned(ValidationError):
    pass


class BadSchedule(ValidationError):
    pass


class LayoutMismatch(ValidationError):
    pass


class SlotMismatch(ValidationError):
    pass


class InadmissibleQueries(ValidationError):
    pass


class Unreachable(ValidationError):
    pass


class SizeCap(ValidationError):
    pass


class ParamsInvalid(ValidationError):
    pass
