from __future__ import annotations

from typing import Any, Optional

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MATH = 3
EXIT_VERIFICATION = 4


class ErmakovError(Exception):
    """Base class for every failure raised by the toolkit."""


# ----------------------------
# Expressions
# ----------------------------
class ExprSyntaxError(ErmakovError, ValueError):
    def __init__(self, message: str, offset: int, source: str = ""):
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class UnknownIdentifierError(ExprSyntaxError):
    pass


class ArityError(ExprSyntaxError):
    pass


class DomainViolation(ErmakovError, ArithmeticError):
    def __init__(self, reason: str, expr: Any, t: float):
        self.reason = reason
        self.expr = expr
        self.t = t
        super().__init__(f"{reason} in '{expr}' at t={t!r}")


# ----------------------------
# Integration / maps
# ----------------------------
class SingularityError(ErmakovError, ArithmeticError):
    def __init__(self, t: float, position: float, x_min: float):
        self.t = t
        self.position = position
        self.x_min = x_min
        super().__init__(f"|x|={abs(position):.3e} fell below x_min={x_min:.1e} at t={t!r}")


class OutOfRangeError(ErmakovError, ValueError):
    pass


class NonMonotoneError(ErmakovError, ValueError):
    pass


class InversionError(ErmakovError, ArithmeticError):
    def __init__(self, s: float, residual: float):
        self.s = s
        self.residual = residual
        super().__init__(f"could not invert the map at s={s!r} (residual {residual:.3e})")


class SignChangeError(ErmakovError, ValueError):
    def __init__(self, name: str, t: Optional[float] = None):
        self.name = name
        self.t = t
        where = f" near t={t!r}" if t is not None else ""
        super().__init__(f"{name} changes sign or vanishes on the grid{where}")


# ----------------------------
# Vector fields
# ----------------------------
class VariableMismatchError(ErmakovError, ValueError):
    pass


class ExponentBoundError(ErmakovError, ValueError):
    pass


class FieldSyntaxError(ErmakovError, ValueError):
    pass


# ----------------------------
# Superposition
# ----------------------------
class RealityViolation(ErmakovError, ValueError):
    pass


class NegativeRadicandError(ErmakovError, ArithmeticError):
    pass


class DegenerateWronskianError(ErmakovError, ArithmeticError):
    pass


# ----------------------------
# Front end
# ----------------------------
class ConfigError(ErmakovError, ValueError):
    pass


class VerificationFailed(ErmakovError):
    def __init__(self, message: str, report: Optional[dict] = None):
        self.report = report or {}
        super().__init__(message)


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, ExprSyntaxError, FieldSyntaxError)):
        return EXIT_CONFIG
    if isinstance(exc, (VerificationFailed, RealityViolation)):
        return EXIT_VERIFICATION
    if isinstance(exc, (ErmakovError, ArithmeticError)):
        return EXIT_MATH
    if isinstance(exc, (ValueError, TypeError)):
        return EXIT_CONFIG
    return 1
