"""Exception hierarchy shared by all tsnoether modules."""


class TsNoetherError(Exception):
    """Base class for every error raised by the package."""


# time scales and grid functions

class TimeScaleError(TsNoetherError, ValueError):
    pass


class DuplicatePoint(TimeScaleError):
    pass


class TooFewPoints(TimeScaleError):
    pass


class NonFiniteValue(TimeScaleError):
    pass


class NonDivisibleRange(TimeScaleError):
    pass


class NotStrictlyIncreasing(TimeScaleError):
    pass


class PointNotInScale(TimeScaleError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class ReversedBounds(TimeScaleError):
    pass


class DomainMismatch(TimeScaleError):
    pass


class DimensionMismatch(TsNoetherError, ValueError):
    pass


# expressions

class ExprError(TsNoetherError):
    pass


class ExprSyntaxError(ExprError, SyntaxError):
    """Malformed expression text; ``offset`` is a 0-based byte offset."""

    def __init__(self, message, offset, source=""):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset
        self.source = source


class UnknownFunction(ExprSyntaxError):
    pass


class UnknownVariable(ExprError, NameError):
    pass


class UnboundVariable(ExprError, NameError):
    pass


class NumericDomain(ExprError, ArithmeticError):
    """Evaluation left the real domain; ``subexpr`` is the offending node."""

    def __init__(self, message, subexpr=None):
        super().__init__(message)
        self.subexpr = subexpr


# solvers and symmetries

class SolverError(TsNoetherError, RuntimeError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, step, residual, message=None):
        super().__init__(message or f"Newton did not converge at step {step} (last residual {residual:.3e})")
        self.step = step
        self.residual = residual


class SingularJacobian(SolverError):
    def __init__(self, step, message=None):
        super().__init__(message or f"singular Jacobian at step {step}")
        self.step = step


class InconsistentRichardson(TsNoetherError, ValueError):
    pass


class VariantMismatch(TsNoetherError, ValueError):
    pass


# configuration

class ConfigError(TsNoetherError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class MissingKey(ConfigError):
    pass


class UnknownKey(ConfigError):
    pass


class ConfigTypeError(ConfigError, TypeError):
    pass


# output

class EmptySeries(TsNoetherError, ValueError):
    pass
