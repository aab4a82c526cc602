"""Exception hierarchy shared by every module."""


class ErrcalcError(Exception):
    """Base class for all library errors."""


class DomainError(ErrcalcError, ValueError):
    """An expression was evaluated outside its domain (log of a non-positive number, ...)."""


class ArityError(ErrcalcError, ValueError):
    """A coordinate index is out of range for the structure dimension."""


class ParseError(ErrcalcError, ValueError):
    """Malformed expression or configuration text."""

    def __init__(self, message, line=1, column=1, source=None):
        self.line = line
        self.column = column
        self.source = source
        where = f"line {line}, column {column}"
        super().__init__(f"{message} ({where})")


class ValidationError(ErrcalcError, ValueError):
    """A configuration is well formed but violates constraints. Carries every violation."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class NonFiniteError(ErrcalcError, ArithmeticError):
    pass


class BasisError(ErrcalcError):
    """Basis fails the orthonormality check."""


class QuadratureError(ErrcalcError):
    """Monte Carlo inner products exceed their standard-error budget."""


class DimensionError(ErrcalcError, ValueError):
    pass


class PositivityError(ErrcalcError, ValueError):
    pass


class FactorizationError(ErrcalcError, ValueError):
    pass


class EstimatorError(ErrcalcError):
    """Conditional-expectation estimator has an empty cell."""


class SizeError(ErrcalcError, ValueError):
    pass


class TruncationError(ErrcalcError):
    pass
