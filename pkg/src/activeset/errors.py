"""Exception hierarchy shared by the package."""


class ActiveSetError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(ActiveSetError, ValueError):
    pass


class NumericalBreakdown(ActiveSetError, ArithmeticError):
    pass


class TooLarge(ActiveSetError, ValueError):
    pass


class NotOptimal(ActiveSetError):
    pass


class SampleInfeasible(ActiveSetError):
    """The parameter realization lies outside the feasible parameter set."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"sample {index} yields an infeasible instance")


class ParseError(ActiveSetError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(message + where)


class UnsupportedFeature(ActiveSetError, ValueError):
    pass


class DisconnectedNetwork(ActiveSetError, ValueError):
    pass


class SingularSusceptance(ActiveSetError, ArithmeticError):
    pass


class UnbalancedInjection(ActiveSetError, ValueError):
    pass


class InvalidConfig(ActiveSetError, ValueError):
    pass


class InsufficientSamples(ActiveSetError, ValueError):
    pass


class SnapshotMismatch(ActiveSetError, ValueError):
    pass


class EmptyCollection(ActiveSetError, ValueError):
    pass


class InvalidMasses(ActiveSetError, ValueError):
    pass


class UnknownKey(ActiveSetError, KeyError):
    pass
