"""Exception hierarchy shared by all modules."""


class AniproxError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(AniproxError, ValueError):
    """A point lies outside the (interior of the) domain of a conjugate.

    ``index`` is the first offending coordinate, when known.
    """

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (coordinate {index})"
        super().__init__(message)
        self.index = index


class ConstraintQualificationError(AniproxError, ValueError):
    """The pairing of regularizer/objective and reference is not admissible."""


class ConfigurationError(AniproxError, ValueError):
    pass


class NumericError(AniproxError, ArithmeticError):
    """An inner scalar solve failed to converge or produced a non-finite value."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (coordinate {index})"
        super().__init__(message)
        self.index = index


class ProxBoundednessError(NumericError):
    """The backward-step objective could not be bracketed (step-size too large)."""


class LinesearchError(AniproxError, RuntimeError):
    pass


class CalculusError(AniproxError, ValueError):
    """A smoothness-constant combination rule was applied outside its hypotheses."""


class ParseError(AniproxError, ValueError):
    def __init__(self, message, line=None, column=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)
        self.line = line
        self.column = column
