"""Exception hierarchy shared by all modules."""


class PartiteError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(PartiteError, ValueError):
    """A value violates an operation's contract."""


class CapacityError(PartiteError):
    """An enumeration guard was exceeded."""


class StructureError(PartiteError, ValueError):
    """The chain does not have the shape an operation needs (e.g. not a path)."""


class ConditioningError(PartiteError, ArithmeticError):
    """A closed form is numerically unusable for the given arguments."""


class UnsupportedCaseError(PartiteError):
    """A query is not covered by any known asymptotic regime."""


class SingularSystemError(PartiteError, ArithmeticError):
    """The target state cannot be reached, so the hitting-time system is singular."""
