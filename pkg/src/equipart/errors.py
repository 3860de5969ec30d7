"""Exception hierarchy shared across the package."""


class EquipartError(Exception):
    """Base class for all errors raised by this package."""


class MalformedConstraint(EquipartError, ValueError):
    """A constraint references objects out of range or contradicts itself."""


class InfeasibleConstraints(EquipartError):
    """No assignment satisfies the constraint set and capacities."""


class DeadEnd(EquipartError):
    """A partial assignment cannot be extended; zero-probability branch."""


class IndexOutOfRange(EquipartError, IndexError):
    pass


class LengthMismatch(EquipartError, ValueError):
    pass


class DomainError(EquipartError, ValueError):
    """A numeric argument is outside its valid domain."""


class InstanceTooLarge(EquipartError):
    """The exact solver's enumeration cap would be exceeded."""


class DegenerateEnvironment(EquipartError):
    """The request model has no convergent or no divergent pairs."""


class UnsupportedSpec(EquipartError):
    """The algorithm does not handle this partition layout."""


class ParseError(EquipartError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class EmptyFile(EquipartError):
    pass


class UnknownItem(EquipartError, KeyError):
    pass


class UnknownSection(EquipartError, KeyError):
    pass


class UnassignedItem(EquipartError):
    pass
