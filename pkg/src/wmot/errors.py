"""Exception hierarchy shared by the library and the command line."""


class WmotError(Exception):
    """Base class for all library errors."""


class ValidationError(WmotError, ValueError):
    """Malformed input: negative weights, bad mass, unparsable files."""


class DomainError(WmotError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class InfeasibleError(WmotError):
    """The requested (martingale) transport problem has no feasible plan."""


class NumericError(WmotError, ArithmeticError):
    """A numerical routine failed to reach its tolerance."""
