"""Exception hierarchy shared by all modules."""


class GGRError(Exception):
    """Base class for library errors."""


class DomainError(GGRError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class PreconditionError(GGRError, ValueError):
    """A documented precondition does not hold."""


class AccuracyError(GGRError, ArithmeticError):
    """A numerical routine could not reach its target accuracy."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class SolverError(GGRError, ArithmeticError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class RefinementError(GGRError, ValueError):
    """The discretization is too coarse; carries the suggested size."""

    def __init__(self, message, needed=None):
        super().__init__(message)
        self.needed = needed


class SizeGuardError(GGRError, MemoryError):
    """A combinatorial or memory guard was exceeded."""


class RegimeError(GGRError, ValueError):
    """Inputs fall outside the regime where a bound applies."""


class InternalError(GGRError, RuntimeError):
    """An internal consistency check failed (indicates a bug)."""


class InputError(GGRError, ValueError):
    """Malformed user input; ``key`` names the offending entry."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
