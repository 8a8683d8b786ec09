"""Exception types shared across the solver."""


class ValidationError(ValueError):
    """Raised when model or run inputs violate a stated bound."""


class DomainError(ValueError):
    """Raised when a function is queried outside its valid domain."""


class SolverError(RuntimeError):
    """Raised when the free-boundary solve cannot be completed."""


class NoSignChangeError(SolverError):
    """Initial bisection bracket endpoints classify on the same exit side."""


class TailUnderflowError(SolverError):
    """The accepted trajectory could not be continued down to the numerical floor."""


class NoCrossingError(RuntimeError):
    """c*(x) - CE(x) has no sign change on the searchable domain."""


class UsageError(ValueError):
    """Bad command line or configuration input."""
