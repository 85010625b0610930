"""Exception hierarchy shared by all modules."""


class FrozenPlanetError(Exception):
    """Base class for errors raised by the package."""


class DomainError(FrozenPlanetError, ValueError):
    """An argument lies outside the domain of the operation (e.g. a gap <= 0)."""


class EvaluationError(FrozenPlanetError, ArithmeticError):
    """A potential or integrand produced a non-finite or inconsistent value."""


class ConfigError(FrozenPlanetError, ValueError):
    """Invalid or incomplete run configuration."""


class NoConvergenceError(FrozenPlanetError, RuntimeError):
    """An iterative solver failed to converge.

    Attributes
    ----------
    best : object or None
        Best iterate found before giving up.
    diagnostics : dict
        Solver-specific information about the failure.
    """

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = dict(diagnostics or {})


class StagnationError(NoConvergenceError):
    """Path deformation could not make progress."""


class UnsupportedOperationError(FrozenPlanetError, NotImplementedError):
    """The operation is not defined for the given potential family."""
