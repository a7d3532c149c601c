"""Exception types raised across the package."""


class GridMismatchError(ValueError):
    """Fields or operators defined on incompatible grids."""


class DomainError(ValueError):
    """Argument outside the domain of a potential or its derivatives."""


class ConfigError(ValueError):
    """Invalid run configuration."""


class SolverError(RuntimeError):
    """A nonlinear or linear solve failed to converge.

    ``residual`` is the last residual norm seen, ``level`` the time level
    (when known) and ``diagnostics`` a JSON-serialisable dict.
    """

    def __init__(self, message, residual=None, level=None, diagnostics=None):
        super().__init__(message)
        self.residual = residual
        self.level = level
        self.diagnostics = dict(diagnostics or {})

    def at_level(self, level):
        msg = f"time level {level}: {self}"
        return SolverError(msg, self.residual, level, self.diagnostics)
