"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration or construction parameters."""

    def __init__(self, message, key=None, line=None):
        self.message = message
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"line {line}: "
        if key is not None:
            prefix += f"{key}: "
        super().__init__(prefix + message)


class SolvabilityError(ValueError):
    """Right-hand side incompatible with the pure Neumann problem."""

    def __init__(self, mean, tol):
        self.mean = mean
        self.tol = tol
        super().__init__(f"Neumann compatibility violated: mean(rho)={mean:.3e} exceeds {tol:.3e}")


class SolverError(RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        self.residual = residual
        if residual is not None:
            message = f"{message} (residual {residual:.3e})"
        super().__init__(message)


class TableError(RuntimeError):
    """Collision-table self-test failure."""
