class NumericalError(RuntimeError):
    """Raised when a numerical routine cannot produce a trustworthy result."""


class ConvergenceError(NumericalError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual

    def __str__(self):
        if self.residual is None:
            return super().__str__()
        return f"{super().__str__()} (residual {self.residual:.3e})"


class ConfigError(ValueError):
    """Raised for malformed or inconsistent run configurations."""
