class ForecastError(Exception):
    """
    Base error for the forecasting pipeline.

    Each subclass carries the exit code the command line returns when the
    error reaches it, the same way an HTTP error carries its status code.
    """

    exit_code: int = 1

    def __init__(self, message: str, module: str = None, field: str = None):
        # args must hold every constructor argument for joblib workers to pickle it.
        super().__init__(message, module, field)
        self.message = message
        self.module = module
        self.field = field

    def __str__(self) -> str:
        prefix = f"[{self.module}] " if self.module else ""
        suffix = f" (field: {self.field})" if self.field else ""
        return f"{prefix}{self.message}{suffix}"


class DomainError(ForecastError):
    # Well formed input that is mathematically invalid (zero variance, nonpositive actuals...).
    exit_code = 1


class ContractViolation(ForecastError):
    # The caller broke a precondition (length mismatch, missing column...).
    exit_code = 1


class ConfigurationError(ForecastError):
    # Bad configuration or usage, including missing input files.
    exit_code = 2
