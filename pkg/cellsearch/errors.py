from typing import Optional


class BaseError(Exception):
    """
    Base package error.
    """


class ConfigError(BaseError):
    """
    Configuration error.
    """


class ConfigFieldError(ConfigError):
    """
    Configuration field error.
    """

    def __init__(self, model_name: str, field_name: str, message: str):
        self.model_name = model_name
        self.field_name = field_name
        self.message = message

        super().__init__(f"{model_name}.{field_name} is invalid: {message}")


class CodecError(ConfigError):
    """
    Config document encoding/decoding error.
    """


class DomainError(BaseError, ValueError):
    """
    Argument is outside of the operation domain.
    """


class DivergentIntegralError(DomainError):
    """
    Integral diverges for the provided path loss exponent.
    """


class PrecisionExceededError(BaseError):
    """
    Alternating sum can't be evaluated reliably at the available precision.
    """

    def __init__(self, j: int, bits: int, message: str):
        self.j = j
        self.bits = bits
        self.message = message

        super().__init__(f"j={j} at {bits} bits: {message}")


class DegenerateConfigError(BaseError):
    """
    Configuration never lets a sector be detected.
    """


class UnsupportedScenarioError(BaseError):
    """
    Operation is not defined for the scenario.
    """


class NumericalError(BaseError):
    """
    Numerical invariant violated.
    """


class IndeterminateQuantileError(BaseError):
    """
    Quantile falls into the censored mass of a distribution.
    """

    def __init__(self, percentile: float, lower_bound: float):
        self.percentile = percentile
        self.lower_bound = lower_bound

        super().__init__(f"{percentile}th percentile > {lower_bound}")

    @property
    def display(self) -> str:
        return f"> {self.lower_bound!r}"


class FitUnavailableError(BaseError):
    """
    Not enough tail mass for a tail fit.
    """

    def __init__(self, message: str, points: Optional[int] = None):
        self.points = points

        super().__init__(message)
