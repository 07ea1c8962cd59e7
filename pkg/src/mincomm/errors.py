"""Exception types raised across the package."""


class MincommError(Exception):
    """Base class; catching it catches every error below."""


class ConfigError(ValueError, MincommError):
    """Invalid parameters or inconsistent dimensions."""


class DegenerateKernelError(ValueError, MincommError):
    """A zero-variance kernel or prior where a density is required."""


class NumericUnderflowError(ArithmeticError, MincommError):
    """Every candidate weight underflowed to zero."""


class CapExceededError(RuntimeError, MincommError):
    """Requested candidate count is above the configured cap."""

    def __init__(self, required, cap):
        super().__init__(f"required {required} candidates, cap is {cap}")
        self.required = required
        self.cap = cap


class QuantizerContractError(AssertionError, MincommError):
    """A precision payload moved the decoded model away from the original."""


class DecodeError(ValueError, MincommError):
    """Malformed bitstring or wire message."""


class DivergenceError(RuntimeError, MincommError):
    """Training blew up."""

    def __init__(self, message, config=None):
        super().__init__(f"{message} (config={config!r})")
        self.config = config
