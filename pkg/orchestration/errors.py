"""Failure categories the CLI maps to exit codes."""


class ConfigError(ValueError):
    """Invalid configuration: unknown key, bad value or unknown preset."""


class DataError(RuntimeError):
    """Missing or inconsistent input data."""


class NumericError(ArithmeticError):
    """Training or decoding produced non-finite values."""
