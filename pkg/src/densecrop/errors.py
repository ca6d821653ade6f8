"""Toolkit exception hierarchy, mapped to CLI exit codes."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


class DensecropError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class ConfigError(DensecropError):
    """Invalid configuration value, flag, or config file."""

    exit_code = EXIT_CONFIG


class DataError(DensecropError):
    """Missing or malformed input data (annotation files, splits, dumps)."""

    exit_code = EXIT_DATA


class InvariantViolation(DensecropError, ValueError):
    """A structural invariant was broken (zero-area box, layout mismatch, ...)."""

    exit_code = EXIT_INVARIANT
