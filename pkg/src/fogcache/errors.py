"""Exception types shared across the package."""


class FogcacheError(Exception):
    """Base class for all errors raised by fogcache."""


class ParseError(FogcacheError):
    """A malformed input file. Carries the offending line number."""

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ValidationError(FogcacheError, ValueError):
    """An input value violates a documented precondition."""


class ConfigError(FogcacheError, ValueError):
    """An experiment or model configuration is unusable."""
