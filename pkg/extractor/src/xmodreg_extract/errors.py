"""Error types for the extractor package."""


class ExtractError(Exception):
    """Base class for all extractor errors."""


class ConfigurationError(ExtractError):
    """Unknown key, out-of-range value, or a backend that cannot run as
    configured (missing checkpoint, missing runtime)."""


class InvalidInputError(ExtractError):
    """An argument violates a documented precondition (shape, dtype, size)."""
