"""Exception types shared across the engine.

Every failure mode callers are expected to handle maps to one of these, so
`except XmodregError` at a process boundary is always sufficient.
"""

from __future__ import annotations


class XmodregError(Exception):
    """Base class for all engine errors."""


class InvalidInputError(XmodregError):
    """An argument violates a documented precondition (shape, range, alignment)."""


class BehindCameraError(InvalidInputError):
    """Projection was asked for a point with non-positive camera-frame depth."""


class DegenerateInputError(XmodregError):
    """The input admits no unique solution (collinear points, rank collapse)."""


class InsufficientDataError(XmodregError):
    """Fewer samples than the operation fundamentally requires."""


class NonConvergenceError(XmodregError):
    """Iterative refinement ran out of iterations.

    The best iterate found so far is attached as ``best`` so callers can
    decide whether to use it anyway.
    """

    def __init__(self, message: str, best=None):
        super().__init__(message)
        self.best = best


class ConfigurationError(XmodregError):
    """Unknown key, out-of-range value, or an inconsistent configuration."""


class FormatError(XmodregError):
    """A file does not conform to its documented byte layout.

    ``offset`` is the byte position at which parsing gave up, where that is
    meaningful (-1 for whole-file problems such as truncation).
    """

    def __init__(self, message: str, offset: int = -1):
        super().__init__(message)
        self.offset = offset
