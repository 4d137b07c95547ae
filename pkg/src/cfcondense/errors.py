"""Exception types shared across the package."""


class CondensationError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(CondensationError):
    """Base class for embedding-file and checkpoint format errors."""


class BadMagicError(FormatError):
    """File does not start with the expected magic bytes."""


class UnsupportedVersionError(FormatError):
    """File declares a format version this reader does not understand."""


class TruncatedFileError(FormatError):
    """File payload is shorter (or longer) than its header declares."""


class NonFiniteDataError(FormatError):
    """Embedding values contain NaN or Inf."""


class NotFoundError(FormatError):
    """A referenced file or checkpoint does not exist."""


class ValidationError(CondensationError):
    """A dataset, synthetic set, or argument violates a structural invariant."""


class ConfigError(CondensationError):
    """Invalid configuration value or unknown configuration key."""


class InsufficientDataError(CondensationError):
    """A class has fewer samples than the requested datapoints per class."""


class DegenerateInteractionError(CondensationError):
    """An interaction vector has zero norm, so its cosine is undefined."""


class InvalidRelevanceError(CondensationError):
    """A retrieval query has no relevant gallery items."""


class DivergenceError(CondensationError):
    """Non-finite loss, gradient, or synthetic value during condensation."""

    def __init__(self, iteration, term, message=None):
        self.iteration = iteration
        self.term = term
        super().__init__(message or f"non-finite {term} at iteration {iteration}")
