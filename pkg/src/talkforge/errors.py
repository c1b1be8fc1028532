"""Exception types shared across the toolkit."""


class ValidationError(ValueError):
    """Input violates a documented precondition or invariant."""


class AudioFormatError(ValueError):
    """WAV file is malformed or uses an unsupported encoding."""


class TrainingError(RuntimeError):
    """Training diverged or could not proceed."""


class UndefinedCorrelationError(ValueError):
    """Correlation requested on a constant series."""
