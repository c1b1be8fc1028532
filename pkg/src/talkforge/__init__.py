"""talkforge: synthetic talking-face clip generation and evaluation."""

__version__ = "0.1.0"

from .audio import AudioClip, read_wav, write_wav  # noqa: F401
from .errors import (AudioFormatError, TrainingError,  # noqa: F401
                     UndefinedCorrelationError, ValidationError)
