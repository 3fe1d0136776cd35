"""Exception hierarchy.

Data-dependent failures (bad files, inconsistent annotations, impossible
feature requests) derive from :class:`DataError`; failures of the numerical
training loop derive from :class:`TrainingError`.  The CLI maps these onto
distinct exit codes.
"""


class BinsedError(Exception):
    """Base class for all package-specific errors."""


class DataError(BinsedError):
    """Anything wrong with input data: audio files, annotations, plans."""


class AudioFormatError(DataError):
    """A WAV file could not be decoded (unreadable, unsupported, empty)."""


class AnnotationError(DataError):
    """An annotation file or reference event list is malformed."""


class UsageError(BinsedError):
    """Bad configuration or command-line arguments."""


class TrainingError(BinsedError):
    """The training loop failed."""


class DivergenceError(TrainingError):
    """Loss or parameters became non-finite during optimisation."""
