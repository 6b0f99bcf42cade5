"""Exception hierarchy shared by all demix modules."""


class DemixError(Exception):
    """Base class for all demix errors."""


class AudioIOError(DemixError):
    """Problem reading or writing an audio file."""


class MalformedHeaderError(AudioIOError):
    pass


class UnsupportedFormatError(AudioIOError):
    pass


class TruncatedPayloadError(AudioIOError):
    pass


class DatasetError(DemixError):
    """Problem with a stem dataset on disk."""


class MissingStemError(DatasetError):
    pass


class LengthMismatchError(DatasetError):
    pass


class RateMismatchError(DatasetError):
    pass


class DspError(DemixError):
    """Invalid transform configuration or spectrogram state."""


class ShapeError(DemixError):
    """Tensor shape inconsistent with the operation's contract."""


class GradientError(DemixError):
    """Non-scalar loss or non-finite value met during differentiation."""


class TrainingError(DemixError):
    """Training loop failure (empty dataset, NaN loss, bad mask spec)."""


class EvalError(DemixError):
    """Metric computation failure."""


class CheckpointError(DemixError):
    """Unreadable or inconsistent checkpoint file."""


class ConfigError(DemixError):
    """Invalid run configuration file or value."""
