"""demix: music source separation with noise-robust quantile loss masking."""

from .audio import SOURCE_CLASSES, DatasetIndex, StemSet, Waveform
from .dsp import Spectrogram, StftConfig
from .inference import SeparationPlan, blend, separate
from .metrics import aggregate, csdr, evaluate_track, sdr
from .model import ModelConfig, PRESETS, build, load_checkpoint, param_count, save_checkpoint
from .noise_sim import CorruptionSpec, simulate_bleeding, simulate_label_noise
from .separator import SourceSeparator
from .training import LossMaskSpec, TrainConfig, early_stop, train

__version__ = "0.1.0"

__all__ = [
    "SOURCE_CLASSES",
    "DatasetIndex",
    "StemSet",
    "Waveform",
    "Spectrogram",
    "StftConfig",
    "SeparationPlan",
    "blend",
    "separate",
    "aggregate",
    "csdr",
    "evaluate_track",
    "sdr",
    "ModelConfig",
    "PRESETS",
    "build",
    "load_checkpoint",
    "param_count",
    "save_checkpoint",
    "CorruptionSpec",
    "simulate_bleeding",
    "simulate_label_noise",
    "SourceSeparator",
    "LossMaskSpec",
    "TrainConfig",
    "early_stop",
    "train",
    "__version__",
]
