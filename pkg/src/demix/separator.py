"""Scikit-learn style facade over the training and inference pipelines.

``SourceSeparator`` is a transformer: ``fit`` trains the network on a list
of stem sets (or a dataset directory), ``transform`` maps mixtures to
per-class stem estimates.  Hyperparameters follow sklearn conventions
(constructor args mirrored as attributes) so ``get_params``/``set_params``
and ``clone`` work.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .audio import SOURCE_CLASSES, StemSet, Waveform, load_dataset, scan_dataset
from .errors import TrainingError
from .inference import SeparationPlan, separate
from .model import ModelConfig, build
from .training import LossMaskSpec, TrainConfig, train


def _as_tracks(X) -> list[StemSet]:
    if isinstance(X, (str, Path)):
        return load_dataset(scan_dataset(X))
    tracks = list(X)
    if not all(isinstance(t, StemSet) for t in tracks):
        raise TypeError("fit expects StemSets or a dataset directory path")
    return tracks


class SourceSeparator(BaseEstimator, TransformerMixin):
    """Trainable music source separator.

    Parameters mirror the model/training/inference configuration records;
    see :class:`demix.model.ModelConfig` and
    :class:`demix.training.TrainConfig` for semantics.
    """

    def __init__(
        self,
        n_fft=8192,
        hop_length=1024,
        freq_bins=4096,
        initial_channels=64,
        growth=64,
        n_scales=5,
        blocks_per_scale=2,
        n_subbands=4,
        tdf_bottleneck_factor=4,
        sources=SOURCE_CLASSES,
        learning_rate=1e-4,
        batch_size=6,
        chunk_frames=256,
        loss_mask_dims="none",
        q=1.0,
        steps=1000,
        inference_chunk_frames=1024,
        overlap=8,
        seed=0,
    ):
        self.n_fft = n_fft
        self.hop_length = hop_length
        self.freq_bins = freq_bins
        self.initial_channels = initial_channels
        self.growth = growth
        self.n_scales = n_scales
        self.blocks_per_scale = blocks_per_scale
        self.n_subbands = n_subbands
        self.tdf_bottleneck_factor = tdf_bottleneck_factor
        self.sources = sources
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.chunk_frames = chunk_frames
        self.loss_mask_dims = loss_mask_dims
        self.q = q
        self.steps = steps
        self.inference_chunk_frames = inference_chunk_frames
        self.overlap = overlap
        self.seed = seed

    def _model_config(self) -> ModelConfig:
        return ModelConfig(
            n_fft=self.n_fft,
            hop_length=self.hop_length,
            freq_bins=self.freq_bins,
            initial_channels=self.initial_channels,
            growth=self.growth,
            n_scales=self.n_scales,
            blocks_per_scale=self.blocks_per_scale,
            n_subbands=self.n_subbands,
            tdf_bottleneck_factor=self.tdf_bottleneck_factor,
            sources=tuple(self.sources),
        )

    def _train_config(self) -> TrainConfig:
        return TrainConfig(
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            chunk_frames=self.chunk_frames,
            loss_mask=LossMaskSpec(self.loss_mask_dims, self.q),
            steps=self.steps,
            seed=self.seed,
        )

    def _plan(self) -> SeparationPlan:
        return SeparationPlan(
            chunk_frames=self.inference_chunk_frames,
            overlap=self.overlap,
            hop_length=self.hop_length,
        )

    def fit(self, X, y=None):
        """Train on a list of StemSets or a dataset directory."""
        tracks = _as_tracks(X)
        self.model_ = build(self._model_config(), seed=self.seed)
        log = io.StringIO()
        self.train_state_ = train(self.model_, tracks, self._train_config(), log_file=log)
        self.train_log_ = log.getvalue()
        return self

    def transform(self, X):
        """Separate one Waveform or a list of Waveforms into stems."""
        if not hasattr(self, "model_"):
            raise TrainingError("separator is not fitted; call fit first")
        single = isinstance(X, Waveform) or (
            isinstance(X, np.ndarray) and X.ndim <= 2
        )
        items = [X] if single else list(X)
        out = []
        for item in items:
            if not isinstance(item, Waveform):
                raise TypeError("transform expects Waveform inputs")
            out.append(separate(self.model_, item, self._plan()))
        return out[0] if single else out

    # transform is stateless w.r.t. X ordering; predict is a natural alias
    predict = transform
