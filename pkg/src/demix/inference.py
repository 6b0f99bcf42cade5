"""Full-track separation via chunked overlap-add, and estimate blending.

Chunks are laid out on a stride of ``chunk_samples / overlap``; overlapping
outputs are averaged uniformly (sum divided by the per-sample coverage
count), which keeps the identity-operator round trip exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch

from .audio import SOURCE_CLASSES, StemSet, Waveform
from .errors import ConfigError, ShapeError
from .model import estimate_batch

DEFAULT_CHUNK_FRAMES = 1024
DEFAULT_OVERLAP = 8


@dataclass(frozen=True)
class SeparationPlan:
    chunk_frames: int = DEFAULT_CHUNK_FRAMES
    overlap: int = DEFAULT_OVERLAP
    hop_length: int = 1024

    def __post_init__(self):
        if self.overlap < 1:
            raise ConfigError("overlap must be >= 1")
        if self.chunk_frames < 1 or self.hop_length < 1:
            raise ConfigError("chunk_frames and hop_length must be positive")
        if self.chunk_samples % self.overlap:
            raise ConfigError(
                f"chunk length {self.chunk_samples} not divisible by "
                f"overlap {self.overlap}"
            )

    @property
    def chunk_samples(self) -> int:
        return self.chunk_frames * self.hop_length

    @property
    def stride(self) -> int:
        return self.chunk_samples // self.overlap


def plan_chunks(length: int, plan: SeparationPlan) -> tuple[list[tuple[int, int]], int]:
    """Spans over the zero-padded signal, plus the front pad amount.

    The signal is padded by ``chunk_samples - stride`` at both ends; spans
    start at multiples of the stride.  Every original sample is covered by
    exactly ``overlap`` spans.
    """
    if length < 1:
        raise ShapeError("signal must contain at least one sample")
    chunk, stride = plan.chunk_samples, plan.stride
    pad = chunk - stride
    padded = length + 2 * pad
    n_spans = max(1, -(-(padded - chunk) // stride) + 1)
    spans = [(i * stride, i * stride + chunk) for i in range(n_spans)]
    return spans, pad


def coverage_counts(length: int, plan: SeparationPlan) -> np.ndarray:
    """Per-original-sample span coverage (brute-force countable)."""
    spans, pad = plan_chunks(length, plan)
    total = max(e for _, e in spans)
    counts = np.zeros(total, dtype=np.int64)
    for s, e in spans:
        counts[s:e] += 1
    return counts[pad : pad + length]


def separate(model, mixture: Waveform, plan: SeparationPlan) -> StemSet | dict:
    """Chunked overlap-add separation of a full track.

    Returns a StemSet for four-source models, otherwise a dict keyed by the
    model's source classes.
    """
    cfg = model.config
    if plan.hop_length != cfg.hop_length:
        raise ConfigError(
            f"plan hop_length {plan.hop_length} != model hop_length {cfg.hop_length}"
        )
    cfg.check_frames(plan.chunk_frames)
    spans, pad = plan_chunks(mixture.n_samples, plan)
    total = max(e for _, e in spans)
    channels = mixture.n_channels
    padded = np.zeros((channels, total), dtype=np.float32)
    padded[:, pad : pad + mixture.n_samples] = mixture.samples
    n_sources = len(cfg.sources)
    acc = np.zeros((n_sources, channels, total), dtype=np.float64)
    counts = np.zeros(total, dtype=np.int64)
    with torch.no_grad():
        for start, end in spans:
            x = torch.from_numpy(padded[None, :, start:end])
            est = estimate_batch(model, x)[0].numpy()  # [S, C, chunk]
            acc[:, :, start:end] += est
            counts[start:end] += 1
    acc /= np.maximum(counts, 1)
    out = acc[:, :, pad : pad + mixture.n_samples]
    estimates = {
        cls: Waveform(out[i], mixture.sample_rate)
        for i, cls in enumerate(cfg.sources)
    }
    if set(cfg.sources) == set(SOURCE_CLASSES):
        return StemSet(estimates)
    return estimates


def blend(estimates: list[StemSet], weights=None) -> StemSet:
    """Per-class weighted sample-wise average of aligned stem sets.

    ``weights`` may be None (uniform), a flat per-estimate vector, or a
    (n_estimates, n_classes) array; weights are normalized per class.
    """
    if not estimates:
        raise ConfigError("no estimates to blend")
    ref = estimates[0]
    for est in estimates[1:]:
        if (
            est.sample_rate != ref.sample_rate
            or est.n_channels != ref.n_channels
            or est.n_samples != ref.n_samples
        ):
            raise ShapeError("estimates are not aligned (rate/channels/length)")
    n = len(estimates)
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.ndim == 1:
        w = np.repeat(w[:, None], len(SOURCE_CLASSES), axis=1)
    if w.shape != (n, len(SOURCE_CLASSES)):
        raise ShapeError(f"weights must be ({n},) or ({n}, {len(SOURCE_CLASSES)})")
    if np.any(w < 0):
        raise ConfigError("blend weights must be non-negative")
    sums = w.sum(axis=0)
    if np.any(sums <= 0):
        raise ConfigError("every class needs at least one positive weight")
    w = w / sums
    blended = {}
    for c, cls in enumerate(SOURCE_CLASSES):
        acc = np.zeros_like(ref[cls].samples)
        for i, est in enumerate(estimates):
            acc += w[i, c] * est[cls].samples
        blended[cls] = Waveform(acc, ref.sample_rate)
    return StemSet(blended)
