"""STFT analysis/synthesis, frequency truncation and sub-band packing.

Conventions: Hann window, reflect center padding, squared-window overlap-add
normalization on synthesis.  The waveform is zero-padded up to a whole number
of hops before analysis, so ``frames = 1 + ceil(length / hop_length)``.

The tensor-level functions accept torch tensors of any floating dtype and are
differentiable; the Waveform-level API works in float64 for accuracy.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import torch

from .audio import Waveform
from .errors import DspError

_WINDOW_CACHE: dict[tuple, torch.Tensor] = {}


@dataclass(frozen=True)
class StftConfig:
    n_fft: int
    hop_length: int

    def __post_init__(self):
        if self.n_fft <= 0 or self.n_fft % 2:
            raise DspError(f"n_fft must be positive and even, got {self.n_fft}")
        if not 0 < self.hop_length <= self.n_fft // 2:
            raise DspError(
                f"hop_length must be in (0, n_fft/2], got {self.hop_length}"
            )
        if self.n_fft % self.hop_length:
            raise DspError("n_fft must be a multiple of hop_length")

    @property
    def full_bins(self) -> int:
        return self.n_fft // 2 + 1

    def window(self, dtype=torch.float64, device="cpu") -> torch.Tensor:
        key = (self.n_fft, dtype, str(device))
        if key not in _WINDOW_CACHE:
            _WINDOW_CACHE[key] = torch.hann_window(
                self.n_fft, periodic=True, dtype=dtype, device=device
            )
        return _WINDOW_CACHE[key]


@dataclass
class Spectrogram:
    """Complex (channels, bins, frames) array plus its transform config."""

    values: np.ndarray
    config: StftConfig
    original_length: int
    sample_rate: int
    full_bins: int | None = None  # set when freq_truncate removed high bins

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]

    @property
    def is_truncated(self) -> bool:
        return self.full_bins is not None


def stft_tensor(x: torch.Tensor, config: StftConfig) -> torch.Tensor:
    """(..., length) real -> (..., full_bins, frames) complex."""
    lead = x.shape[:-1]
    length = x.shape[-1]
    if length < 1:
        raise DspError("cannot transform an empty signal")
    pad = (-length) % config.hop_length
    flat = x.reshape(-1, length)
    if pad:
        flat = torch.nn.functional.pad(flat, (0, pad))
    spec = torch.stft(
        flat,
        n_fft=config.n_fft,
        hop_length=config.hop_length,
        window=config.window(flat.dtype, flat.device),
        center=True,
        pad_mode="reflect",
        return_complex=True,
    )
    return spec.reshape(*lead, *spec.shape[-2:])


def istft_tensor(
    spec: torch.Tensor, config: StftConfig, target_length: int
) -> torch.Tensor:
    """(..., full_bins, frames) complex -> (..., target_length) real."""
    if spec.shape[-2] != config.full_bins:
        raise DspError(
            f"expected {config.full_bins} bins, got {spec.shape[-2]}; "
            "restore truncated spectrograms before synthesis"
        )
    lead = spec.shape[:-2]
    flat = spec.reshape(-1, *spec.shape[-2:])
    window = config.window(flat.real.dtype, flat.device)
    try:
        out = torch.istft(
            flat,
            n_fft=config.n_fft,
            hop_length=config.hop_length,
            window=window,
            center=True,
            length=target_length,
        )
    except RuntimeError as e:  # zero window-envelope => non-invertible config
        raise DspError(f"overlap-add normalization failed: {e}") from e
    return out.reshape(*lead, target_length)


def stft(waveform: Waveform, config: StftConfig) -> Spectrogram:
    x = torch.from_numpy(np.ascontiguousarray(waveform.samples))
    spec = stft_tensor(x, config)
    return Spectrogram(
        values=spec.numpy(),
        config=config,
        original_length=waveform.n_samples,
        sample_rate=waveform.sample_rate,
    )


def istft(spectrogram: Spectrogram, target_length: int | None = None) -> Waveform:
    if spectrogram.is_truncated:
        raise DspError("spectrogram is frequency-truncated; apply freq_restore first")
    if target_length is None:
        target_length = spectrogram.original_length
    spec = torch.from_numpy(np.ascontiguousarray(spectrogram.values))
    out = istft_tensor(spec, spectrogram.config, target_length)
    return Waveform(out.numpy(), spectrogram.sample_rate)


# ---------------------------------------------------------------------------
# Frequency truncation
# ---------------------------------------------------------------------------

def truncate_bins(values, n_bins: int):
    """Keep the lowest ``n_bins`` frequency rows of a (..., bins, frames) array."""
    if n_bins <= 0:
        raise DspError(f"bin count must be positive, got {n_bins}")
    if n_bins > values.shape[-2]:
        raise DspError(f"cannot keep {n_bins} of {values.shape[-2]} bins")
    return values[..., :n_bins, :]


def restore_bins(values: torch.Tensor, full_bins: int) -> torch.Tensor:
    """Zero-fill high frequency rows back up to ``full_bins``."""
    missing = full_bins - values.shape[-2]
    if missing < 0:
        raise DspError("spectrogram already wider than the full bin count")
    if missing == 0:
        return values
    pad_shape = list(values.shape)
    pad_shape[-2] = missing
    zeros = values.new_zeros(pad_shape)
    return torch.cat([values, zeros], dim=-2)


def freq_truncate(spectrogram: Spectrogram, n_bins: int) -> Spectrogram:
    full = spectrogram.full_bins or spectrogram.n_bins
    values = truncate_bins(spectrogram.values, n_bins)
    return replace(spectrogram, values=values, full_bins=full)


def freq_restore(spectrogram: Spectrogram) -> Spectrogram:
    if not spectrogram.is_truncated:
        raise DspError("spectrogram carries no truncation record")
    full = spectrogram.full_bins
    missing = full - spectrogram.n_bins
    pad = np.zeros(
        (spectrogram.values.shape[0], missing, spectrogram.values.shape[2]),
        dtype=spectrogram.values.dtype,
    )
    values = np.concatenate([spectrogram.values, pad], axis=1)
    return replace(spectrogram, values=values, full_bins=None)


# ---------------------------------------------------------------------------
# Channel-wise sub-bands and complex packing
# ---------------------------------------------------------------------------

def subband_split(x, k: int):
    """(..., C, F, T) -> (..., k*C, F/k, T), ascending contiguous bands.

    Sub-band j of input channel i becomes output channel ``i*k + j``.
    Works on numpy arrays and torch tensors alike.
    """
    c, f, t = x.shape[-3:]
    if f % k:
        raise DspError(f"frequency size {f} not divisible by {k} sub-bands")
    return x.reshape(*x.shape[:-3], c * k, f // k, t)


def subband_merge(x, k: int):
    """Exact inverse of :func:`subband_split`."""
    ck, fk, t = x.shape[-3:]
    if ck % k:
        raise DspError(f"channel count {ck} not divisible by {k}")
    return x.reshape(*x.shape[:-3], ck // k, fk * k, t)


def pack_complex(spec: torch.Tensor) -> torch.Tensor:
    """Complex (..., C, F, T) -> real (..., 2C, F, T): (re, im) per channel."""
    stacked = torch.stack([spec.real, spec.imag], dim=-3)  # (..., C, 2, F, T)
    lead = spec.shape[:-3]
    return stacked.reshape(*lead, 2 * spec.shape[-3], *spec.shape[-2:])


def unpack_complex(x: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`pack_complex`."""
    if x.shape[-3] % 2:
        raise DspError("packed tensor must have an even channel count")
    lead = x.shape[:-3]
    pairs = x.reshape(*lead, x.shape[-3] // 2, 2, *x.shape[-2:])
    return torch.complex(pairs[..., 0, :, :], pairs[..., 1, :, :])
