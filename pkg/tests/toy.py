"""Synthetic band-separated toy dataset and tiny model config for tests."""

import numpy as np

from demix.audio import StemSet, Waveform
from demix.model import ModelConfig

TOY_RATE = 8000

#: Disjoint frequency bands per class (Hz).
TOY_BANDS = {
    "bass": (60.0, 400.0),
    "vocals": (500.0, 1200.0),
    "drums": (1300.0, 2500.0),
    "other": (2600.0, 3800.0),
}

TINY_CONFIG = ModelConfig(
    n_fft=256,
    hop_length=64,
    freq_bins=64,
    initial_channels=8,
    growth=8,
    n_scales=2,
    blocks_per_scale=1,
    n_subbands=2,
    tdf_bottleneck_factor=4,
)


def _burst_envelope(n, rng, seg=2000, lo=0.4, burst_p=0.02, burst_gain=4.0):
    """Smooth amplitude modulation in [lo, 1] with rare loud bursts.

    Sources never go silent, so chunk-level loss ranks by corruption rather
    than by activity; the occasional bursts give cross-stem bleed a
    heavy-tailed temporal profile that segment-level masking can discard.
    """
    n_seg = -(-n // seg)
    levels = rng.uniform(lo, 1.0, size=n_seg)
    levels[rng.random(n_seg) < burst_p] *= burst_gain
    env = np.repeat(levels, seg)[:n]
    kernel = np.hanning(501)
    kernel /= kernel.sum()
    return np.convolve(env, kernel, mode="same")


def _band_noise(n, lo, hi, rng):
    spec = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, d=1.0 / TOY_RATE)
    spec[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spec, n)
    return x / (np.std(x) + 1e-12)


def _tonal(n, lo, hi, rng, n_partials=5):
    t = np.arange(n) / TOY_RATE
    x = np.zeros(n)
    for _ in range(n_partials):
        f = rng.uniform(lo, hi)
        x += np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return x / (np.std(x) + 1e-12)


def make_toy_track(seconds, rng) -> StemSet:
    """One stereo track: tonal bass/vocals, band-limited noise drums/other."""
    n = int(seconds * TOY_RATE)
    stems = {}
    for cls, (lo, hi) in TOY_BANDS.items():
        if cls in ("bass", "vocals"):
            base = _tonal(n, lo, hi, rng)
        else:
            base = _band_noise(n, lo, hi, rng)
        env = _burst_envelope(n, rng)
        mono = 0.1 * base * env
        # mild stereo decorrelation via channel gains
        gains = rng.uniform(0.8, 1.2, size=2)
        stems[cls] = Waveform(np.stack([mono * g for g in gains]), TOY_RATE)
    return StemSet(stems)


def make_toy_dataset(n_tracks, seconds, seed) -> list[StemSet]:
    rng = np.random.default_rng(seed)
    return [make_toy_track(seconds, rng) for _ in range(n_tracks)]
