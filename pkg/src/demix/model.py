"""Sub-band spectrogram U-Net with time-distributed fully-connected blocks.

A ResUNet-style encoder/decoder over channel-wise sub-banded complex
spectrograms.  Each residual block carries a bottlenecked frequency-axis
linear (TDF) between its two 3x3 convolutions; decoder skips are element-wise
additions; the packed input spectrogram is concatenated right before the
final 1x1 convolution; the head emits one complex-stereo spectrogram per
source class.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

from .audio import SOURCE_CLASSES
from .dsp import StftConfig, pack_complex, subband_merge, subband_split, unpack_complex
from .errors import CheckpointError, ShapeError
from .errors import ConfigError as ModelConfigError

CHECKPOINT_MAGIC = b"DMX3"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    n_fft: int = 8192
    hop_length: int = 1024
    freq_bins: int = 4096
    audio_channels: int = 2
    initial_channels: int = 64
    growth: int = 64
    n_scales: int = 5
    blocks_per_scale: int = 2
    n_subbands: int = 4
    tdf_bottleneck_factor: int = 4
    sources: tuple[str, ...] = SOURCE_CLASSES

    def __post_init__(self):
        for name in (
            "n_fft",
            "hop_length",
            "freq_bins",
            "audio_channels",
            "initial_channels",
            "growth",
            "n_scales",
            "blocks_per_scale",
            "n_subbands",
            "tdf_bottleneck_factor",
        ):
            if getattr(self, name) <= 0:
                raise ModelConfigError(f"{name} must be positive")
        if not self.sources:
            raise ModelConfigError("at least one source class required")
        if self.freq_bins > self.n_fft // 2 + 1:
            raise ModelConfigError("freq_bins exceeds n_fft/2 + 1")
        if self.freq_bins % self.n_subbands:
            raise ModelConfigError(
                f"freq_bins {self.freq_bins} not divisible by "
                f"{self.n_subbands} sub-bands"
            )
        band = self.freq_bins // self.n_subbands
        if band % (1 << self.n_scales):
            raise ModelConfigError(
                f"sub-band width {band} not divisible by 2^{self.n_scales}"
            )
        if (band >> self.n_scales) < self.tdf_bottleneck_factor:
            raise ModelConfigError(
                "bottleneck frequency width smaller than the TDF bottleneck factor"
            )

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.n_fft, self.hop_length)

    @property
    def packed_channels(self) -> int:
        # complex planes (re, im) per audio channel, times sub-bands
        return 2 * self.audio_channels * self.n_subbands

    def check_frames(self, frames: int) -> None:
        if frames % (1 << self.n_scales):
            raise ShapeError(
                f"frame count {frames} not divisible by 2^{self.n_scales}"
            )


#: Hyperparameter presets for the published configurations.
PRESETS: dict[str, ModelConfig] = {
    "modelA": ModelConfig(),
    "modelB": ModelConfig(),
    "model1": ModelConfig(hop_length=2048, initial_channels=128),
    "model2": ModelConfig(hop_length=2048, initial_channels=256),
    "model3": ModelConfig(
        n_fft=12288, hop_length=2048, initial_channels=128, sources=("vocals",)
    ),
}


class TdfBlock(nn.Module):
    """Bottlenecked linear map along frequency, shared over channels/frames."""

    def __init__(self, channels: int, freq: int, bottleneck_factor: int):
        super().__init__()
        hidden = freq // bottleneck_factor
        self.down = nn.Linear(freq, hidden)
        self.norm = nn.InstanceNorm2d(channels, eps=1e-5, affine=True)
        self.up = nn.Linear(hidden, freq)

    def forward(self, x):
        y = self.down(x.transpose(-2, -1))  # (B, C, T, hidden)
        y = torch.nn.functional.gelu(
            self.norm(y.transpose(-2, -1)), approximate="tanh"
        )
        y = self.up(y.transpose(-2, -1)).transpose(-2, -1)
        return x + y


class ResidualBlock(nn.Module):
    def __init__(self, channels: int, freq: int, bottleneck_factor: int):
        super().__init__()
        self.norm1 = nn.InstanceNorm2d(channels, eps=1e-5, affine=True)
        self.conv1 = nn.Conv2d(channels, channels, 3, padding=1)
        self.norm2 = nn.InstanceNorm2d(channels, eps=1e-5, affine=True)
        self.tdf = TdfBlock(channels, freq, bottleneck_factor)
        self.conv2 = nn.Conv2d(channels, channels, 3, padding=1)

    def forward(self, x):
        y = self.conv1(torch.nn.functional.gelu(self.norm1(x), approximate="tanh"))
        y = self.tdf(torch.nn.functional.gelu(self.norm2(y), approximate="tanh"))
        return x + self.conv2(y)


def _blocks(n, channels, freq, bf):
    return nn.ModuleList(ResidualBlock(channels, freq, bf) for _ in range(n))


class SeparationNet(nn.Module):
    """Maps a packed mixture spectrogram to per-source packed spectrograms."""

    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = config
        c0, g = config.initial_channels, config.growth
        bf = config.tdf_bottleneck_factor
        band = config.freq_bins // config.n_subbands
        in_ch = config.packed_channels

        self.stem = nn.Conv2d(in_ch, c0, 1)
        self.enc_blocks = nn.ModuleList()
        self.downs = nn.ModuleList()
        ch, freq = c0, band
        for _ in range(config.n_scales):
            self.enc_blocks.append(_blocks(config.blocks_per_scale, ch, freq, bf))
            self.downs.append(nn.Conv2d(ch, ch + g, 2, stride=2))
            ch += g
            freq //= 2
        self.bottleneck = _blocks(config.blocks_per_scale, ch, freq, bf)
        self.ups = nn.ModuleList()
        self.dec_blocks = nn.ModuleList()
        for _ in range(config.n_scales):
            self.ups.append(nn.ConvTranspose2d(ch, ch - g, 2, stride=2))
            ch -= g
            freq *= 2
            self.dec_blocks.append(_blocks(config.blocks_per_scale, ch, freq, bf))
        self.head = nn.Conv2d(c0 + in_ch, len(config.sources) * in_ch, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, 2*audio_channels, F, T) -> (B, S, 2*audio_channels, F, T)."""
        cfg = self.config
        expected = (2 * cfg.audio_channels, cfg.freq_bins)
        if x.dim() != 4 or (x.shape[1], x.shape[2]) != expected:
            raise ShapeError(
                f"expected input (B, {expected[0]}, {expected[1]}, T), "
                f"got {tuple(x.shape)}"
            )
        cfg.check_frames(x.shape[3])

        v = subband_split(x, cfg.n_subbands)
        h = self.stem(v)
        skips = []
        for blocks, down in zip(self.enc_blocks, self.downs):
            for b in blocks:
                h = b(h)
            skips.append(h)
            h = down(h)
        for b in self.bottleneck:
            h = b(h)
        for up, blocks in zip(self.ups, self.dec_blocks):
            h = up(h) + skips.pop()
            for b in blocks:
                h = b(h)
        h = self.head(torch.cat([h, v], dim=1))
        b, _, fk, t = h.shape
        h = h.reshape(b, len(cfg.sources), cfg.packed_channels, fk, t)
        return subband_merge(h, cfg.n_subbands)


def _he_init(model: nn.Module, seed: int) -> None:
    gen = torch.Generator().manual_seed(seed)
    for module in model.modules():
        if isinstance(module, (nn.Conv2d, nn.Linear)):
            fan_in = module.weight.shape[1] * math.prod(module.weight.shape[2:])
        elif isinstance(module, nn.ConvTranspose2d):
            fan_in = module.weight.shape[0] * math.prod(module.weight.shape[2:])
        elif isinstance(module, nn.InstanceNorm2d):
            with torch.no_grad():
                module.weight.fill_(1.0)
                module.bias.fill_(0.0)
            continue
        else:
            continue
        std = math.sqrt(2.0 / fan_in)
        with torch.no_grad():
            module.weight.copy_(
                torch.randn(module.weight.shape, generator=gen) * std
            )
            if module.bias is not None:
                module.bias.zero_()


def build(config: ModelConfig, seed: int = 0) -> SeparationNet:
    """Construct the network with deterministic seeded initialization."""
    model = SeparationNet(config)
    _he_init(model, seed)
    return model


def param_count(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


# ---------------------------------------------------------------------------
# Spectrogram-domain forward for waveform batches
# ---------------------------------------------------------------------------

def estimate_batch(model, mixture: torch.Tensor) -> torch.Tensor:
    """Separate a waveform batch: (B, C, L) -> (B, S, C, L).

    Pipeline: stft -> crop to a whole number of hops of frames -> truncate
    high bins -> pack complex planes -> network -> unpack -> zero-fill high
    bins -> istft.  Differentiable end to end.
    """
    from .dsp import istft_tensor, restore_bins, stft_tensor, truncate_bins

    cfg = model.config
    b, c, length = mixture.shape
    if length % cfg.hop_length:
        raise ShapeError("chunk length must be a multiple of hop_length")
    spec = stft_tensor(mixture, cfg.stft)  # (B, C, bins, 1 + L/hop)
    frames = length // cfg.hop_length
    spec = spec[..., :frames]
    spec = truncate_bins(spec, cfg.freq_bins)
    packed = pack_complex(spec)  # (B, 2C, F, T)
    out = model(packed)  # (B, S, 2C, F, T)
    est = unpack_complex(out)  # (B, S, C, F, T) complex
    est = restore_bins(est, cfg.stft.full_bins)
    return istft_tensor(est, cfg.stft, length)


class _PassthroughConfig:
    """Full-bin stand-in config for operators that bypass the network."""

    def __init__(self, n_fft, hop_length, sources, audio_channels=2):
        self.n_fft = n_fft
        self.hop_length = hop_length
        self.freq_bins = n_fft // 2 + 1
        self.sources = tuple(sources)
        self.audio_channels = audio_channels

    @property
    def stft(self) -> StftConfig:
        return StftConfig(self.n_fft, self.hop_length)

    def check_frames(self, frames: int) -> None:
        pass


class IdentityOperator:
    """Stand-in for a trained network: replicates its input per source.

    Keeps every frequency bin, so chunked separation must reproduce the
    mixture exactly; useful for validating the inference path independently
    of any learned weights.
    """

    def __init__(self, config: ModelConfig):
        self.config = _PassthroughConfig(
            config.n_fft, config.hop_length, config.sources, config.audio_channels
        )

    def __call__(self, x: torch.Tensor) -> torch.Tensor:
        reps = [1] * x.dim()
        return x.unsqueeze(1).repeat(1, len(self.config.sources), *reps[1:])

    def parameters(self):
        return []


# ---------------------------------------------------------------------------
# Checkpoint format: magic "DMX3", version, length-prefixed JSON header
# {model config, training metadata, tensor index}, float32 LE payloads.
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: SeparationNet, metadata: dict | None = None) -> None:
    tensors = []
    payloads = []
    offset = 0
    for name, p in model.state_dict().items():
        data = p.detach().cpu().numpy().astype("<f4").tobytes()
        tensors.append(
            {
                "name": name,
                "shape": list(p.shape),
                "offset": offset,
                "length": len(data),
            }
        )
        payloads.append(data)
        offset += len(data)
    header = json.dumps(
        {
            "model_config": asdict(model.config),
            "metadata": metadata or {},
            "tensors": tensors,
        }
    ).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<Q", len(header)))
        f.write(header)
        for data in payloads:
            f.write(data)


def load_checkpoint(path) -> tuple[SeparationNet, dict]:
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", f.read(4))
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        (header_len,) = struct.unpack("<Q", f.read(8))
        header = json.loads(f.read(header_len))
        payload = f.read()
    cfg_dict = dict(header["model_config"])
    cfg_dict["sources"] = tuple(cfg_dict["sources"])
    config = ModelConfig(**cfg_dict)
    model = SeparationNet(config)
    state = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"] : entry["offset"] + entry["length"]]
        arr = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).copy()
        state[entry["name"]] = torch.from_numpy(arr)
    try:
        model.load_state_dict(state)
    except RuntimeError as e:
        raise CheckpointError(f"{path}: tensor index inconsistent: {e}") from e
    return model, header["metadata"]
