"""PCM audio I/O and stem-dataset enumeration.

Datasets follow the one-directory-per-track layout
``<root>/<track>/{mixture,vocals,drums,bass,other}.wav``.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    AudioIOError,
    LengthMismatchError,
    MalformedHeaderError,
    MissingStemError,
    RateMismatchError,
    TruncatedPayloadError,
    UnsupportedFormatError,
)

logger = logging.getLogger(__name__)

#: Fixed class order used for tensor indexing throughout the package.
SOURCE_CLASSES = ("vocals", "drums", "bass", "other")

MIXTURE_NAME = "mixture"

_FORMATS = ("pcm16", "pcm24", "float32")


@dataclass
class Waveform:
    """Multichannel audio: ``samples`` is a (channels, length) float array."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ValueError("samples must be a (channels, length) array")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def with_channels(self, n_channels: int) -> "Waveform":
        """Duplicate a mono signal up to ``n_channels``; pass through if equal."""
        if self.n_channels == n_channels:
            return self
        if self.n_channels == 1:
            return Waveform(np.repeat(self.samples, n_channels, axis=0), self.sample_rate)
        raise ValueError(
            f"cannot adapt {self.n_channels}-channel audio to {n_channels} channels"
        )


@dataclass
class StemSet:
    """One Waveform per source class, all aligned in rate/channels/length."""

    stems: dict[str, Waveform]

    def __post_init__(self):
        if set(self.stems) != set(SOURCE_CLASSES):
            raise ValueError(f"stems must cover exactly {SOURCE_CLASSES}")
        ref = self.stems[SOURCE_CLASSES[0]]
        for name in SOURCE_CLASSES[1:]:
            w = self.stems[name]
            if w.sample_rate != ref.sample_rate:
                raise RateMismatchError(f"stem '{name}' sample rate differs")
            if w.n_channels != ref.n_channels:
                raise LengthMismatchError(f"stem '{name}' channel count differs")
            if w.n_samples != ref.n_samples:
                raise LengthMismatchError(f"stem '{name}' length differs")

    def __getitem__(self, name: str) -> Waveform:
        return self.stems[name]

    @property
    def sample_rate(self) -> int:
        return self.stems[SOURCE_CLASSES[0]].sample_rate

    @property
    def n_channels(self) -> int:
        return self.stems[SOURCE_CLASSES[0]].n_channels

    @property
    def n_samples(self) -> int:
        return self.stems[SOURCE_CLASSES[0]].n_samples

    def as_array(self) -> np.ndarray:
        """Stack stems into a (classes, channels, length) array in class order."""
        return np.stack([self.stems[c].samples for c in SOURCE_CLASSES])

    def sum(self) -> Waveform:
        return Waveform(self.as_array().sum(axis=0), self.sample_rate)


@dataclass
class TrackRecord:
    name: str
    path: Path
    duration: int  # samples


@dataclass
class DatasetIndex:
    root: Path
    tracks: list[TrackRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.tracks)


# ---------------------------------------------------------------------------
# RIFF/WAVE parsing.  Hand-rolled so that malformed headers, unsupported
# codecs and truncated payloads surface as distinct error types.
# ---------------------------------------------------------------------------

def _parse_wav(data: bytes, path):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeaderError(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    while pos + 8 <= len(data):
        cid = data[pos : pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4 : pos + 8])
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + 16 > len(data):
                raise MalformedHeaderError(f"{path}: fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", data[body : body + 16])
        elif cid == b"data":
            if fmt is None:
                raise MalformedHeaderError(f"{path}: data chunk precedes fmt chunk")
            if body + size > len(data):
                raise TruncatedPayloadError(
                    f"{path}: data chunk claims {size} bytes, "
                    f"{len(data) - body} available"
                )
            return fmt, data[body : body + size]
        pos = body + size + (size & 1)
    if fmt is None:
        raise MalformedHeaderError(f"{path}: no fmt chunk")
    raise MalformedHeaderError(f"{path}: no data chunk")


def _check_fmt(fmt, path):
    audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"{path}: {channels} channels unsupported")
    if audio_format == 1 and bits in (16, 24):
        return channels, rate, bits, False
    if audio_format == 3 and bits == 32:
        return channels, rate, bits, True
    raise UnsupportedFormatError(
        f"{path}: format tag {audio_format} with {bits} bits unsupported"
    )


def load_wav(path) -> Waveform:
    """Read a PCM16/PCM24/float32 RIFF file, scaling integers to [-1, 1)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise AudioIOError(f"{path}: {e}") from e
    fmt, payload = _parse_wav(data, path)
    channels, rate, bits, is_float = _check_fmt(fmt, path)
    bytes_per = bits // 8
    frame = bytes_per * channels
    if len(payload) % frame:
        raise TruncatedPayloadError(f"{path}: payload not a whole number of frames")
    if is_float:
        flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    elif bits == 16:
        flat = np.frombuffer(payload, dtype="<i2").astype(np.float64) / 32768.0
    else:  # 24-bit: sign-extend 3-byte little-endian
        raw = np.frombuffer(payload, dtype=np.uint8).reshape(-1, 3)
        ints = (
            raw[:, 0].astype(np.int32)
            | (raw[:, 1].astype(np.int32) << 8)
            | (raw[:, 2].astype(np.int32) << 16)
        )
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints)
        flat = ints.astype(np.float64) / float(1 << 23)
    samples = flat.reshape(-1, channels).T
    if rate <= 0:
        raise MalformedHeaderError(f"{path}: invalid sample rate {rate}")
    return Waveform(samples, rate)


def save_wav(path, waveform: Waveform, fmt: str = "float32") -> None:
    """Write a canonical 44-byte-header RIFF file in the given format."""
    if fmt not in _FORMATS:
        raise ValueError(f"format must be one of {_FORMATS}, got {fmt!r}")
    if not np.all(np.isfinite(waveform.samples)):
        raise AudioIOError(f"{path}: non-finite sample encountered")
    interleaved = waveform.samples.T  # (length, channels)
    if fmt == "float32":
        payload = interleaved.astype("<f4").tobytes()
        tag, bits = 3, 32
    elif fmt == "pcm16":
        q = np.clip(np.round(interleaved * 32768.0), -32768, 32767)
        payload = q.astype("<i2").tobytes()
        tag, bits = 1, 16
    else:  # pcm24
        q = np.clip(np.round(interleaved * float(1 << 23)), -(1 << 23), (1 << 23) - 1)
        ints = q.astype(np.int32)
        out = np.empty(ints.shape + (3,), dtype=np.uint8)
        out[..., 0] = ints & 0xFF
        out[..., 1] = (ints >> 8) & 0xFF
        out[..., 2] = (ints >> 16) & 0xFF
        payload = out.tobytes()
        tag, bits = 1, 24
    channels = waveform.n_channels
    block_align = channels * bits // 8
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        tag,
        channels,
        waveform.sample_rate,
        waveform.sample_rate * block_align,
        block_align,
        bits,
        b"data",
        len(payload),
    )
    try:
        Path(path).write_bytes(header + payload)
    except OSError as e:
        raise AudioIOError(f"{path}: {e}") from e


def wav_info(path) -> tuple[int, int, int]:
    """Header-only probe: (channels, sample_rate, n_samples)."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise AudioIOError(f"{path}: {e}") from e
    fmt, payload = _parse_wav(data, path)
    channels, rate, bits, _ = _check_fmt(fmt, path)
    return channels, rate, len(payload) // (channels * bits // 8)


# ---------------------------------------------------------------------------
# Dataset layout
# ---------------------------------------------------------------------------

def _track_files(directory: Path) -> dict[str, Path]:
    return {name: directory / f"{name}.wav" for name in (MIXTURE_NAME,) + SOURCE_CLASSES}


def load_track(directory) -> tuple[Waveform, StemSet]:
    """Load mixture + stems from one track directory, verifying alignment."""
    directory = Path(directory)
    files = _track_files(directory)
    for name, p in files.items():
        if not p.is_file():
            raise MissingStemError(f"{directory}: missing '{name}' ({p.name})")
    loaded = {name: load_wav(p) for name, p in files.items()}
    mixture = loaded[MIXTURE_NAME]
    for name in SOURCE_CLASSES:
        w = loaded[name]
        if w.sample_rate != mixture.sample_rate:
            raise RateMismatchError(f"{directory}: '{name}' sample rate differs")
        if w.n_samples != mixture.n_samples:
            raise LengthMismatchError(f"{directory}: '{name}' length differs")
    return mixture, StemSet({c: loaded[c] for c in SOURCE_CLASSES})


def mixture_residual(mixture: Waveform, stems: StemSet) -> float:
    """Max absolute difference between the mixture and the stem sum."""
    return float(np.max(np.abs(mixture.samples - stems.sum().samples)))


def scan_dataset(root) -> DatasetIndex:
    """Index valid track directories under ``root``, sorted by name.

    Invalid subdirectories are logged as warnings and skipped.
    """
    root = Path(root)
    if not root.is_dir():
        raise AudioIOError(f"dataset root {root} is not a readable directory")
    index = DatasetIndex(root=root)
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = _track_files(sub)
        try:
            infos = {}
            for name, p in files.items():
                if not p.is_file():
                    raise MissingStemError(f"missing '{name}'")
                infos[name] = wav_info(p)
            rates = {i[1] for i in infos.values()}
            lengths = {i[2] for i in infos.values()}
            if len(rates) != 1:
                raise RateMismatchError("sample rates differ across files")
            if len(lengths) != 1:
                raise LengthMismatchError("lengths differ across files")
        except (AudioIOError, MissingStemError, RateMismatchError, LengthMismatchError) as e:
            logger.warning("skipping track directory %s: %s", sub, e)
            continue
        index.tracks.append(TrackRecord(sub.name, sub, lengths.pop()))
    return index


def load_dataset(index: DatasetIndex) -> list[StemSet]:
    """Materialize every indexed track's stems in memory."""
    return [load_track(rec.path)[1] for rec in index.tracks]
