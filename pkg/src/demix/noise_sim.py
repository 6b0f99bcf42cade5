"""Synthetic stem corruption: label-noise and bleeding.

Label-noise adds one donor instrument from one other class of a different
track at equal loudness (RMS-matched).  Bleeding adds low-level leakage of
all other classes of the same track.  Loudness is realized as RMS.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import (
    MIXTURE_NAME,
    SOURCE_CLASSES,
    StemSet,
    Waveform,
    load_track,
    save_wav,
    scan_dataset,
)
from .errors import ConfigError

LABEL_NOISE = "label_noise"
BLEEDING = "bleeding"

_RESAMPLE_ATTEMPTS = 8


@dataclass(frozen=True)
class CorruptionSpec:
    mode: str
    bleed_gain_db: float = -10.0
    p: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in (LABEL_NOISE, BLEEDING):
            raise ConfigError(f"unknown corruption mode {self.mode!r}")
        if self.bleed_gain_db >= 0:
            raise ConfigError("bleed_gain_db must be negative")
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError("affected fraction p must be in [0, 1]")


@dataclass
class CorruptedDataset:
    stems: dict[str, StemSet]
    mixtures: dict[str, Waveform]
    manifest: dict = field(default_factory=dict)


def rms(waveform) -> float:
    """Root mean square over all channels and samples."""
    x = waveform.samples if isinstance(waveform, Waveform) else np.asarray(waveform)
    return float(np.sqrt(np.mean(np.square(x)))) if x.size else 0.0


def _fit_length(samples: np.ndarray, length: int) -> np.ndarray:
    """Trim or tile a (channels, L) array to the target length."""
    if samples.shape[1] >= length:
        return samples[:, :length]
    reps = -(-length // samples.shape[1])
    return np.tile(samples, (1, reps))[:, :length]


def simulate_label_noise(
    tracks: dict[str, StemSet], spec: CorruptionSpec
) -> CorruptedDataset:
    """Inject one RMS-matched donor stem per affected (track, class).

    The donor class differs from the target class and the donor track from
    the target track, both drawn uniformly.  Mixtures are recomputed as the
    sum of the corrupted stems.  Donors with zero RMS are re-drawn up to 8
    times; on failure the (track, class) is skipped and recorded.
    """
    if spec.mode != LABEL_NOISE:
        raise ConfigError("spec mode must be label_noise")
    names = sorted(tracks)
    if len(names) < 2:
        raise ConfigError("label-noise needs at least 2 tracks (cross-song donors)")
    rng = np.random.default_rng(spec.seed)
    out_stems: dict[str, StemSet] = {}
    provenance: dict[str, dict] = {name: {} for name in names}
    skipped: list[list[str]] = []
    for name in names:
        clean = tracks[name]
        corrupted = {}
        for cls in SOURCE_CLASSES:
            target = clean[cls]
            entry = None
            if rng.random() < spec.p:
                for _ in range(_RESAMPLE_ATTEMPTS):
                    donor_cls = rng.choice([c for c in SOURCE_CLASSES if c != cls])
                    donor_track = rng.choice([n for n in names if n != name])
                    donor = tracks[str(donor_track)][str(donor_cls)]
                    # RMS-match against the actual injected segment, so the
                    # equal-loudness property holds even after trim/tile.
                    noise = _fit_length(
                        donor.with_channels(target.n_channels).samples,
                        target.n_samples,
                    )
                    donor_rms = rms(noise)
                    if donor_rms > 0:
                        gain = rms(target) / donor_rms
                        target = Waveform(
                            target.samples + gain * noise, target.sample_rate
                        )
                        entry = {
                            "donor_track": str(donor_track),
                            "donor_class": str(donor_cls),
                            "gain": gain,
                        }
                        break
                else:
                    skipped.append([name, cls])
            corrupted[cls] = target
            provenance[name][cls] = entry
        stemset = StemSet(corrupted)
        out_stems[name] = stemset
    mixtures = {name: out_stems[name].sum() for name in names}
    manifest = {
        "mode": LABEL_NOISE,
        "seed": spec.seed,
        "p": spec.p,
        "stems": provenance,
        "skipped": skipped,
    }
    return CorruptedDataset(out_stems, mixtures, manifest)


def simulate_bleeding(
    tracks: dict[str, StemSet], spec: CorruptionSpec
) -> CorruptedDataset:
    """Add the sum of all other classes' stems at ``bleed_gain_db``.

    Stems come from the same track, sample-aligned; the mixture is left
    unchanged (it equals the clean stem sum, and the corrupted stems sum to
    (1 + 3*gain) times it).
    """
    if spec.mode != BLEEDING:
        raise ConfigError("spec mode must be bleeding")
    gain = 10.0 ** (spec.bleed_gain_db / 20.0)
    out_stems = {}
    mixtures = {}
    for name in sorted(tracks):
        clean = tracks[name]
        total = clean.as_array().sum(axis=0)
        corrupted = {}
        for cls in SOURCE_CLASSES:
            others = total - clean[cls].samples
            corrupted[cls] = Waveform(
                clean[cls].samples + gain * others, clean.sample_rate
            )
        out_stems[name] = StemSet(corrupted)
        mixtures[name] = Waveform(total, clean.sample_rate)
    manifest = {
        "mode": BLEEDING,
        "seed": spec.seed,
        "bleed_gain_db": spec.bleed_gain_db,
        "gain": gain,
        "stems": {name: {cls: {"gain": gain} for cls in SOURCE_CLASSES}
                  for name in sorted(tracks)},
        "skipped": [],
    }
    return CorruptedDataset(out_stems, mixtures, manifest)


def simulate(tracks: dict[str, StemSet], spec: CorruptionSpec) -> CorruptedDataset:
    if spec.mode == LABEL_NOISE:
        return simulate_label_noise(tracks, spec)
    return simulate_bleeding(tracks, spec)


def corrupt_dataset_dir(root, out_dir, spec: CorruptionSpec,
                        fmt: str = "float32") -> dict:
    """Disk-to-disk corruption: same track layout plus ``manifest.json``."""
    index = scan_dataset(root)
    tracks = {rec.name: load_track(rec.path)[1] for rec in index.tracks}
    result = simulate(tracks, spec)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, stems in result.stems.items():
        tdir = out_dir / name
        tdir.mkdir(exist_ok=True)
        save_wav(tdir / f"{MIXTURE_NAME}.wav", result.mixtures[name], fmt)
        for cls in SOURCE_CLASSES:
            save_wav(tdir / f"{cls}.wav", stems[cls], fmt)
    (out_dir / "manifest.json").write_text(json.dumps(result.manifest, indent=2))
    return result.manifest
