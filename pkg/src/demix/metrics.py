"""Signal-to-distortion metrics and leaderboard-style aggregation.

``sdr`` is the epsilon-guarded whole-signal energy ratio; ``csdr`` is its
chunked variant: per-second SDRs aggregated by median.  The chunked metric
is a plain energy-ratio simplification (no distortion-filter regression),
which the JSON report flags as ``metric_variant: "energy-ratio"``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .audio import SOURCE_CLASSES, StemSet, Waveform
from .errors import EvalError

EPSILON = 1e-7

METRIC_VARIANT = "energy-ratio"


def _as_array(x) -> np.ndarray:
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x, dtype=np.float64)


def sdr(reference, estimate) -> float:
    """10*log10((sum(s^2) + eps) / (sum((s - s_hat)^2) + eps)) in dB."""
    ref = _as_array(reference)
    est = _as_array(estimate)
    if ref.shape != est.shape:
        raise EvalError(f"shape mismatch: {ref.shape} vs {est.shape}")
    num = float(np.sum(ref**2)) + EPSILON
    den = float(np.sum((ref - est) ** 2)) + EPSILON
    return 10.0 * np.log10(num / den)


def csdr(reference, estimate, sample_rate: int | None = None,
         chunk_seconds: float = 1.0) -> float:
    """Median over non-overlapping chunks of the per-chunk SDR.

    The final partial chunk is dropped; chunks whose reference energy is
    below EPSILON are excluded.
    """
    if isinstance(reference, Waveform):
        sample_rate = reference.sample_rate
    if sample_rate is None:
        raise EvalError("sample_rate required for array inputs")
    ref = _as_array(reference)
    est = _as_array(estimate)
    if ref.shape != est.shape:
        raise EvalError(f"shape mismatch: {ref.shape} vs {est.shape}")
    chunk = int(round(chunk_seconds * sample_rate))
    n_chunks = ref.shape[-1] // chunk
    if n_chunks < 1:
        raise EvalError("signal shorter than one chunk")
    values = []
    for i in range(n_chunks):
        r = ref[..., i * chunk : (i + 1) * chunk]
        if float(np.sum(r**2)) < EPSILON:
            continue
        values.append(sdr(r, est[..., i * chunk : (i + 1) * chunk]))
    if not values:
        raise EvalError("no chunk with usable reference energy")
    return float(np.median(values))


@dataclass
class TrackReport:
    name: str
    per_class_sdr: dict[str, float]
    per_class_csdr: dict[str, float] | None = None

    @property
    def mean(self) -> float:
        return float(np.mean([self.per_class_sdr[c] for c in SOURCE_CLASSES]))


@dataclass
class EvalReport:
    tracks: list[TrackReport]
    per_class_mean: dict[str, float] = field(default_factory=dict)
    global_mean: float = 0.0
    per_class_csdr_median: dict[str, float] | None = None
    global_csdr: float | None = None

    def to_dict(self) -> dict:
        out = {
            "metric_variant": METRIC_VARIANT,
            "tracks": [
                {
                    "name": t.name,
                    "per_class_sdr": t.per_class_sdr,
                    "mean": t.mean,
                }
                for t in self.tracks
            ],
            "per_class_mean": self.per_class_mean,
            "global_mean": self.global_mean,
        }
        if self.per_class_csdr_median is not None:
            out["csdr"] = {
                "per_class_median": self.per_class_csdr_median,
                "global": self.global_csdr,
            }
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def evaluate_track(
    ref_stems: StemSet,
    est_stems: StemSet,
    name: str = "",
    compute_csdr: bool = False,
) -> TrackReport:
    """Per-class SDR (and optional chunked SDR) for one track."""
    scores = {c: sdr(ref_stems[c], est_stems[c]) for c in SOURCE_CLASSES}
    chunked = None
    if compute_csdr:
        chunked = {c: csdr(ref_stems[c], est_stems[c]) for c in SOURCE_CLASSES}
    return TrackReport(name=name, per_class_sdr=scores, per_class_csdr=chunked)


def aggregate(reports: list[TrackReport]) -> EvalReport:
    """Class means over tracks; global mean of per-track class means.

    Chunked SDR aggregates as the median over tracks per class, then the
    mean over classes.
    """
    if not reports:
        raise EvalError("cannot aggregate an empty report list")
    per_class = {
        c: float(np.mean([t.per_class_sdr[c] for t in reports]))
        for c in SOURCE_CLASSES
    }
    global_mean = float(np.mean([t.mean for t in reports]))
    out = EvalReport(
        tracks=list(reports), per_class_mean=per_class, global_mean=global_mean
    )
    if all(t.per_class_csdr is not None for t in reports):
        medians = {
            c: float(np.median([t.per_class_csdr[c] for t in reports]))
            for c in SOURCE_CLASSES
        }
        out.per_class_csdr_median = medians
        out.global_csdr = float(np.mean(list(medians.values())))
    return out
