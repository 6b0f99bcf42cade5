"""Noise-robust training: chunk sampling with cross-song mixing, waveform
L2 loss with quantile loss masking, the Adam loop, and the stopping rule.

The robust core is rank-based: per class, only the ``max(1, floor(q*N))``
smallest per-element losses contribute to the update; everything above the
q-quantile is masked out and receives exactly zero gradient.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from .audio import SOURCE_CLASSES, StemSet
from .errors import ShapeError, TrainingError
from .model import SeparationNet, estimate_batch, save_checkpoint
from .tensorops import AdamState, adam_step

logger = logging.getLogger(__name__)

MASK_NONE = "none"
MASK_BATCH = "batch"
MASK_BATCH_TIME = "batch_time"
_MASK_DIMS = (MASK_NONE, MASK_BATCH, MASK_BATCH_TIME)


@dataclass(frozen=True)
class LossMaskSpec:
    dims: str = MASK_NONE
    q: float = 1.0

    def __post_init__(self):
        if self.dims not in _MASK_DIMS:
            raise TrainingError(f"loss mask dims must be one of {_MASK_DIMS}")
        if self.dims != MASK_NONE and not 0.0 < self.q <= 1.0:
            raise TrainingError(f"q must be in (0, 1], got {self.q}")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 6
    chunk_frames: int = 256
    loss_mask: LossMaskSpec = LossMaskSpec()
    steps: int = 10_000
    steps_per_epoch: int = 10_000
    early_stop_window: int = 10
    early_stop_delta: float = 0.1
    checkpoint_every: int = 0  # 0 = only at the end
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainingError("batch_size must be >= 1")
        if self.chunk_frames < 1:
            raise TrainingError("chunk_frames must be >= 1")


@dataclass
class TrainState:
    step: int = 0
    epoch: int = 0
    adam: AdamState | None = None
    sdr_history: list[float] = field(default_factory=list)


def sample_batch(
    tracks: list[StemSet],
    batch_size: int,
    chunk_samples: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """Random chunking with cross-song source mixing.

    For every batch item and every class independently, a uniformly random
    track and chunk start are drawn; the mixture is the sample-wise sum of
    the four class chunks.  Returns float32 arrays
    (targets [B, S, C, L], mixture [B, C, L]).
    """
    if not tracks:
        raise TrainingError("dataset is empty")
    usable = [t for t in tracks if t.n_samples >= chunk_samples]
    if not usable:
        raise TrainingError(
            f"no track is at least {chunk_samples} samples long"
        )
    channels = usable[0].n_channels
    targets = np.empty(
        (batch_size, len(SOURCE_CLASSES), channels, chunk_samples),
        dtype=np.float32,
    )
    for b in range(batch_size):
        for s, cls in enumerate(SOURCE_CLASSES):
            track = usable[rng.integers(len(usable))]
            start = int(rng.integers(track.n_samples - chunk_samples + 1))
            targets[b, s] = track[cls].samples[:, start : start + chunk_samples]
    return targets, targets.sum(axis=1)


def per_element_losses(
    est: torch.Tensor, target: torch.Tensor, spec: LossMaskSpec,
    hop_length: int | None = None,
) -> torch.Tensor:
    """Squared-error losses at the mask spec's granularity.

    dims in {none, batch}: mean over channels and samples -> [B, S].
    dims = batch_time: the chunk is cut into contiguous ``hop_length``-sample
    segments; mean per segment -> [B, S, T].
    """
    if est.shape != target.shape:
        raise ShapeError(f"estimate {tuple(est.shape)} != target {tuple(target.shape)}")
    sq = (est - target) ** 2  # [B, S, C, L]
    if spec.dims == MASK_BATCH_TIME:
        if hop_length is None:
            raise TrainingError("hop_length required for batch_time masking")
        b, s, c, length = sq.shape
        if length % hop_length:
            raise ShapeError("chunk length not a multiple of hop_length")
        seg = sq.reshape(b, s, c, length // hop_length, hop_length)
        return seg.mean(dim=(2, 4))  # [B, S, T]
    return sq.mean(dim=(2, 3))  # [B, S]


def keep_count(q: float, n: int) -> int:
    return max(1, int(np.floor(q * n)))


def select_keep(losses, q: float) -> torch.Tensor:
    """Boolean keep mask: per class, the ``max(1, floor(q*N))`` smallest
    losses along the pooled non-class axes, ties broken by ascending index.

    ``losses`` is [B, S] (batch masking) or [B, S, T] (batch+time, pooled
    jointly over batch and time).
    """
    if not 0.0 < q <= 1.0:
        raise TrainingError(f"q must be in (0, 1], got {q}")
    t = losses.detach() if isinstance(losses, torch.Tensor) else torch.as_tensor(losses)
    if t.dim() == 2:
        pooled = t.transpose(0, 1)  # [S, B]
    elif t.dim() == 3:
        pooled = t.permute(1, 0, 2).reshape(t.shape[1], -1)  # [S, B*T]
    else:
        raise ShapeError("losses must be [B, S] or [B, S, T]")
    n = pooled.shape[1]
    k = keep_count(q, n)
    order = torch.argsort(pooled, dim=1, stable=True)
    keep = torch.zeros_like(pooled, dtype=torch.bool)
    keep.scatter_(1, order[:, :k], True)
    if t.dim() == 2:
        return keep.transpose(0, 1)
    return keep.reshape(t.shape[1], t.shape[0], t.shape[2]).permute(1, 0, 2)


def masked_loss(losses: torch.Tensor, keep: torch.Tensor) -> torch.Tensor:
    """Mean of kept per-element losses per class, averaged over classes.

    Masked elements are excluded from the graph entirely, so their
    gradients are exactly zero.
    """
    if losses.shape != keep.shape:
        raise ShapeError("keep mask shape must match losses")
    if losses.dim() == 2:
        pooled, kept = losses.transpose(0, 1), keep.transpose(0, 1)
    else:
        s = losses.shape[1]
        pooled = losses.permute(1, 0, 2).reshape(s, -1)
        kept = keep.permute(1, 0, 2).reshape(s, -1)
    per_class = (pooled * kept).sum(dim=1) / kept.sum(dim=1).clamp(min=1)
    return per_class.mean()


def train_step(
    model: SeparationNet,
    batch: tuple[np.ndarray, np.ndarray],
    config: TrainConfig,
    state: TrainState,
) -> tuple[TrainState, dict]:
    """One optimization step; returns the state and a log record
    {step, raw_loss, masked_loss, kept_fraction}."""
    targets_np, mixture_np = batch
    params = [p for p in model.parameters()]
    if state.adam is None:
        state.adam = AdamState.init(params)
    target = torch.from_numpy(targets_np)
    mixture = torch.from_numpy(mixture_np)
    est = estimate_batch(model, mixture)
    spec = config.loss_mask
    hop = model.config.hop_length
    losses = per_element_losses(est, target, spec, hop_length=hop)
    if spec.dims == MASK_NONE:
        keep = torch.ones_like(losses, dtype=torch.bool)
    else:
        keep = select_keep(losses, spec.q)
    loss = masked_loss(losses, keep)
    raw = float(losses.detach().mean())
    if not torch.isfinite(loss):
        raise TrainingError(f"NaN/inf loss at step {state.step}")
    model.zero_grad(set_to_none=True)
    loss.backward()
    grads = [
        p.grad if p.grad is not None else torch.zeros_like(p) for p in params
    ]
    adam_step(params, grads, state.adam, config.learning_rate)
    state.step += 1
    return state, {
        "step": state.step,
        "raw_loss": raw,
        "masked_loss": float(loss.detach()),
        "kept_fraction": float(keep.float().mean()),
    }


def early_stop(
    sdr_history: list[float], window: int = 10, delta: float = 0.1
) -> bool:
    """True iff the best of the last ``window`` epochs failed to improve on
    the best of all earlier epochs by at least ``delta`` dB."""
    if len(sdr_history) < window + 1:
        return False
    recent = sdr_history[-window:]
    baseline = sdr_history[:-window]
    return max(recent) - max(baseline) < delta


def train(
    model: SeparationNet,
    tracks: list[StemSet],
    config: TrainConfig,
    log_file=None,
    checkpoint_dir=None,
    eval_fn=None,
    state: TrainState | None = None,
) -> TrainState:
    """Run the loop for ``config.steps`` steps.

    ``eval_fn(model) -> mean SDR`` (optional) is called at each epoch
    boundary; training stops early per the window rule when it is present.
    One tab-separated log line is written per step.
    """
    rng = np.random.default_rng(config.seed)
    state = state or TrainState()
    chunk_samples = config.chunk_frames * model.config.hop_length
    if log_file is not None:
        log_file.write("step\traw_loss\tmasked_loss\tkept_fraction\n")
    while state.step < config.steps:
        batch = sample_batch(tracks, config.batch_size, chunk_samples, rng)
        state, record = train_step(model, batch, config, state)
        if log_file is not None:
            log_file.write(
                "{step}\t{raw_loss:.6g}\t{masked_loss:.6g}\t"
                "{kept_fraction:.4f}\n".format(**record)
            )
        if checkpoint_dir is not None and config.checkpoint_every and (
            state.step % config.checkpoint_every == 0
        ):
            save_checkpoint(
                f"{checkpoint_dir}/step{state.step:08d}.dmx3",
                model,
                {"step": state.step},
            )
        if state.step % config.steps_per_epoch == 0:
            state.epoch += 1
            if eval_fn is not None:
                score = float(eval_fn(model))
                state.sdr_history.append(score)
                logger.info("epoch %d mean SDR %.3f dB", state.epoch, score)
                if early_stop(
                    state.sdr_history,
                    config.early_stop_window,
                    config.early_stop_delta,
                ):
                    logger.info("early stop at epoch %d", state.epoch)
                    break
    return state
