"""Sectioned key-value run configuration.

The file mirrors the hyperparameter table layout: ``[stft]``, ``[model]``,
``[training]`` and ``[inference]`` sections with snake_case keys, plus an
optional ``[data]`` section.  Unknown sections or keys are rejected.  The
``DEMIX_SEED`` environment variable overrides the configured seed.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass

from .audio import SOURCE_CLASSES
from .errors import ConfigError
from .inference import SeparationPlan
from .model import ModelConfig
from .training import LossMaskSpec, TrainConfig

_SCHEMA = {
    "stft": {"n_fft": int, "hop_length": int},
    "model": {
        "frequency_bins": int,
        "initial_channels": int,
        "growth": int,
        "scales": int,
        "blocks_per_scale": int,
        "sub_bands": int,
        "tdf_bottleneck_factor": int,
        "sources": str,
    },
    "training": {
        "learning_rate": float,
        "batch_size": int,
        "chunk_frames": int,
        "loss_mask_dims": str,
        "q": float,
        "steps": int,
        "steps_per_epoch": int,
        "checkpoint_every": int,
        "seed": int,
    },
    "inference": {"overlap": int, "chunk_frames": int},
    "data": {"eval_root": str},
}


@dataclass
class RunConfig:
    model: ModelConfig
    training: TrainConfig
    plan: SeparationPlan
    eval_root: str | None = None


def _read(path) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with open(path) as f:
            parser.read_file(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except configparser.Error as e:
        raise ConfigError(f"config {path} malformed: {e}") from e
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        values[section] = {}
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            caster = _SCHEMA[section][key]
            try:
                values[section][key] = caster(raw)
            except ValueError as e:
                raise ConfigError(f"[{section}] {key}: {e}") from e
    return values


def load_run_config(path) -> RunConfig:
    v = _read(path)
    stft = v.get("stft", {})
    model = v.get("model", {})
    training = v.get("training", {})
    inference = v.get("inference", {})

    sources = tuple(
        s.strip() for s in model.get("sources", ",".join(SOURCE_CLASSES)).split(",")
    )
    for s in sources:
        if s not in SOURCE_CLASSES:
            raise ConfigError(f"unknown source class {s!r}")
    try:
        model_cfg = ModelConfig(
            n_fft=stft.get("n_fft", 8192),
            hop_length=stft.get("hop_length", 1024),
            freq_bins=model.get("frequency_bins", 4096),
            initial_channels=model.get("initial_channels", 64),
            growth=model.get("growth", 64),
            n_scales=model.get("scales", 5),
            blocks_per_scale=model.get("blocks_per_scale", 2),
            n_subbands=model.get("sub_bands", 4),
            tdf_bottleneck_factor=model.get("tdf_bottleneck_factor", 4),
            sources=sources,
        )
    except ConfigError:
        raise
    seed = training.get("seed", 0)
    env_seed = os.environ.get("DEMIX_SEED")
    if env_seed is not None:
        try:
            seed = int(env_seed)
        except ValueError as e:
            raise ConfigError(f"DEMIX_SEED must be an integer: {env_seed!r}") from e
    train_cfg = TrainConfig(
        learning_rate=training.get("learning_rate", 1e-4),
        batch_size=training.get("batch_size", 6),
        chunk_frames=training.get("chunk_frames", 256),
        loss_mask=LossMaskSpec(
            training.get("loss_mask_dims", "none"), training.get("q", 1.0)
        ),
        steps=training.get("steps", 10_000),
        steps_per_epoch=training.get("steps_per_epoch", 10_000),
        checkpoint_every=training.get("checkpoint_every", 0),
        seed=seed,
    )
    plan = SeparationPlan(
        chunk_frames=inference.get("chunk_frames", 1024),
        overlap=inference.get("overlap", 8),
        hop_length=model_cfg.hop_length,
    )
    return RunConfig(
        model=model_cfg,
        training=train_cfg,
        plan=plan,
        eval_root=v.get("data", {}).get("eval_root"),
    )
