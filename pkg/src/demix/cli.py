"""Command-line surface: train, separate, evaluate, simulate-noise, blend."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np
import torch

from . import audio, metrics, noise_sim
from .audio import SOURCE_CLASSES, StemSet
from .config import load_run_config
from .errors import ConfigError, DemixError
from .inference import SeparationPlan, blend, separate
from .model import build, load_checkpoint, save_checkpoint
from .training import train


def _add_train(sub):
    p = sub.add_parser("train", help="train a model from a run config")
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--data", required=True, help="training dataset root")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--resume", help="checkpoint to resume weights from")


def _add_separate(sub):
    p = sub.add_parser("separate", help="separate a mixture with trained models")
    p.add_argument("--ckpt", required=True, nargs="+", help="checkpoint file(s)")
    p.add_argument("--input", required=True, help="input mixture WAV")
    p.add_argument("--out", required=True, help="output directory for stems")
    p.add_argument("--chunk-frames", type=int, default=1024)
    p.add_argument("--overlap", type=int, default=8)
    p.add_argument(
        "--blend-weights",
        help="comma-separated per-checkpoint weights (default: equal)",
    )


def _add_evaluate(sub):
    p = sub.add_parser("evaluate", help="score estimates against references")
    p.add_argument("--est", required=True, help="directory of estimated stems")
    p.add_argument("--ref", required=True, help="reference dataset root")
    p.add_argument("--report", required=True, help="output JSON report path")
    p.add_argument("--csdr", action="store_true", help="also compute chunked SDR")


def _add_simulate(sub):
    p = sub.add_parser("simulate-noise", help="corrupt a clean stem dataset")
    p.add_argument("--mode", required=True, choices=["label-noise", "bleeding"])
    p.add_argument("--data", required=True, help="clean dataset root")
    p.add_argument("--out", required=True, help="corrupted dataset output root")
    p.add_argument("--bleed-gain-db", type=float, default=-10.0)
    p.add_argument("--p", type=float, default=1.0, help="affected stem fraction")
    p.add_argument("--seed", type=int, default=0)


def _add_blend(sub):
    p = sub.add_parser("blend", help="blend several estimate directories")
    p.add_argument(
        "--inputs",
        required=True,
        help="comma-separated DIR:WEIGHT entries of estimate directories",
    )
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="demix",
        description="Music source separation: training, inference, evaluation",
    )
    parser.add_argument("--threads", type=int, default=0, help="cap worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_train(sub)
    _add_separate(sub)
    _add_evaluate(sub)
    _add_simulate(sub)
    _add_blend(sub)
    return parser


def _load_estimate_dir(path: Path) -> StemSet:
    stems = {}
    for cls in SOURCE_CLASSES:
        f = path / f"{cls}.wav"
        if not f.is_file():
            raise ConfigError(f"estimate directory {path} lacks {cls}.wav")
        stems[cls] = audio.load_wav(f)
    return StemSet(stems)


def _write_stems(out_dir: Path, stems) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    items = stems.stems.items() if isinstance(stems, StemSet) else stems.items()
    for cls, wav in items:
        audio.save_wav(out_dir / f"{cls}.wav", wav, "float32")


def _cmd_train(args) -> int:
    cfg = load_run_config(args.config)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = audio.scan_dataset(args.data)
    tracks = audio.load_dataset(index)
    if args.resume:
        model, _meta = load_checkpoint(args.resume)
        if model.config != cfg.model:
            raise ConfigError("resume checkpoint config differs from run config")
    else:
        model = build(cfg.model, seed=cfg.training.seed)

    eval_fn = None
    if cfg.eval_root:
        eval_index = audio.scan_dataset(cfg.eval_root)

        def eval_fn(m):
            reports = []
            with torch.no_grad():
                for rec in eval_index.tracks:
                    mixture, ref = audio.load_track(rec.path)
                    est = separate(m, mixture, cfg.plan)
                    reports.append(metrics.evaluate_track(ref, est, rec.name))
            return metrics.aggregate(reports).global_mean

    with open(out_dir / "train.log", "w") as log:
        state = train(
            model,
            tracks,
            cfg.training,
            log_file=log,
            checkpoint_dir=str(out_dir),
            eval_fn=eval_fn,
        )
    save_checkpoint(
        out_dir / "final.dmx3",
        model,
        {"step": state.step, "epoch": state.epoch, "sdr_history": state.sdr_history},
    )
    print(f"trained {state.step} steps -> {out_dir / 'final.dmx3'}")
    return 0


def _cmd_separate(args) -> int:
    mixture = audio.load_wav(args.input)
    estimates = []
    for ckpt in args.ckpt:
        model, _meta = load_checkpoint(ckpt)
        plan = SeparationPlan(
            chunk_frames=args.chunk_frames,
            overlap=args.overlap,
            hop_length=model.config.hop_length,
        )
        estimates.append(
            separate(model, mixture.with_channels(model.config.audio_channels), plan)
        )
    if len(estimates) == 1 and not isinstance(estimates[0], StemSet):
        _write_stems(Path(args.out), estimates[0])
        return 0
    if not all(isinstance(e, StemSet) for e in estimates):
        raise ConfigError("blending requires four-source checkpoints")
    weights = None
    if args.blend_weights:
        weights = [float(w) for w in args.blend_weights.split(",")]
        if len(weights) != len(estimates):
            raise ConfigError("need one blend weight per checkpoint")
    result = blend(estimates, weights) if len(estimates) > 1 else estimates[0]
    _write_stems(Path(args.out), result)
    return 0


def _cmd_evaluate(args) -> int:
    ref_index = audio.scan_dataset(args.ref)
    if not ref_index.tracks:
        raise ConfigError(f"no valid tracks under {args.ref}")
    reports = []
    for rec in ref_index.tracks:
        _mixture, ref = audio.load_track(rec.path)
        est = _load_estimate_dir(Path(args.est) / rec.name)
        reports.append(
            metrics.evaluate_track(ref, est, rec.name, compute_csdr=args.csdr)
        )
    report = metrics.aggregate(reports)
    Path(args.report).write_text(report.to_json(indent=2))
    print(f"global mean SDR {report.global_mean:.2f} dB -> {args.report}")
    return 0


def _cmd_simulate(args) -> int:
    mode = args.mode.replace("-", "_")
    spec = noise_sim.CorruptionSpec(
        mode=mode, bleed_gain_db=args.bleed_gain_db, p=args.p, seed=args.seed
    )
    noise_sim.corrupt_dataset_dir(args.data, args.out, spec)
    print(f"corrupted dataset written to {args.out}")
    return 0


def _cmd_blend(args) -> int:
    estimates = []
    weights = []
    for entry in args.inputs.split(","):
        if ":" in entry:
            d, w = entry.rsplit(":", 1)
            weights.append(float(w))
        else:
            d, weights = entry, weights + [1.0]
        estimates.append(_load_estimate_dir(Path(d)))
    result = blend(estimates, np.asarray(weights))
    _write_stems(Path(args.out), result)
    return 0


_COMMANDS = {
    "train": _cmd_train,
    "separate": _cmd_separate,
    "evaluate": _cmd_evaluate,
    "simulate-noise": _cmd_simulate,
    "blend": _cmd_blend,
}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads and args.threads > 0:
        torch.set_num_threads(args.threads)
    try:
        return _COMMANDS[args.command](args)
    except (DemixError, OSError, ValueError) as e:
        print(f"demix {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(run())


if __name__ == "__main__":
    entry()
