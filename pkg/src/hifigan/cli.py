"""Command-line entry points: train, synth, bench, params, exp-b1, exp-b2, melcmp."""

import argparse
import dataclasses
import glob
import logging
import os
import sys
from typing import List, Optional

import numpy as np
from threadpoolctl import threadpool_limits

from . import experiments as ex
from .audio import AudioClip, WavError, wav_read, wav_write
from .bench import bench_generator, compare
from .checkpoint import CheckpointError, load_state
from .config import ConfigError, RunConfig, load_config, preset
from .discriminators import (MultiPeriodDiscriminator, MultiScaleDiscriminator, scaled_mpd,
                             scaled_msd)
from .generator import Generator, build_generator, synthesize
from .nn import param_count
from .signal import load_mel, mel_spectrogram
from .trainer import Trainer, TrainingDiverged

log = logging.getLogger("hifigan")

FAST_WIDTH = 1 / 8
FAST_B2_STEPS = 2000


class CommandError(Exception):
    """A user-facing failure: printed without a traceback, exit status 2."""


def setup_logging():
    level = os.environ.get("HFG_LOG", "info").upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        level = "INFO"
    logging.basicConfig(level=getattr(logging, level), format="%(message)s", stream=sys.stderr)


def resolve_config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return preset(getattr(args, "variant", None) or "v1")


def load_generator(cfg: RunConfig, checkpoint: Optional[str], seed: int) -> Generator:
    gen = build_generator(cfg.gen, seed=seed).astype(np.float32)
    if checkpoint is None:
        log.warning("no --checkpoint given: using randomly initialised generator weights")
        return gen
    state = load_state(checkpoint)
    own = {k: v for k, v in state.items() if k.startswith("gen.")}
    if not own:
        raise CommandError(f"{checkpoint}: no generator weights (entries prefixed 'gen.')")
    gen.load_state_dict(own, "gen")
    return gen


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_params(args) -> int:
    cfg = resolve_config(args)
    gen = build_generator(cfg.gen, seed=0)
    rows = [("pre", param_count(gen.pre))]
    for i, (up, mrf) in enumerate(zip(gen.up, gen.mrf)):
        rows.append((f"up{i}", param_count(up)))
        rows.append((f"mrf{i}", param_count(mrf)))
    rows.append(("post", param_count(gen.post)))
    total = param_count(gen)
    print(f"generator {cfg.gen.variant}")
    for name, n in rows:
        print(f"  {name:<8}{n:>12,d}")
    print(f"  {'total':<8}{total:>12,d}  ({total / 1e6:.2f}M)")
    if args.discriminators:
        mpd = MultiPeriodDiscriminator(cfg.mpd, rng=np.random.default_rng(0))
        msd = MultiScaleDiscriminator(cfg.msd, rng=np.random.default_rng(0))
        print(f"mpd total {param_count(mpd):,d}")
        print(f"msd total {param_count(msd):,d}")
    return 0


def cmd_synth(args) -> int:
    cfg = resolve_config(args)
    if args.checkpoint and not os.path.exists(args.checkpoint):
        raise CommandError(f"checkpoint not found: {args.checkpoint}")
    if not os.path.exists(args.input):
        raise CommandError(f"input not found: {args.input}")
    if args.input.lower().endswith(".wav"):
        clip = wav_read(args.input)
        if clip.sample_rate != cfg.mel.sample_rate:
            raise CommandError(f"{args.input}: sample rate {clip.sample_rate} != "
                               f"configured {cfg.mel.sample_rate}")
        mel = mel_spectrogram(clip.samples, cfg.mel)
        log.info(f"copy synthesis: {mel.frames} frames from {args.input}")
    else:
        mel = load_mel(args.input, cfg.mel)
    gen = load_generator(cfg, args.checkpoint, args.seed)
    audio = synthesize(gen, mel)
    wav_write(args.output, AudioClip(cfg.mel.sample_rate, np.clip(audio, -1.0, 1.0)))
    print(f"wrote {args.output}: {audio.size} samples ({mel.frames} frames)")
    return 0


def cmd_bench(args) -> int:
    variants = ["v1", "v2", "v3"] if args.all else [None]
    reports = []
    for v in variants:
        cfg = preset(v) if v else resolve_config(args)
        # speed does not depend on weight values, so presets run with random weights
        if v is None and args.checkpoint:
            gen = load_generator(cfg, args.checkpoint, args.seed)
        else:
            gen = build_generator(cfg.gen, seed=args.seed)
        rep = bench_generator(gen, args.seconds, repeats=args.repeats, warmup=args.warmup,
                              threads=args.threads, sample_rate=cfg.mel.sample_rate)
        print(rep.format())
        print()
        reports.append(rep)
    if len(reports) > 1:
        print(compare(reports))
    return 0


def _read_clips(data_dir: str, sample_rate: int) -> List[AudioClip]:
    paths = sorted(glob.glob(os.path.join(data_dir, "*.wav")))
    if not paths:
        raise CommandError(f"no .wav files in {data_dir}")
    clips = []
    for p in paths:
        clip = wav_read(p)
        if clip.sample_rate != sample_rate:
            raise CommandError(f"{p}: sample rate {clip.sample_rate} != configured {sample_rate}")
        clips.append(clip)
    return clips


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    train_cfg = cfg.train
    overrides = {}
    if args.steps is not None:
        overrides["steps"] = args.steps
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        train_cfg = dataclasses.replace(train_cfg, **overrides)
    clips = _read_clips(args.data_dir, cfg.mel.sample_rate)
    os.makedirs(args.out_dir, exist_ok=True)
    mpd_cfg, msd_cfg = cfg.mpd, cfg.msd
    if args.fast:
        # narrow discriminators for quick desk-scale smoke runs
        mpd_cfg, msd_cfg = scaled_mpd(FAST_WIDTH, cfg.mpd.periods), scaled_msd(FAST_WIDTH)
    trainer = Trainer(cfg.gen, train_cfg, cfg.mel, mpd_cfg, msd_cfg, cfg.loss)
    if args.checkpoint:
        if not os.path.exists(args.checkpoint):
            raise CommandError(f"checkpoint not found: {args.checkpoint}")
        trainer.load(args.checkpoint)
        log.info(f"resumed from {args.checkpoint} at step {trainer.step}")
    ckpt_path = os.path.join(args.out_dir, "checkpoint.hfgc")
    metrics_path = os.path.join(args.out_dir, "metrics.jsonl")
    log.info(f"training {cfg.gen.variant} on {len(clips)} clips, {train_cfg.steps} steps, "
             f"{trainer.n_subdiscriminators()} sub-discriminators")
    with open(metrics_path, "a", encoding="utf-8") as metrics:
        def sink(line):
            print(line, flush=True)
            metrics.write(line + "\n")
            metrics.flush()

        remaining = train_cfg.steps
        while remaining > 0:
            chunk = min(remaining, args.save_every) if args.save_every else remaining
            trainer.fit(clips, chunk, sink=sink)
            trainer.save(ckpt_path)
            remaining -= chunk
    log.info(f"saved {ckpt_path}")
    return 0


def cmd_exp_b1(args) -> int:
    cfg = ex.B1_FAST if args.fast else ex.B1_FULL
    if args.repeats is not None:
        cfg = dataclasses.replace(cfg, repeats=args.repeats)
    if args.steps is not None:
        cfg = dataclasses.replace(cfg, steps=args.steps)
    ratios = args.ratio or list(ex.TRUE_RATIOS)
    rows = []
    out = open(args.out, "a", encoding="utf-8") if args.out else None
    try:
        for r in ratios:
            row = ex.run_b1(r, cfg, seed=args.seed or 0, log=log.info)
            rows.append(row)
            print(row.record(), flush=True)
            if out:
                out.write(row.record() + "\n")
    finally:
        if out:
            out.close()
    print()
    print(ex.format_table(rows))
    return 0


def cmd_exp_b2(args) -> int:
    kinds = list(ex.KINDS) if args.kind == "both" else [args.kind]
    steps = args.steps or (FAST_B2_STEPS if args.fast else ex.B2Config().steps)
    cfg = ex.B2Config(steps=steps)
    seeds = range(args.seed or 0, (args.seed or 0) + args.seeds)
    errors = {k: [] for k in kinds}
    for k in kinds:
        for s in seeds:
            res = ex.run_b2(k, seed=s, cfg=cfg, log=log.info)
            errors[k].append(res.rel_l2)
            print(res.record(), flush=True)
            if args.out_dir:
                ex.write_b2_columns(res, args.out_dir)
    target = ex.SincTarget(cfg.n_points, cfg.extent).values
    for k in kinds:
        kept = ex.high_band_retention(target, k)
        print(f"{k.upper()} mean relative L2 error {np.mean(errors[k]):.4f}; "
              f"high-band power kept per view (target) " + ", ".join(f"{v:.3f}" for v in kept))
    return 0


def cmd_melcmp(args) -> int:
    clip = wav_read(args.wav)
    mel = load_mel(args.mel)
    ref = mel_spectrogram(clip.samples, mel.config)
    if ref.values.shape != mel.values.shape:
        raise CommandError(f"shape mismatch: wav gives {ref.values.shape}, file holds "
                           f"{mel.values.shape}")
    print(f"{float(np.mean(np.abs(ref.values - mel.values))):.6g}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="run configuration file (key = value)")
    common.add_argument("--variant", choices=["v1", "v2", "v3"],
                        help="generator preset when no --config is given (default v1)")
    common.add_argument("--checkpoint", help="HFGC checkpoint file")
    common.add_argument("--seed", type=int, default=None, help="random seed")
    common.add_argument("--fast", action="store_true", help="reduced-size run")
    common.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")

    p = argparse.ArgumentParser(prog="hifigan", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train", parents=[common], help="adversarial training on a folder of WAVs",
                       description="With --fast the discriminators are 1/8 width.")
    s.add_argument("data_dir")
    s.add_argument("out_dir")
    s.add_argument("--steps", type=int)
    s.add_argument("--save-every", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("synth", parents=[common], help="mel file or WAV (copy synthesis) -> WAV")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("bench", parents=[common], help="synthesis speed in kHz")
    s.add_argument("--seconds", type=float, default=1.0, help="seconds of audio per run")
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--warmup", type=int, default=1)
    s.add_argument("--all", action="store_true", help="compare the v1, v2 and v3 presets")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("params", parents=[common], help="parameter counts")
    s.add_argument("--discriminators", action="store_true")
    s.set_defaults(func=cmd_params)

    s = sub.add_parser("exp-b1", parents=[common], help="periodic-signal discrimination table",
                       description="With --fast: 4000/800 clips of 4096 samples, 1000 candidate tones, "
                                   "1/16-width discriminators, 1 repeat.")
    s.add_argument("--ratio", type=float, action="append")
    s.add_argument("--repeats", type=int)
    s.add_argument("--steps", type=int)
    s.add_argument("--out", help="append JSON records to this file")
    s.set_defaults(func=cmd_exp_b1)

    s = sub.add_parser("exp-b2", parents=[common], help="sinc toy with frequency responses",
                       description=f"With --fast: {FAST_B2_STEPS} steps per run.")
    s.add_argument("--kind", choices=["mpd", "msd", "both"], default="both")
    s.add_argument("--seeds", type=int, default=3)
    s.add_argument("--steps", type=int)
    s.add_argument("--out-dir", help="write columnar text files here")
    s.set_defaults(func=cmd_exp_b2)

    s = sub.add_parser("melcmp", parents=[common], help="mean |mel(wav) - mel file|")
    s.add_argument("wav")
    s.add_argument("mel")
    s.set_defaults(func=cmd_melcmp)
    return p


def main(argv=None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    if args.seed is None and args.command not in ("train",):
        args.seed = 0
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        with threadpool_limits(args.threads):
            return args.func(args)
    except (CommandError, ConfigError, CheckpointError, WavError, TrainingDiverged,
            ValueError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
