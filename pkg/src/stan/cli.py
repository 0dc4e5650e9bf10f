"""Command-line entry point: ``stan {synth,train,score,eval,visualize,gradcheck}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np
import torch

from . import config as cfgmod
from .data import labels_to_events, load_split, read_events_csv, read_labels_csv, synth_generate, write_corpus
from .evaluation import evaluate, write_report
from .models import Discriminator, Generator, context_of, load_discriminator, load_generator, save_checkpoint
from .rng import torch_seed
from .scoring import read_scores_csv, score_clips, write_scores_csv
from .training import DivergenceError, WindowSampler, adversarial_train, pretrain_generator

log = logging.getLogger("stan")

EXIT_MISSING = 1
EXIT_DIVERGED = 3


class MissingInput(FileNotFoundError):
    pass


def _deterministic():
    torch.use_deterministic_algorithms(True)
    torch.set_num_threads(1)


def _resolve(args) -> cfgmod.RunConfig:
    cfg = cfgmod.load_config(args.config)
    overrides = {}
    for name in ("data", "out", "ckpt", "threshold", "merge_gap", "scale", "mode", "norm_scope"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    cfg = dataclasses.replace(cfg, **overrides)
    seed = args.seed if args.seed is not None else cfg.seed
    cfg = cfgmod.with_seed(cfg, seed)
    return dataclasses.replace(cfg, synth=dataclasses.replace(cfg.synth, size=cfg.scale))


def _need(path: str | None, what: str) -> Path:
    if path is None:
        raise MissingInput(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"{what} path {p} does not exist")
    return p


def _out(cfg: cfgmod.RunConfig) -> Path:
    if cfg.out is None:
        raise MissingInput("--out is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_synth(cfg: cfgmod.RunConfig) -> None:
    out = _out(cfg)
    train, test = synth_generate(cfg.synth)
    write_corpus(out, train, test, cfg.synth)
    log.info("wrote %d train and %d test clips to %s", len(train), len(test), out)


def cmd_train(cfg: cfgmod.RunConfig) -> None:
    data, out = _need(cfg.data, "data"), _out(cfg)
    cfgmod.dump_config(cfg, out / "config.yaml")
    clips = load_split(data, "train", cfg.scale)
    torch.manual_seed(torch_seed(cfg.seed, "init/generator"))
    generator = Generator(cfg.generator_config())
    torch.manual_seed(torch_seed(cfg.seed, "init/discriminator"))
    discriminator = Discriminator(cfg.discriminator_config())
    k = cfg.model.half_window
    heldout = WindowSampler(clips, k, cfg.seed, "train/heldout").sample(8)
    sampler = WindowSampler(clips, k, cfg.seed, "train/batches")
    ckpt = Path(cfg.ckpt) if cfg.ckpt else out / "ckpt"
    pretrain_generator(generator, sampler, cfg.train, heldout, out / "pretrain_log.csv")
    save_checkpoint(generator, ckpt / "generator_pretrained", generator.config)
    adversarial_train(generator, discriminator, sampler, cfg.train, out / "train_log.csv", ckpt)
    save_checkpoint(generator, ckpt / "generator", generator.config)
    save_checkpoint(discriminator, ckpt / "discriminator", discriminator.config)
    log.info("checkpoints in %s", ckpt)


def _load_models(cfg: cfgmod.RunConfig) -> tuple[Generator, Discriminator]:
    ckpt = _need(cfg.ckpt or (str(Path(cfg.out) / "ckpt") if cfg.out else None), "ckpt")
    for name in ("generator", "discriminator"):
        if not (ckpt / f"{name}.json").exists():
            raise MissingInput(f"no {name} checkpoint in {ckpt}")
    return load_generator(ckpt / "generator"), load_discriminator(ckpt / "discriminator")


def cmd_score(cfg: cfgmod.RunConfig) -> None:
    data = _need(cfg.data, "data")
    generator, discriminator = _load_models(cfg)
    out = _out(cfg)
    clips = load_split(data, "test", generator.config.input_size)
    series = score_clips(clips, generator, discriminator, cfg.norm_scope)
    write_scores_csv(out / "scores.csv", series)
    log.info("scored %d clips -> %s", len(series), out / "scores.csv")


def cmd_eval(cfg: cfgmod.RunConfig, scores_path: str | None) -> dict:
    data = _need(cfg.data, "data")
    out = _out(cfg)
    scores = _need(scores_path or str(out / "scores.csv"), "scores")
    labels_path = _need(str(data / "test_labels.csv") if data.is_dir() else str(data), "data")
    labels = read_labels_csv(labels_path)
    events_path = labels_path.with_name("test_events.csv")
    events = read_events_csv(events_path) if events_path.exists() else {k: labels_to_events(v) for k, v in labels.items()}
    report = evaluate(read_scores_csv(scores), labels, events, cfg.mode, cfg.threshold, cfg.merge_gap, cfg.norm_scope)
    write_report(report, out / "report.json")
    print(f"auc={report['auc']['combined']:.6f} generator={report['auc']['generator']:.6f} "
          f"discriminator={report['auc']['discriminator']:.6f}")
    if "event" in report:
        ev = report["event"]
        prec = "" if ev["precision"] is None else f"{100 * ev['precision']:.1f}"
        print(f"events correct/false_alarm={ev['correct_detections']}/{ev['false_alarms']} precision={prec} "
              f"threshold={ev['threshold']:.4f}")
    return report


def cmd_visualize(cfg: cfgmod.RunConfig) -> None:
    from .interpret import error_map, guided_backprop_map, save_heatmap, save_montage

    data = _need(cfg.data, "data")
    generator, discriminator = _load_models(cfg)
    out = _out(cfg) / "vis"
    out.mkdir(exist_ok=True)
    k = generator.config.half_window
    generator.eval()
    for clip in load_split(data, "test", generator.config.input_size):
        frames = [t for t in sorted(clip.boxes) if k <= t < len(clip) - k]
        if not frames and clip.labels is not None:
            frames = [t for t in np.flatnonzero(clip.labels) if k <= t < len(clip) - k]
        if not frames:
            continue
        t = int(frames[len(frames) // 2])
        seq = torch.from_numpy(clip.frames[t - k:t + k + 1])[None, :, None]
        with torch.no_grad():
            gen = generator(context_of(seq, k))
        err = error_map(gen, clip.frames[t])
        grad = guided_backprop_map(seq, discriminator)
        stem = f"{clip.clip_id}_{t:06d}"
        save_heatmap(err, out / f"{stem}_error.png")
        save_heatmap(grad, out / f"{stem}_gradient.png")
        save_montage(clip.frames[t], gen, err, grad, out / f"{stem}_montage.png")
    log.info("heatmaps in %s", out)


def cmd_gradcheck(seed: int) -> bool:
    from .gradcheck import TOLERANCE, run_suite

    torch.set_num_threads(1)
    ok = True
    for r in run_suite(seed):
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<16} max_rel_error={r.max_rel_error:.3e} "
              f"(tol {TOLERANCE:.0e}, {r.seconds:.2f}s)")
        ok &= r.passed
    return ok


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--data", help="corpus root (train/, test/, label CSVs)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--ckpt", help="checkpoint directory")
    common.add_argument("--threshold", type=float)
    common.add_argument("--merge-gap", dest="merge_gap", type=int)
    common.add_argument("--scale", type=int, help="frame size in pixels (H = W)")
    common.add_argument("--mode", choices=("frame", "event"))
    common.add_argument("--norm-scope", dest="norm_scope", choices=("clip", "global"))
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="stan", description="Spatio-temporal adversarial anomaly detector")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write a seeded synthetic corpus")
    sub.add_parser("train", parents=[common], help="pretrain the generator, then train adversarially")
    sub.add_parser("score", parents=[common], help="write per-frame abnormality scores")
    ev = sub.add_parser("eval", parents=[common], help="frame-level AUC and event-level counts")
    ev.add_argument("--scores", help="scores CSV (default: <out>/scores.csv)")
    sub.add_parser("visualize", parents=[common], help="error and guided-backprop heatmaps")
    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    _deterministic()
    try:
        if args.command == "gradcheck":
            return 0 if cmd_gradcheck(args.seed or 0) else 1
        cfg = _resolve(args)
        if args.command == "synth":
            cmd_synth(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "score":
            cmd_score(cfg)
        elif args.command == "eval":
            cmd_eval(cfg, args.scores)
        elif args.command == "visualize":
            cmd_visualize(cfg)
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (FileNotFoundError, cfgmod.ConfigError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    return 0


if __name__ == "__main__":
    sys.exit(main())
