"""Command line: synth, train, infer, eval, gradcheck.

Every subcommand exits 0 on success and 1 with a single ``error:`` line on
stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import data, gradcheck, metrics, pipeline
from .config import TrainConfig, load_config
from .synth import SyntheticConfig, generate_synthetic

log = logging.getLogger("adwsod")

GRAD_TOL = 1e-4


def _dataset_path(where: str, split: str) -> Path:
    p = Path(where)
    return data.split_path(p, split) if p.is_dir() else p


def _load(where: str, split: str):
    return data.load_dataset(_dataset_path(where, split))


def cmd_synth(args) -> None:
    cfg = load_config(args.config, SyntheticConfig) if args.config else SyntheticConfig()
    task, splits = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, samples in splits.items():
        data.save_dataset(data.split_path(out, name), task, samples)
        log.info("wrote %d %s samples", len(samples), name)


def cmd_train(args) -> None:
    cfg = load_config(args.config, TrainConfig) if args.config else TrainConfig()
    task, train_samples = _load(args.data, "train")
    val_samples = None
    if Path(args.data).is_dir() and data.split_path(args.data, "val").exists():
        val_task, val_samples = _load(args.data, "val")
        if val_task != task:
            raise ValueError("train and val splits declare different tasks")
    result = pipeline.train(cfg, task, train_samples, val_samples)
    result.checkpoint.save(args.out)
    if args.history:
        rows = [vars(h) for h in result.history]
        Path(args.history).write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n")
    log.info("saved epoch %d checkpoint to %s", result.checkpoint.epoch, args.out)


def cmd_infer(args) -> None:
    ckpt = pipeline.Checkpoint.load(args.ckpt)
    task, samples = _load(args.data, args.split)
    if task.feature_dim != ckpt.params.feature_dim:
        raise ValueError(f"dataset feature_dim {task.feature_dim} != checkpoint {ckpt.params.feature_dim}")
    dets = pipeline.infer(ckpt, samples)
    Path(args.out).write_text(metrics.dump_detections(dets))
    log.info("%d detections on %d samples", len(dets), len(samples))


def cmd_eval(args) -> None:
    task, samples = _load(args.data, args.split)
    dets = metrics.load_detections(Path(args.dets).read_text())
    for d in dets:
        if not 0 <= d.object < task.n_objects:
            raise ValueError(f"detection for {d.sample_id!r}: object {d.object} out of range")
    rep = pipeline.evaluate(dets, task, samples, args.ap_iou, args.corloc_iou)
    text = pipeline.dumps_report(rep)
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)


def cmd_gradcheck(args) -> None:
    worst = {g: 0.0 for g in gradcheck.GROUPS}
    for seed in range(args.seed, args.seed + args.count):
        for g, e in gradcheck.check(seed).items():
            worst[g] = max(worst[g], e)
    for g in gradcheck.GROUPS:
        print(f"{g:12s} {worst[g]:.3e}")
    bad = [g for g, e in worst.items() if not e < GRAD_TOL]
    if bad:
        raise ValueError(f"gradient check failed for {', '.join(bad)} (tolerance {GRAD_TOL:g})")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adwsod", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic benchmark")
    s.add_argument("--config", help="flat key = value SyntheticConfig file")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train and save the best-validation checkpoint")
    s.add_argument("--config", help="flat key = value TrainConfig file")
    s.add_argument("--data", required=True, help="dataset directory or file")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--history", help="optional per-epoch log (JSON)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="detect objects with a checkpoint")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--out", required=True, help="detections JSON")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="AP, mAP and CorLoc of a detections file")
    s.add_argument("--data", required=True)
    s.add_argument("--split", default="test")
    s.add_argument("--dets", required=True)
    s.add_argument("--report", help="report path; stdout if omitted")
    s.add_argument("--ap-iou", type=float, default=0.5)
    s.add_argument("--corloc-iou", type=float, default=0.5)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    s.add_argument("--seed", type=int, default=0, help="first seed")
    s.add_argument("--count", type=int, default=1, help="number of consecutive seeds")
    s.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        args.func(args)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 1
    return 0
