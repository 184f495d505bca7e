"""Command-line entry point: ``lanet <command> [options]``.

Commands
    prepare       scan a dataset release into a JSON Lines manifest
    train-seg     train the lesion segmentation network
    train-scr     fine-tune (or train from scratch) the NoDR/NPDR screening network
    eval          evaluate a checkpoint on one split
    ablate        train and compare the four ablation variants
    sweep-alpha   one segmentation run per positive-pixel weight
    predict       lesion maps, overlays and screening scores for image files

Every run directory receives ``config.yaml`` (the effective configuration
after ``--set`` overrides) and ``run.json`` (seed, package version, git
commit, command line) before any computation starts.

Exit codes: 0 success, 1 runtime or partial failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
from pathlib import Path

import cv2
import numpy as np
import torch

from lanet import __version__
from lanet.config import LESIONS, SCREEN_CLASSES, ConfigError, ExperimentConfig, load_config
from lanet.data import DATASET_KINDS, SPLITS, ManifestError, build_manifest, preprocess, read_image
from lanet.data.preprocess import ImageReadError, PreprocessError
from lanet.model import Checkpoint, IncompatibleCheckpointError
from lanet.training import (
    DEFAULT_ALPHAS,
    TrainingError,
    alpha_sweep,
    evaluate,
    finetune_screening,
    model_from_checkpoint,
    run_ablation,
    train_segmentation,
)
from lanet.training.evaluation import write_overlay
from lanet.training.experiments import sweep_to_text

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
RUNTIME_ERRORS = (ManifestError, TrainingError, IncompatibleCheckpointError, PreprocessError, OSError,
                  RuntimeError, ValueError)


def _git_commit() -> str | None:
    try:
        out = subprocess.run(["git", "rev-parse", "HEAD"], cwd=Path(__file__).parent,
                             capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return None
    return (out.stdout.strip() or None) if out.returncode == 0 else None


def _common(parser: argparse.ArgumentParser, *, ckpt_required: bool = False) -> None:
    parser.add_argument("--config", help="YAML experiment config")
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides",
                        help="override a config entry (dotted keys, repeatable), e.g. seg_loss.alpha=5")
    parser.add_argument("--out", help="output directory (default: <checkpoint_dir>/<name>/<command>)")
    parser.add_argument("--dataset", choices=DATASET_KINDS, help="dataset kind (overrides config)")
    parser.add_argument("--root", help="dataset root directory (overrides config)")
    parser.add_argument("--split", choices=SPLITS, help="split to evaluate")
    parser.add_argument("--ckpt", required=ckpt_required, help="checkpoint file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lanet", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"lanet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("prepare", help="build a dataset manifest")
    _common(p)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train-seg", help="train lesion segmentation")
    _common(p)
    p.set_defaults(func=cmd_train_seg)

    p = sub.add_parser("train-scr", help="train DR screening (--ckpt: segmentation checkpoint to start from)")
    _common(p)
    p.set_defaults(func=cmd_train_scr)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _common(p, ckpt_required=True)
    p.add_argument("--overlays", action="store_true", help="also write colour-coded overlays")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="train the four ablation variants")
    _common(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-alpha", help="positive-weight sweep")
    _common(p)
    p.add_argument("--alphas", type=float, nargs="+", default=list(DEFAULT_ALPHAS))
    p.set_defaults(func=cmd_sweep_alpha)

    p = sub.add_parser("predict", help="lesion maps and overlays for image files")
    _common(p, ckpt_required=True)
    p.add_argument("images", nargs="+", help="fundus image files")
    p.set_defaults(func=cmd_predict)
    return parser


def effective_config(args: argparse.Namespace) -> ExperimentConfig:
    overrides = list(args.overrides)
    if args.dataset:
        overrides.append(f"dataset={args.dataset}")
    if args.root:
        overrides.append(f"root={args.root}")
    return load_config(args.config, overrides)


def run_dir(args: argparse.Namespace, cfg: ExperimentConfig) -> Path:
    return Path(args.out) if args.out else Path(cfg.checkpoint_dir) / cfg.name / args.command


def persist_run(out: Path, cfg: ExperimentConfig, argv: list[str]) -> None:
    """Record everything needed to relaunch the run, before any computation."""
    out.mkdir(parents=True, exist_ok=True)
    cfg.dump(out / "config.yaml")
    info = {"seed": cfg.seed, "version": __version__, "git_commit": _git_commit(), "argv": argv}
    (out / "run.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n")


def cmd_prepare(args, cfg: ExperimentConfig, argv) -> int:
    manifest = build_manifest(cfg.root, cfg.dataset, split_seed=cfg.split_seed)
    out = Path(args.out) if args.out else Path(f"{cfg.dataset}.jsonl")
    if out.is_dir():
        out = out / f"{cfg.dataset}.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest.write(out)
    counts = manifest.counts()
    print(f"{cfg.dataset}: " + "  ".join(f"{s}={counts[s]}" for s in SPLITS))
    for line in manifest.count_mismatches():
        print(f"note: split size differs from the reference table: {line}")
    print(f"manifest written to {out}")
    return EXIT_OK


def cmd_train_seg(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    persist_run(out, cfg, argv)
    result = train_segmentation(cfg, out_dir=out)
    if result.best_report is not None:
        (out / "report.txt").write_text(result.best_report.to_text())
        print(result.best_report.to_text(), end="")
    print(f"checkpoints written to {out}")
    return EXIT_OK


def cmd_train_scr(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    seg_ckpt = Checkpoint.load(args.ckpt) if args.ckpt else None
    persist_run(out, cfg, argv)
    result = finetune_screening(cfg, seg_ckpt, out_dir=out)
    if result.best_report is not None:
        (out / "report.txt").write_text(result.best_report.to_text())
        print(result.best_report.to_text(), end="")
    print(f"checkpoints written to {out}")
    return EXIT_OK


def cmd_eval(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    ckpt = Checkpoint.load(args.ckpt)
    persist_run(out, cfg, argv)
    split = args.split or cfg.eval_split
    report = evaluate(ckpt, split, cfg, overlay_dir=out / "overlays" if args.overlays else None)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_ablate(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    persist_run(out, cfg, argv)
    result = run_ablation(cfg, out_dir=out)
    print(result.to_text(), end="")
    return EXIT_OK


def cmd_sweep_alpha(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    persist_run(out, cfg, argv)
    rows = alpha_sweep(cfg, args.alphas, out_dir=out)
    print(sweep_to_text(rows), end="")
    return EXIT_OK


def _write_probability(path: Path, prob: np.ndarray) -> None:
    cv2.imwrite(str(path), np.clip(np.rint(prob * 255.0), 0, 255).astype(np.uint8))


def cmd_predict(args, cfg, argv) -> int:
    out = run_dir(args, cfg)
    ckpt = Checkpoint.load(args.ckpt)
    persist_run(out, cfg, argv)
    size = int(ckpt.header["input_size"])
    model = model_from_checkpoint(ckpt, size)
    failures, score_lines = 0, []
    for path in map(Path, args.images):
        try:
            image, _ = preprocess(read_image(path), None, size, cfg.preprocess)
        except (ImageReadError, PreprocessError) as exc:
            failures += 1
            print(f"error: {path}: {exc}", file=sys.stderr)
            continue
        with torch.no_grad():
            result = model(torch.from_numpy(image)[None])
        lesion_map = result.final[0].numpy()
        for k, lesion in enumerate(LESIONS):
            _write_probability(out / f"{path.stem}_{lesion}.png", lesion_map[k])
        write_overlay(out / f"{path.stem}_overlay.png", image, lesion_map, cfg.binarize_threshold)
        if result.logits is not None:
            probs = torch.softmax(result.logits[0], dim=0).tolist()
            line = f"{path.name}\t" + "\t".join(f"{c}={p:.4f}" for c, p in zip(SCREEN_CLASSES, probs))
            score_lines.append(line)
            print(line)
    if score_lines:
        (out / "scores.tsv").write_text("\n".join(score_lines) + "\n")
    done = len(args.images) - failures
    print(f"{done} of {len(args.images)} images processed; outputs in {out}")
    return EXIT_FAILURE if failures else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)  # exits with status 2 on usage errors
    try:
        cfg = effective_config(args)
    except (ConfigError, OSError, TypeError) as exc:
        parser.print_usage(sys.stderr)
        print(f"lanet: error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args, cfg, argv)
    except RUNTIME_ERRORS as exc:
        print(f"lanet: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
