from __future__ import annotations

import dataclasses
from pathlib import Path

import torch

from lanet.config import ExperimentConfig
from lanet.data import DatasetManifest
from lanet.losses import screening_ce, smooth_labels
from lanet.model import Checkpoint, LANet, build_variant, load_weights
from lanet.training.common import (
    RunLog,
    TrainingError,
    batch_hash,
    make_dataset,
    make_loader,
    make_optimizer,
    make_scheduler,
    resolve_manifest,
    seed_everything,
)
from lanet.training.evaluation import evaluate_model
from lanet.training.segmentation import RunResult


def build_screening_model(cfg: ExperimentConfig, seg_ckpt: Checkpoint | None = None) -> LANet:
    """Screening network; shared weights are copied from ``seg_ckpt`` when given."""
    variant = dataclasses.replace(cfg.variant, input_size=cfg.input_size, screening_head=True)
    if seg_ckpt is not None:
        variant = dataclasses.replace(variant, pretrained=False)
    model = build_variant(variant)
    if seg_ckpt is not None:
        load_weights(model, seg_ckpt, variant, allow_new_head=True)
    return model


def finetune_screening(
    cfg: ExperimentConfig,
    seg_ckpt: Checkpoint | None = None,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
    epochs: int | None = None,
) -> RunResult:
    """Train the screening network, initialised from a segmentation checkpoint or from scratch.

    With a checkpoint every shared weight is copied and only the classifier is
    new; the run lasts ``cfg.scr_epochs`` epochs. Without one it lasts
    ``cfg.scratch_epochs``. Validation accuracy and AUC are logged per epoch
    and the best-AUC checkpoint is kept.
    """
    manifest = resolve_manifest(cfg, manifest)
    if not manifest.split("train"):
        raise TrainingError("train split is empty")
    out = Path(out_dir) if out_dir else None
    log = RunLog(out / "log.jsonl" if out else None)

    gen = seed_everything(cfg.seed)
    model = build_screening_model(cfg, seg_ckpt)
    variant = model.variant
    if epochs is None:
        epochs = cfg.scr_epochs if seg_ckpt is not None else cfg.scratch_epochs

    if cfg.freeze_encoder:
        for p in model.encoder.parameters():
            p.requires_grad_(False)
    params = [p for p in model.parameters() if p.requires_grad]

    train_ds = make_dataset(cfg, manifest, "train", train=True)
    eval_ds = make_dataset(cfg, manifest, cfg.eval_split, train=False) if manifest.split(cfg.eval_split) else None
    loader = make_loader(train_ds, cfg.batch_size, shuffle=True, generator=gen)
    total_steps = epochs * len(loader)
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    opt = make_optimizer(params, cfg.scr_optim)
    sched = make_scheduler(opt, cfg.scr_optim, total_steps)

    step, hashes = 0, []
    best, best_auc, best_report = None, -1.0, None
    for epoch in range(epochs):
        if step >= total_steps:
            break
        model.train()
        train_ds.set_epoch(epoch)
        losses = []
        for batch in loader:
            hashes.append(batch_hash(batch))
            out_ = model(batch["image"])
            target = smooth_labels(batch["label"], cfg.smoothing)
            loss = screening_ce(out_.logits, target)
            if not torch.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch} step {step}")
            opt.zero_grad()
            loss.backward()
            opt.step()
            lr = sched.get_last_lr()[0]
            sched.step()
            step += 1
            losses.append(loss.item())
            log.write(kind="step", epoch=epoch, step=step, loss=loss.item(), lr=lr)
            if step >= total_steps:
                break
        record = {"kind": "epoch", "epoch": epoch, "step": step, "loss": sum(losses) / len(losses),
                  "lr": sched.get_last_lr()[0]}
        if eval_ds is not None:
            report, _ = evaluate_model(model, eval_ds, cfg)
            s = report.screening
            record.update(val_accuracy=s.accuracy, val_auc=s.auc, val_f1=s.f1)
            if s.auc > best_auc:
                best_auc, best_report = s.auc, report
                best = Checkpoint.from_model(model, variant, epoch, opt, {"metric": "AUC", "value": s.auc,
                                                                          "epoch": epoch})
        log.write(**record)

    last = Checkpoint.from_model(model, variant, epochs - 1, opt, best.best if best else {})
    if best is None:
        best = last
    if out:
        best.save(out / "best.pt")
        last.save(out / "last.pt")
    return RunResult(best, last, model, log.records, hashes, best_report)


def epochs_to_accuracy(history: list[dict], threshold: float) -> float:
    """First epoch (1-based) whose validation accuracy reaches ``threshold``; inf if never."""
    for rec in history:
        if rec.get("kind") == "epoch" and rec.get("val_accuracy", -1) >= threshold:
            return rec["epoch"] + 1
    return float("inf")
