from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import torch

from lanet.config import ExperimentConfig, SegLossConfig
from lanet.data import DatasetManifest
from lanet.losses import seg_loss
from lanet.metrics import MetricsReport
from lanet.model import Checkpoint, LANet, LesionOutput, build_variant
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


@dataclass
class RunResult:
    best: Checkpoint
    last: Checkpoint
    model: LANet
    history: list[dict] = field(default_factory=list)
    batch_hashes: list[str] = field(default_factory=list)
    best_report: MetricsReport | None = None


def _selection_score(report: MetricsReport) -> float:
    if report.map_score is not None:
        return report.map_score
    return sum(m.dice for m in report.per_lesion.values()) / max(len(report.per_lesion), 1)


def supervised_maps(output: LesionOutput, cfg: SegLossConfig) -> list[torch.Tensor]:
    if cfg.full_res_final:
        return output.stages[:-1] + [output.final]
    return output.stages


def train_segmentation(
    cfg: ExperimentConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> RunResult:
    """Train the lesion segmentation network with deep supervision.

    Evaluates the ``cfg.eval_split`` split every ``cfg.eval_every`` epochs and
    keeps the checkpoint with the best mAP. Writes ``log.jsonl``, ``best.pt``
    and ``last.pt`` under ``out_dir`` when given.
    """
    if cfg.variant.screening_head:
        raise TrainingError("segmentation training expects a variant without a screening head")
    manifest = resolve_manifest(cfg, manifest)
    if not manifest.split("train"):
        raise TrainingError("train split is empty")
    out = Path(out_dir) if out_dir else None
    log = RunLog(out / "log.jsonl" if out else None)

    gen = seed_everything(cfg.seed)
    variant = dataclasses.replace(cfg.variant, input_size=cfg.input_size)
    model = build_variant(variant)
    train_ds = make_dataset(cfg, manifest, "train", train=True)
    eval_ds = make_dataset(cfg, manifest, cfg.eval_split, train=False) if manifest.split(cfg.eval_split) else None
    loader = make_loader(train_ds, cfg.batch_size, shuffle=True, generator=gen)

    total_steps = cfg.seg_epochs * len(loader)
    if cfg.max_steps is not None:
        total_steps = min(total_steps, cfg.max_steps)
    opt = make_optimizer(model.parameters(), cfg.seg_optim)
    sched = make_scheduler(opt, cfg.seg_optim, total_steps)

    step, epoch = 0, 0
    best_score, best, best_report = -1.0, None, None
    hashes: list[str] = []
    while step < total_steps:
        model.train()
        train_ds.set_epoch(epoch)
        losses = []
        for batch in loader:
            hashes.append(batch_hash(batch))
            output = model(batch["image"])
            loss = seg_loss(supervised_maps(output, cfg.seg_loss), batch["mask"], cfg.seg_loss)
            if not torch.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss {loss.item()} at epoch {epoch} step {step} "
                    f"(lr {sched.get_last_lr()[0]:.3g}); check the learning rate and inputs"
                )
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
        last_epoch = step >= total_steps
        if eval_ds is not None and ((epoch + 1) % cfg.eval_every == 0 or last_epoch):
            report, _ = evaluate_model(model, eval_ds, cfg)
            score = _selection_score(report)
            record["map"] = report.map_score
            record["dice"] = {k: m.dice for k, m in report.per_lesion.items()}
            if score > best_score:
                best_score, best_report = score, report
                best = Checkpoint.from_model(model, variant, epoch, opt, {"metric": "mAP", "value": score,
                                                                          "epoch": epoch})
        log.write(**record)
        epoch += 1

    last = Checkpoint.from_model(model, variant, epoch - 1, opt, best.best if best else {})
    if best is None:
        best = last
    if out:
        best.save(out / "best.pt")
        last.save(out / "last.pt")
    return RunResult(best, last, model, log.records, hashes, best_report)
