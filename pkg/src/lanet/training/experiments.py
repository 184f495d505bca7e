"""Ablation matrix and positive-weight sweep."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from lanet.config import LESIONS, ExperimentConfig
from lanet.data import DatasetManifest
from lanet.metrics import MetricsReport
from lanet.training.common import make_dataset, resolve_manifest
from lanet.training.evaluation import evaluate_model, model_from_checkpoint
from lanet.training.segmentation import train_segmentation

# (use_lam, use_fpm) in table order
ABLATION_VARIANTS = {
    "Base": (False, False),
    "Base+LAM": (True, False),
    "Base+FPM": (False, True),
    "Base+LAM+FPM": (True, True),
}
DEFAULT_ALPHAS = (1.0, 5.0, 10.0, 15.0)


@dataclass
class AblationReport:
    dice: dict[str, dict[str, float]] = field(default_factory=dict)
    reports: dict[str, MetricsReport] = field(default_factory=dict)
    train_batch_hashes: dict[str, list[str]] = field(default_factory=dict)
    eval_stream_hashes: dict[str, str] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = ["variant\t" + "\t".join(LESIONS)]
        for name, row in self.dice.items():
            lines.append(name + "\t" + "\t".join(f"{row[k]:.4f}" for k in LESIONS))
        return "\n".join(lines) + "\n"


def _eval_split(cfg: ExperimentConfig, manifest: DatasetManifest) -> str:
    return "test" if manifest.split("test") else cfg.eval_split


def run_ablation(
    cfg: ExperimentConfig,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> AblationReport:
    """Train the four ablation variants with identical seeds and data order; Dice on the test split."""
    manifest = resolve_manifest(cfg, manifest)
    split = _eval_split(cfg, manifest)
    result = AblationReport()
    for name, (use_lam, use_fpm) in ABLATION_VARIANTS.items():
        run_cfg = dataclasses.replace(
            cfg, variant=dataclasses.replace(cfg.variant, use_lam=use_lam, use_fpm=use_fpm)
        )
        run_dir = Path(out_dir) / name if out_dir else None
        run = train_segmentation(run_cfg, manifest, run_dir)
        model = model_from_checkpoint(run.best, cfg.input_size)
        report, stream = evaluate_model(model, make_dataset(run_cfg, manifest, split, train=False), run_cfg)
        result.dice[name] = {k: report.per_lesion[k].dice for k in LESIONS}
        result.reports[name] = report
        result.train_batch_hashes[name] = run.batch_hashes
        result.eval_stream_hashes[name] = stream
    if out_dir:
        (Path(out_dir) / "ablation.tsv").write_text(result.to_text())
    return result


@dataclass
class SweepRow:
    alpha: float
    dice: dict[str, float]
    map_score: float | None


def sweep_to_text(rows: list[SweepRow]) -> str:
    lines = ["alpha\t" + "\t".join(LESIONS) + "\tmAP"]
    for r in rows:
        m = "n/a" if r.map_score is None else f"{r.map_score:.4f}"
        lines.append(f"{r.alpha:g}\t" + "\t".join(f"{r.dice[k]:.4f}" for k in LESIONS) + f"\t{m}")
    return "\n".join(lines) + "\n"


def alpha_sweep(
    cfg: ExperimentConfig,
    alphas=DEFAULT_ALPHAS,
    manifest: DatasetManifest | None = None,
    out_dir: str | Path | None = None,
) -> list[SweepRow]:
    """One segmentation run per positive-pixel weight; Dice per lesion on the evaluation split."""
    manifest = resolve_manifest(cfg, manifest)
    split = _eval_split(cfg, manifest)
    rows = []
    for alpha in alphas:
        run_cfg = dataclasses.replace(cfg, seg_loss=dataclasses.replace(cfg.seg_loss, alpha=float(alpha)))
        run_dir = Path(out_dir) / f"alpha_{alpha:g}" if out_dir else None
        run = train_segmentation(run_cfg, manifest, run_dir)
        model = model_from_checkpoint(run.best, cfg.input_size)
        report, _ = evaluate_model(model, make_dataset(run_cfg, manifest, split, train=False), run_cfg)
        rows.append(SweepRow(float(alpha), {k: report.per_lesion[k].dice for k in LESIONS}, report.map_score))
    if out_dir:
        (Path(out_dir) / "alpha_sweep.tsv").write_text(sweep_to_text(rows))
    return rows
