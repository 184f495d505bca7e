"""Segmentation and screening metrics.

Segmentation: MAE, Dice, AP per lesion and mAP over lesions. Screening:
precision, sensitivity, F1 at a fixed threshold and ROC AUC.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from lanet.config import LESIONS


class UndefinedMetricError(ValueError):
    pass


def mae(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean absolute per-pixel error between a probability map and a binary map."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    return float(np.abs(pred - gt).mean())


def dice_single(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gt.shape}")
    denom = int(pred.sum()) + int(gt.sum())
    if denom == 0:
        return 1.0  # no lesion and none predicted
    return 2.0 * int(np.logical_and(pred, gt).sum()) / denom


def dice(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    """Mean per-image Dice over binary maps; an image with both maps empty scores 1."""
    if len(preds) == 0:
        raise ValueError("dice of an empty list")
    if len(preds) != len(gts):
        raise ValueError("prediction and ground-truth lists differ in length")
    return float(np.mean([dice_single(p, g) for p, g in zip(preds, gts)]))


def precision_recall_steps(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Precision and recall at every distinct score threshold, highest threshold first."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("AP undefined: no positive labels")
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order], dtype=np.int64)
    # last index of each run of equal scores
    ends = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = tp[ends]
    predicted = ends + 1
    return tp / predicted, tp / n_pos


def average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """``sum_m (R_m - R_{m-1}) P_m`` over distinct thresholds, ``R_0 = 0``."""
    precision, recall = precision_recall_steps(scores, labels)
    steps = np.diff(np.r_[0.0, recall])
    return math.fsum((steps * precision).tolist())


def map_score(aps: Sequence[float | None]) -> tuple[float, bool]:
    """Mean AP over the defined entries and whether any entry was undefined."""
    defined = [a for a in aps if a is not None]
    if not defined:
        raise UndefinedMetricError("mAP undefined: no lesion has a defined AP")
    return float(np.mean(defined)), len(defined) != len(aps)


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """ROC AUC as the Mann-Whitney statistic; tied pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    n_pos, n_neg = int(labels.sum()), int((~labels).sum())
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC undefined: need both classes")
    ranks = rankdata(scores)
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class ScreeningMetrics:
    precision: float
    sensitivity: float
    f1: float
    auc: float
    accuracy: float


def screening_metrics(scores: np.ndarray, labels: np.ndarray, threshold: float = 0.5) -> ScreeningMetrics:
    """Metrics for NPDR probabilities; a score at or above ``threshold`` is called NPDR.

    Precision of a classifier that predicts no positives is reported as 0.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    predicted = scores >= threshold
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    precision = tp / (tp + fp) if tp + fp else 0.0
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * sensitivity / (precision + sensitivity) if precision + sensitivity else 0.0
    accuracy = float(np.mean(predicted == labels))
    return ScreeningMetrics(precision, sensitivity, f1, auc(scores, labels), accuracy)


@dataclass
class LesionMetrics:
    mae: float
    dice: float
    ap: float | None


@dataclass
class MetricsReport:
    per_lesion: dict[str, LesionMetrics] = field(default_factory=dict)
    map_score: float | None = None
    undefined_ap: list[str] = field(default_factory=list)
    screening: ScreeningMetrics | None = None
    conventions: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        """Plain-text tables: per-lesion MAE / Dice / AP + mAP, then screening metrics."""
        lines = []
        if self.per_lesion:
            names = [k for k in LESIONS if k in self.per_lesion]
            header = ["MAE:" + k for k in names] + ["DICE:" + k for k in names] + ["AP:" + k for k in names] + ["mAP"]
            row = [f"{self.per_lesion[k].mae:.4f}" for k in names]
            row += [f"{self.per_lesion[k].dice:.4f}" for k in names]
            row += ["n/a" if self.per_lesion[k].ap is None else f"{self.per_lesion[k].ap:.4f}" for k in names]
            row.append("n/a" if self.map_score is None else f"{self.map_score:.4f}")
            lines += ["\t".join(header), "\t".join(row)]
            if self.undefined_ap:
                lines.append("# AP undefined (no positive pixels): " + ", ".join(self.undefined_ap))
        if self.screening is not None:
            s = self.screening
            lines += ["Pr\tSe\tF1\tAUC", f"{s.precision:.4f}\t{s.sensitivity:.4f}\t{s.f1:.4f}\t{s.auc:.4f}"]
        for k, v in sorted(self.conventions.items()):
            lines.append(f"# {k}: {v}")
        return "\n".join(lines) + "\n"


def segmentation_report(
    preds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    threshold: float = 0.5,
    ap_pooling: str = "pooled",
) -> MetricsReport:
    """Per-lesion metrics for lists of (4, H, W) probability maps and binary masks.

    ``ap_pooling="pooled"`` ranks all pixels of the set together per lesion;
    ``"per_image"`` averages AP over images that contain the lesion.
    """
    if len(preds) == 0 or len(preds) != len(gts):
        raise ValueError("need equally many, and at least one, predictions and masks")
    report = MetricsReport(conventions={
        "ap_pooling": ap_pooling,
        "dice_threshold": str(threshold),
        "dice_empty_empty": "1",
        "mae": "mean |probability - mask| per image, averaged over images",
    })
    aps: list[float | None] = []
    for k, lesion in enumerate(LESIONS):
        p = [np.asarray(x[k], dtype=np.float64) for x in preds]
        g = [np.asarray(x[k]) for x in gts]
        lesion_mae = float(np.mean([mae(a, b) for a, b in zip(p, g)]))
        lesion_dice = dice([a >= threshold for a in p], g)
        ap: float | None
        try:
            if ap_pooling == "pooled":
                ap = average_precision(np.concatenate([a.ravel() for a in p]), np.concatenate([b.ravel() for b in g]))
            else:
                per = [average_precision(a, b) for a, b in zip(p, g) if np.any(b)]
                if not per:
                    raise UndefinedMetricError("AP undefined: no positive labels")
                ap = float(np.mean(per))
        except UndefinedMetricError:
            ap = None
            report.undefined_ap.append(lesion)
        aps.append(ap)
        report.per_lesion[lesion] = LesionMetrics(lesion_mae, lesion_dice, ap)
    if any(a is not None for a in aps):
        report.map_score, _ = map_score(aps)
    return report
