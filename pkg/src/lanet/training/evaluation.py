from __future__ import annotations

import hashlib
from pathlib import Path

import cv2
import numpy as np
import torch

from lanet.config import LESIONS, ExperimentConfig
from lanet.data import DatasetManifest, FundusDataset
from lanet.metrics import MetricsReport, screening_metrics, segmentation_report
from lanet.model import Checkpoint, LANet, build_variant, load_weights
from lanet.training.common import make_dataset, make_loader, resolve_manifest

# RGB overlay colour per lesion
LESION_COLOURS = {
    "EX": (255, 255, 0),
    "HE": (255, 0, 0),
    "MA": (0, 255, 0),
    "SE": (0, 255, 255),
}


def model_from_checkpoint(ckpt: Checkpoint, input_size: int | None = None) -> LANet:
    changes = {} if input_size is None else {"input_size": input_size}
    variant = ckpt.variant(**changes)
    model = build_variant(variant)
    load_weights(model, ckpt, variant)
    return model.eval()


@torch.no_grad()
def predict(model: LANet, ds: FundusDataset, batch_size: int = 4):
    """Run inference over a dataset; returns final maps, masks, NPDR probabilities and a stream hash."""
    model.eval()
    maps, masks, probs, labels = [], [], [], []
    stream = hashlib.sha1()
    for batch in make_loader(ds, batch_size, shuffle=False):
        stream.update(batch["image"].numpy().tobytes())
        out = model(batch["image"])
        maps.extend(out.final.numpy())
        if "mask" in batch:
            masks.extend(batch["mask"].numpy().astype(np.uint8))
        if out.logits is not None:
            probs.extend(torch.softmax(out.logits, dim=1)[:, 1].numpy())
        if "label" in batch:
            labels.extend(np.asarray(batch["label"]))
    return {"maps": maps, "masks": masks, "probs": np.array(probs), "labels": np.array(labels),
            "stream_hash": stream.hexdigest()}


def overlay(image: np.ndarray, lesion_map: np.ndarray, threshold: float = 0.5, opacity: float = 0.6) -> np.ndarray:
    """RGB uint8 image (H, W, 3) with thresholded lesion channels painted in their colours."""
    rgb = np.clip(np.rint(image.transpose(1, 2, 0) * 255), 0, 255).astype(np.float32)
    for k, lesion in enumerate(LESIONS):
        hit = lesion_map[k] >= threshold
        rgb[hit] = (1 - opacity) * rgb[hit] + opacity * np.array(LESION_COLOURS[lesion], np.float32)
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def write_overlay(path: str | Path, image: np.ndarray, lesion_map: np.ndarray, threshold: float = 0.5) -> None:
    cv2.imwrite(str(path), cv2.cvtColor(overlay(image, lesion_map, threshold), cv2.COLOR_RGB2BGR))


def evaluate_model(
    model: LANet,
    ds: FundusDataset,
    cfg: ExperimentConfig,
    overlay_dir: str | Path | None = None,
) -> tuple[MetricsReport, str]:
    res = predict(model, ds, cfg.batch_size)
    if res["masks"]:
        report = segmentation_report(res["maps"], res["masks"], cfg.binarize_threshold, cfg.ap_pooling)
    else:
        report = MetricsReport()
    if len(res["probs"]) and len(res["labels"]):
        report.screening = screening_metrics(res["probs"], res["labels"], cfg.binarize_threshold)
    if overlay_dir is not None:
        overlay_dir = Path(overlay_dir)
        overlay_dir.mkdir(parents=True, exist_ok=True)
        for i, lesion_map in enumerate(res["maps"]):
            s = ds.sample(i)
            write_overlay(overlay_dir / f"{s.id}.png", s.image, lesion_map, cfg.binarize_threshold)
    return report, res["stream_hash"]


def evaluate(
    ckpt: Checkpoint,
    split: str,
    cfg: ExperimentConfig,
    manifest: DatasetManifest | None = None,
    overlay_dir: str | Path | None = None,
) -> MetricsReport:
    """Deterministic inference over one split, reported with the metrics module."""
    manifest = resolve_manifest(cfg, manifest)
    model = model_from_checkpoint(ckpt, cfg.input_size)
    ds = make_dataset(cfg, manifest, split, train=False)
    report, _ = evaluate_model(model, ds, cfg, overlay_dir)
    return report
