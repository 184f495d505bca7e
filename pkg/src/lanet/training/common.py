from __future__ import annotations

import hashlib
import json
import math
import random
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import DataLoader

from lanet.config import ExperimentConfig, OptimConfig
from lanet.data import DatasetManifest, FundusDataset, build_manifest


class TrainingError(RuntimeError):
    pass


def seed_everything(seed: int) -> torch.Generator:
    random.seed(seed)
    np.random.seed(seed % 2**32)
    torch.manual_seed(seed)
    return torch.Generator().manual_seed(seed)


def resolve_manifest(cfg: ExperimentConfig, manifest: DatasetManifest | None = None) -> DatasetManifest:
    if manifest is not None:
        return manifest
    return build_manifest(cfg.root, cfg.dataset, split_seed=cfg.split_seed)


def make_dataset(cfg: ExperimentConfig, manifest: DatasetManifest, split: str, train: bool) -> FundusDataset:
    return FundusDataset(
        manifest.split(split),
        cfg.input_size,
        cfg.preprocess,
        cfg.augment if train else None,
        seed=cfg.seed,
    )


def make_loader(ds: FundusDataset, batch_size: int, shuffle: bool, generator: torch.Generator | None = None):
    return DataLoader(ds, batch_size=batch_size, shuffle=shuffle, generator=generator, num_workers=0)


def make_optimizer(params, cfg: OptimConfig) -> torch.optim.Optimizer:
    if cfg.name == "sgd":
        return torch.optim.SGD(params, lr=cfg.lr, momentum=cfg.momentum, weight_decay=cfg.weight_decay)
    if cfg.name == "adamw":
        return torch.optim.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    raise ValueError(f"unknown optimizer {cfg.name!r}")


def make_scheduler(opt: torch.optim.Optimizer, cfg: OptimConfig, total_steps: int):
    total = max(total_steps, 1)
    if cfg.schedule == "poly":
        fn = lambda step: max(1.0 - step / total, 0.0) ** cfg.poly_power  # noqa: E731
    elif cfg.schedule == "cosine":
        fn = lambda step: 0.5 * (1.0 + math.cos(math.pi * min(step, total) / total))  # noqa: E731
    elif cfg.schedule == "fixed":
        fn = lambda step: 1.0  # noqa: E731
    else:
        raise ValueError(f"unknown schedule {cfg.schedule!r}")
    return torch.optim.lr_scheduler.LambdaLR(opt, fn)


def batch_hash(batch: dict) -> str:
    h = hashlib.sha1()
    h.update(np.asarray(batch["index"]).tobytes())
    h.update(batch["image"].numpy().tobytes())
    return h.hexdigest()


class RunLog:
    """Append-only JSON Lines log."""

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path else None
        self.records: list[dict] = []
        if self.path:
            self.path.parent.mkdir(parents=True, exist_ok=True)

    def write(self, **record) -> None:
        self.records.append(record)
        if self.path:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
