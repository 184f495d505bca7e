from __future__ import annotations

import numpy as np
import torch
from torch.utils.data import Dataset

from lanet.config import LESIONS, SCREEN_CLASSES, AugmentConfig, PreprocessConfig
from lanet.data.augment import augment, sample_seed
from lanet.data.manifest import ManifestEntry
from lanet.data.preprocess import FundusSample, encode_mask, preprocess, read_image, read_raster


def load_sample(entry: ManifestEntry, size: int, cfg: PreprocessConfig | None = None) -> FundusSample:
    """Read one manifest entry from disk and preprocess it to ``size x size``."""
    image = read_image(entry.image)
    mask = None
    if entry.masks is not None:
        rasters = [read_raster(entry.masks[k]) if entry.masks.get(k) else None for k in LESIONS]
        mask = encode_mask(rasters, shape=image.shape[1:])
    image, mask = preprocess(image, mask, size, cfg)
    return FundusSample(entry.id, image, mask, entry.label, entry.split)


class FundusDataset(Dataset):
    """Training-ready view over manifest entries.

    Preprocessed samples are cached in memory; augmentation (if enabled) is
    re-drawn per epoch from ``(seed, sample id, epoch)``.
    """

    def __init__(
        self,
        entries: list[ManifestEntry],
        size: int,
        preprocess_cfg: PreprocessConfig | None = None,
        augment_cfg: AugmentConfig | None = None,
        seed: int = 0,
    ):
        self.entries = list(entries)
        self.size = size
        self.preprocess_cfg = preprocess_cfg
        self.augment_cfg = augment_cfg
        self.seed = seed
        self.epoch = 0
        self._cache: dict[int, FundusSample] = {}

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.entries)

    def sample(self, index: int) -> FundusSample:
        if index not in self._cache:
            self._cache[index] = load_sample(self.entries[index], self.size, self.preprocess_cfg)
        s = self._cache[index]
        if self.augment_cfg is not None and self.augment_cfg.enabled:
            s = augment(s, sample_seed(self.seed, s.id, self.epoch), self.augment_cfg)
        return s

    def __getitem__(self, index: int) -> dict:
        s = self.sample(index)
        item = {"index": index, "image": torch.from_numpy(s.image)}
        if s.mask is not None:
            item["mask"] = torch.from_numpy(s.mask.astype(np.float32))
        if s.screen_label is not None:
            item["label"] = SCREEN_CLASSES.index(s.screen_label)
        return item
