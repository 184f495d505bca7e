"""Seeded geometric augmentation shared by image and mask."""

from __future__ import annotations

import dataclasses
import zlib

import cv2
import numpy as np

from lanet.config import AugmentConfig
from lanet.data.preprocess import FundusSample


def sample_seed(global_seed: int, sample_id: str, epoch: int = 0) -> int:
    """Per-sample seed, independent of worker scheduling."""
    seq = np.random.SeedSequence([global_seed, zlib.crc32(sample_id.encode()), epoch])
    return int(seq.generate_state(1)[0])


def _warp(channels: np.ndarray, matrix: np.ndarray, interp: int) -> np.ndarray:
    h, w = channels.shape[1:]
    return np.stack([
        cv2.warpAffine(c, matrix, (w, h), flags=interp, borderMode=cv2.BORDER_CONSTANT, borderValue=0)
        for c in channels
    ])


def _resize(channels: np.ndarray, h: int, w: int, interp: int) -> np.ndarray:
    return np.stack([cv2.resize(c, (w, h), interpolation=interp) for c in channels])


def augment(sample: FundusSample, seed: int, cfg: AugmentConfig | None = None) -> FundusSample:
    """Random horizontal flip, rotation and rescaled crop.

    The same transform is applied to image and mask; masks use nearest
    neighbour resampling and are re-binarized. All random draws happen in a
    fixed order so the result depends only on ``(sample, seed, cfg)``.
    """
    cfg = cfg or AugmentConfig()
    rng = np.random.default_rng(seed)
    flip = rng.random() < cfg.flip_prob
    angle = float(rng.uniform(-cfg.max_rotation, cfg.max_rotation)) if cfg.max_rotation > 0 else 0.0
    lo, hi = cfg.crop_scale
    scale = float(rng.uniform(lo, hi)) if hi > lo else float(hi)
    u_row, u_col = rng.random(2)

    image = sample.image
    mask = sample.mask
    h, w = image.shape[1:]

    if flip:
        image = image[:, :, ::-1]
        mask = None if mask is None else mask[:, :, ::-1]

    if angle != 0.0:
        matrix = cv2.getRotationMatrix2D(((w - 1) / 2.0, (h - 1) / 2.0), angle, 1.0)
        image = _warp(np.ascontiguousarray(image, dtype=np.float32), matrix, cv2.INTER_LINEAR)
        if mask is not None:
            mask = _warp(np.ascontiguousarray(mask, dtype=np.uint8), matrix, cv2.INTER_NEAREST)

    if scale < 1.0:
        ch, cw = max(1, round(h * scale)), max(1, round(w * scale))
        r0 = int(u_row * (h - ch + 1)) if h > ch else 0
        c0 = int(u_col * (w - cw + 1)) if w > cw else 0
        image = _resize(np.ascontiguousarray(image[:, r0:r0 + ch, c0:c0 + cw]), h, w, cv2.INTER_LINEAR)
        if mask is not None:
            mask = _resize(np.ascontiguousarray(mask[:, r0:r0 + ch, c0:c0 + cw]), h, w, cv2.INTER_NEAREST)

    image = np.ascontiguousarray(np.clip(image, 0.0, 1.0), dtype=np.float32)
    if mask is not None:
        mask = (np.ascontiguousarray(mask) > 0).astype(np.uint8)
    return dataclasses.replace(sample, image=image, mask=mask)
