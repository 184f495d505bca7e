"""Fundus image preprocessing: black-border crop, square padding, CLAHE, resize.

Arrays follow the channels-first convention used by the model: images are
float32 ``3 x H x W`` in [0, 1], masks uint8 ``4 x H x W`` in {0, 1} with
lesion channels in the order EX, HE, MA, SE.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np

from lanet.config import LESIONS, PreprocessConfig


class ImageReadError(OSError):
    pass


class PreprocessError(ValueError):
    pass


@dataclass
class FundusSample:
    id: str
    image: np.ndarray
    mask: np.ndarray | None = None
    screen_label: str | None = None
    source_split: str = "train"

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[0] != 3:
            raise ValueError(f"image must be 3 x H x W, got {self.image.shape}")
        if self.mask is not None:
            if self.mask.shape != (len(LESIONS),) + self.image.shape[1:]:
                raise ValueError(f"mask shape {self.mask.shape} does not match image {self.image.shape}")
            if not np.isin(self.mask, (0, 1)).all():
                raise ValueError("mask values must be 0 or 1")


def read_image(path: str | Path) -> np.ndarray:
    """Read an RGB image file as a float32 3 x H x W array in [0, 1]."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise ImageReadError(f"cannot read image {path}")
    img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    return np.ascontiguousarray(img.transpose(2, 0, 1), dtype=np.float32) / 255.0


def read_raster(path: str | Path) -> np.ndarray:
    img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if img is None:
        raise ImageReadError(f"cannot read mask {path}")
    return img


def _binarize(raster: np.ndarray) -> np.ndarray:
    raster = np.asarray(raster)
    if raster.ndim == 3:
        raster = raster.max(axis=-1)
    # {0, 255} rasters are split at mid-range; {0, 1} rasters at zero
    cut = 127 if raster.max(initial=0) > 1 else 0
    return (raster > cut).astype(np.uint8)


def encode_mask(
    rasters: Sequence[np.ndarray | None] | Mapping[str, np.ndarray | None],
    shape: tuple[int, int] | None = None,
) -> np.ndarray:
    """Stack per-lesion rasters into a 4 x H x W binary mask.

    ``rasters`` is either a sequence in canonical lesion order or a mapping
    keyed by lesion name. Absent lesions become all-zero channels; ``shape``
    is required only when every raster is absent.
    """
    if isinstance(rasters, Mapping):
        rasters = [rasters.get(k) for k in LESIONS]
    if len(rasters) != len(LESIONS):
        raise ValueError(f"expected {len(LESIONS)} rasters, got {len(rasters)}")
    present = [np.asarray(r) for r in rasters if r is not None]
    sizes = {r.shape[:2] for r in present}
    if len(sizes) > 1:
        raise ValueError(f"lesion rasters disagree in size: {sorted(sizes)}")
    if sizes:
        hw = sizes.pop()
        if shape is not None and tuple(shape) != hw:
            raise ValueError(f"rasters are {hw}, expected {tuple(shape)}")
    elif shape is not None:
        hw = tuple(shape)
    else:
        raise ValueError("shape is required when all lesion rasters are absent")
    out = np.zeros((len(LESIONS),) + hw, dtype=np.uint8)
    for k, r in enumerate(rasters):
        if r is not None:
            out[k] = _binarize(r)
    return out


def black_border_box(image: np.ndarray, threshold: float = 0.02) -> tuple[int, int, int, int]:
    """Row/column bounds ``(r0, r1, c0, c1)`` of pixels brighter than ``threshold``.

    Brightness is the channel mean; the threshold is a fraction of full scale.
    """
    brightness = image.mean(axis=0)
    rows = np.flatnonzero((brightness > threshold).any(axis=1))
    cols = np.flatnonzero((brightness > threshold).any(axis=0))
    if rows.size == 0:
        raise PreprocessError("no retina content: image is entirely below the black threshold")
    return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1


def crop_black_border(image: np.ndarray, threshold: float = 0.02) -> np.ndarray:
    r0, r1, c0, c1 = black_border_box(image, threshold)
    return image[:, r0:r1, c0:c1].copy()


def pad_to_square(array: np.ndarray) -> np.ndarray:
    """Zero-pad the two trailing axes symmetrically to a square."""
    h, w = array.shape[-2:]
    side = max(h, w)
    top, left = (side - h) // 2, (side - w) // 2
    pad = [(0, 0)] * (array.ndim - 2) + [(top, side - h - top), (left, side - w - left)]
    return np.pad(array, pad)


def enhance(image: np.ndarray, clip_limit: float = 2.0, tiles: int = 8) -> np.ndarray:
    """Contrast-limited adaptive histogram equalization of the luminance channel."""
    rgb = np.clip(np.rint(image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    lab = cv2.cvtColor(rgb, cv2.COLOR_RGB2LAB)
    clahe = cv2.createCLAHE(clipLimit=float(clip_limit), tileGridSize=(tiles, tiles))
    lab[..., 0] = clahe.apply(np.ascontiguousarray(lab[..., 0]))
    out = cv2.cvtColor(lab, cv2.COLOR_LAB2RGB)
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32) / 255.0


def resize_image(image: np.ndarray, size: int) -> np.ndarray:
    if image.shape[1:] == (size, size):
        return image
    interp = cv2.INTER_AREA if image.shape[1] > size else cv2.INTER_LINEAR
    hwc = cv2.resize(np.ascontiguousarray(image.transpose(1, 2, 0)), (size, size), interpolation=interp)
    return np.ascontiguousarray(np.clip(hwc, 0.0, 1.0).transpose(2, 0, 1), dtype=np.float32)


def resize_mask(mask: np.ndarray, size: int) -> np.ndarray:
    if mask.shape[1:] == (size, size):
        return mask
    return np.stack([cv2.resize(m, (size, size), interpolation=cv2.INTER_NEAREST) for m in mask])


def preprocess(
    image: np.ndarray,
    mask: np.ndarray | None,
    size: int,
    cfg: PreprocessConfig | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """crop -> pad to square -> enhance -> resize, with the mask following the geometry."""
    cfg = cfg or PreprocessConfig()
    r0, r1, c0, c1 = black_border_box(image, cfg.crop_threshold)
    image = pad_to_square(image[:, r0:r1, c0:c1])
    if mask is not None:
        mask = pad_to_square(mask[:, r0:r1, c0:c1])
    if cfg.enhance:
        image = enhance(image, cfg.clahe_clip, cfg.clahe_tiles)
    image = resize_image(image, size)
    if mask is not None:
        mask = resize_mask(mask, size)
    return image, mask
