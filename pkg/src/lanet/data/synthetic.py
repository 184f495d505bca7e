"""Synthetic fundus-like images for desk-scale runs.

Writes the DDR release layout (``lesion_segmentation`` and ``DR_grading``)
so synthetic data goes through the same manifest and loading code as the
real datasets. Lesions are drawn as filled discs with lesion-typical colours;
NPDR images carry lesions, NoDR images do not.
"""

from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np

from lanet.config import LESIONS
from lanet.data.manifest import SPLITS

# RGB colour and radius range (fraction of image size) per lesion type
_LESION_STYLE = {
    "EX": ((250, 225, 80), (0.06, 0.10)),
    "HE": ((90, 15, 10), (0.05, 0.08)),
    "MA": ((110, 20, 15), (0.012, 0.02)),
    "SE": ((235, 215, 190), (0.06, 0.09)),
}


def render_fundus(
    rng: np.random.Generator,
    size: int,
    lesion_counts: dict[str, int] | None = None,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Return an RGB uint8 image with a black border and per-lesion {0,255} masks."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    cy = cx = (size - 1) / 2.0
    radius = 0.42 * size
    dist = np.sqrt((yy - cy) ** 2 + (xx - cx) ** 2)
    retina = dist <= radius

    falloff = np.clip(1.0 - 0.5 * (dist / radius) ** 2, 0.0, 1.0)
    base = np.array([175, 75, 35], dtype=np.float32)
    img = falloff[..., None] * base + rng.normal(0, 4, size=(size, size, 3))

    # optic disc and a few vessels
    od_x = cx + rng.choice([-1, 1]) * 0.22 * size
    od = (yy - cy) ** 2 + (xx - od_x) ** 2 <= (0.08 * size) ** 2
    img[od] = (230, 190, 120)
    for _ in range(3):
        end = (int(rng.uniform(0.1, 0.9) * size), int(rng.uniform(0.1, 0.9) * size))
        cv2.line(img, (int(od_x), int(cy)), end, (120, 30, 20), max(1, size // 64))

    masks = {k: np.zeros((size, size), np.uint8) for k in LESIONS}
    for lesion, count in (lesion_counts or {}).items():
        colour, (rmin, rmax) = _LESION_STYLE[lesion]
        for _ in range(count):
            r = max(1, int(round(rng.uniform(rmin, rmax) * size)))
            for _attempt in range(50):
                py, px = rng.uniform(cy - radius, cy + radius, size=2)
                if np.hypot(py - cy, px - cx) < radius - r - 2:
                    break
            centre = (int(round(px)), int(round(py)))
            cv2.circle(masks[lesion], centre, r, 255, -1)
            cv2.circle(img, centre, r, colour, -1)

    img[~retina] = 0
    for m in masks.values():
        m[~retina] = 0
    return np.clip(img, 0, 255).astype(np.uint8), masks


def _lesion_counts(rng: np.random.Generator, require_ex: bool) -> dict[str, int]:
    counts = {k: int(rng.integers(1, 4)) if rng.random() < 0.8 else 0 for k in LESIONS}
    if require_ex and counts["EX"] == 0:
        counts["EX"] = int(rng.integers(1, 4))
    return counts


def _write_rgb(path: Path, rgb: np.ndarray) -> None:
    cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR))


def make_synthetic_ddr(
    root: str | Path,
    seg_counts: tuple[int, int, int] = (4, 2, 2),
    scr_counts: tuple[tuple[int, int], ...] = ((8, 8), (4, 4), (4, 4)),
    size: int = 80,
    seed: int = 0,
    excluded_per_split: int = 1,
) -> Path:
    """Write a small DDR-layout dataset under ``root`` and return ``root``.

    ``scr_counts`` holds (NoDR, NPDR) counts per split; ``excluded_per_split``
    extra PDR/ungradable images are listed so manifest filtering is exercised.
    Every segmentation image contains hard exudates.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)

    for split, n in zip(SPLITS, seg_counts):
        img_dir = root / "lesion_segmentation" / split / "image"
        img_dir.mkdir(parents=True, exist_ok=True)
        for k in LESIONS:
            (root / "lesion_segmentation" / split / "label" / k).mkdir(parents=True, exist_ok=True)
        for i in range(n):
            name = f"seg_{split}_{i:03d}"
            rgb, masks = render_fundus(rng, size, _lesion_counts(rng, require_ex=True))
            _write_rgb(img_dir / f"{name}.jpg", rgb)
            for k in LESIONS:
                cv2.imwrite(str(root / "lesion_segmentation" / split / "label" / k / f"{name}.tif"), masks[k])

    grading = root / "DR_grading"
    for split, (n_nodr, n_npdr) in zip(SPLITS, scr_counts):
        sdir = grading / split
        sdir.mkdir(parents=True, exist_ok=True)
        lines = []
        grades = [0] * n_nodr + [int(g) for g in rng.integers(1, 4, size=n_npdr)]
        grades += [4 + (j % 2) for j in range(excluded_per_split)]
        for i, grade in enumerate(grades):
            name = f"scr_{split}_{i:04d}.jpg"
            counts = _lesion_counts(rng, require_ex=False) if grade > 0 else {}
            if grade > 0 and not any(counts.values()):
                counts["HE"] = 2
            rgb, _ = render_fundus(rng, size, counts)
            _write_rgb(sdir / name, rgb)
            lines.append(f"{name} {grade}")
        (grading / f"{split}.txt").write_text("\n".join(lines) + "\n")
    return root
