"""Dataset manifests for the IDRiD, DDR and FGADR release layouts.

A manifest lists every usable sample once, with its split, image path, one
optional mask path per lesion (canonical order EX, HE, MA, SE) and, for the
screening set, a NoDR/NPDR label. Manifests are written as JSON Lines, one
record per sample::

    {"dataset": "IDRiD-Seg", "id": "IDRiD_01", "image": "/abs/IDRiD_01.jpg",
     "label": null, "masks": {"EX": "...", "HE": "...", "MA": "...", "SE": null},
     "split": "train"}

Keys are sorted and records ordered by (split, id) so that rebuilding a
manifest from the same directory produces identical bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lanet.config import LESIONS

DATASET_KINDS = ("IDRiD-Seg", "DDR-Seg", "FGADR-Seg", "DDR-Scr")
SPLITS = ("train", "valid", "test")
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".tif", ".tiff", ".bmp")

# Reference split sizes of the published experiments.
REFERENCE_COUNTS = {
    "IDRiD-Seg": {"train": 40, "valid": 14, "test": 27},
    "DDR-Seg": {"train": 383, "valid": 149, "test": 225},
    "FGADR-Seg": {"train": 920, "valid": 369, "test": 553},
    "DDR-Scr": {
        "train": {"NoDR": 3133, "NPDR": 2671},
        "valid": {"NoDR": 1253, "NPDR": 1068},
        "test": {"NoDR": 1880, "NPDR": 1604},
    },
}

# DR grades (ICDR 0-4, DDR adds 5 = ungradable) kept for screening.
NODR_GRADES = {0}
NPDR_GRADES = {1, 2, 3}
PDR_GRADE = 4


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    split: str
    image: str
    masks: dict[str, str | None] | None = None
    label: str | None = None

    def to_record(self, dataset: str) -> dict:
        return {
            "dataset": dataset,
            "id": self.id,
            "image": self.image,
            "label": self.label,
            "masks": None if self.masks is None else {k: self.masks[k] for k in LESIONS},
            "split": self.split,
        }


@dataclass
class DatasetManifest:
    dataset_kind: str
    entries: list[ManifestEntry] = field(default_factory=list)

    def split(self, name: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def counts(self) -> dict:
        out: dict = {}
        for s in SPLITS:
            items = self.split(s)
            if self.dataset_kind == "DDR-Scr":
                out[s] = {c: sum(e.label == c for e in items) for c in ("NoDR", "NPDR")}
            else:
                out[s] = len(items)
        return out

    def count_mismatches(self) -> list[str]:
        """Differences between on-disk split sizes and the published table."""
        ref = REFERENCE_COUNTS[self.dataset_kind]
        got = self.counts()
        return [f"{s}: expected {ref[s]}, found {got[s]}" for s in SPLITS if ref[s] != got[s]]

    def to_jsonl(self) -> str:
        ordered = sorted(self.entries, key=lambda e: (SPLITS.index(e.split), e.id))
        return "".join(json.dumps(e.to_record(self.dataset_kind), sort_keys=True) + "\n" for e in ordered)

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_jsonl())

    @classmethod
    def read(cls, path: str | Path) -> "DatasetManifest":
        kind = None
        entries = []
        for n, line in enumerate(Path(path).read_text().splitlines(), 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if kind is None:
                kind = rec["dataset"]
            elif rec["dataset"] != kind:
                raise ManifestError(f"{path}:{n}: mixed dataset kinds {kind!r} and {rec['dataset']!r}")
            entries.append(ManifestEntry(rec["id"], rec["split"], rec["image"], rec["masks"], rec["label"]))
        if kind is None:
            raise ManifestError(f"{path}: no entries")
        return cls(kind, entries)


def _require_dir(path: Path, what: str) -> Path:
    if not path.is_dir():
        raise ManifestError(f"missing directory {what!r} (expected at {path})")
    return path


def _images(folder: Path) -> list[Path]:
    return sorted(p for p in folder.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)


def _first_existing(folder: Path, stem: str) -> Path | None:
    for suffix in IMAGE_SUFFIXES:
        candidate = folder / f"{stem}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _seeded_split(ids: list[str], sizes: list[int], seed: int) -> list[list[str]]:
    order = np.random.default_rng(seed).permutation(len(ids))
    out, start = [], 0
    for size in sizes:
        out.append(sorted(ids[i] for i in order[start:start + size]))
        start += size
    return out


# -- IDRiD -------------------------------------------------------------------

_IDRID_IMAGES = "1. Original Images"
_IDRID_MASKS = "2. All Segmentation Groundtruths"
_IDRID_SETS = {"train": "a. Training Set", "test": "b. Testing Set"}
_IDRID_LESION_DIRS = {
    "MA": "1. Microaneurysms",
    "HE": "2. Haemorrhages",
    "EX": "3. Hard Exudates",
    "SE": "4. Soft Exudates",
}


def _idrid(root: Path, split_seed: int, valid_count: int = 14) -> list[ManifestEntry]:
    if (root / "A. Segmentation").is_dir():
        root = root / "A. Segmentation"
    img_root = _require_dir(root / _IDRID_IMAGES, _IDRID_IMAGES)
    mask_root = _require_dir(root / _IDRID_MASKS, _IDRID_MASKS)
    found: dict[str, list[ManifestEntry]] = {}
    for part, sub in _IDRID_SETS.items():
        images = _images(_require_dir(img_root / sub, f"{_IDRID_IMAGES}/{sub}"))
        mdir = _require_dir(mask_root / sub, f"{_IDRID_MASKS}/{sub}")
        entries = []
        for img in images:
            masks = {}
            for lesion in LESIONS:
                lesion_dir = mdir / _IDRID_LESION_DIRS[lesion]
                hit = _first_existing(lesion_dir, f"{img.stem}_{lesion}") if lesion_dir.is_dir() else None
                masks[lesion] = str(hit) if hit else None
            entries.append(ManifestEntry(img.stem, part, str(img), masks))
        found[part] = entries
    # the release has no validation split; carve one out of the training set
    train = found["train"]
    n_valid = min(valid_count, max(len(train) - 1, 0))
    valid_ids = set(_seeded_split([e.id for e in train], [n_valid], split_seed)[0])
    out = [ManifestEntry(e.id, "valid" if e.id in valid_ids else "train", e.image, e.masks) for e in train]
    return out + found["test"]


# -- DDR ---------------------------------------------------------------------

def _ddr_root(root: Path, sub: str) -> Path:
    if (root / sub).is_dir():
        return root / sub
    if root.name == sub:
        return root
    if (root / "DDR-dataset" / sub).is_dir():
        return root / "DDR-dataset" / sub
    raise ManifestError(f"missing directory {sub!r} under {root}")


def _ddr_seg(root: Path) -> list[ManifestEntry]:
    base = _ddr_root(root, "lesion_segmentation")
    entries = []
    for split in SPLITS:
        sdir = _require_dir(base / split, f"lesion_segmentation/{split}")
        images = _images(_require_dir(sdir / "image", f"lesion_segmentation/{split}/image"))
        label_dir = _require_dir(sdir / "label", f"lesion_segmentation/{split}/label")
        for img in images:
            masks = {}
            for lesion in LESIONS:
                hit = _first_existing(label_dir / lesion, img.stem) if (label_dir / lesion).is_dir() else None
                masks[lesion] = str(hit) if hit else None
            entries.append(ManifestEntry(img.stem, split, str(img), masks))
    return entries


def _screen_label(grade: int) -> str | None:
    if grade in NODR_GRADES:
        return "NoDR"
    if grade in NPDR_GRADES:
        return "NPDR"
    return None  # PDR (4) and ungradable (5) are excluded


def _ddr_scr(root: Path) -> list[ManifestEntry]:
    base = _ddr_root(root, "DR_grading")
    entries = []
    for split in SPLITS:
        sdir = _require_dir(base / split, f"DR_grading/{split}")
        listing = base / f"{split}.txt"
        if not listing.is_file():
            raise ManifestError(f"missing label file 'DR_grading/{split}.txt' (expected at {listing})")
        for n, line in enumerate(listing.read_text().splitlines(), 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise ManifestError(f"{listing}:{n}: expected '<file> <grade>'")
            name, grade = parts[0], int(parts[1])
            label = _screen_label(grade)
            if label is None:
                continue
            img = sdir / name
            if not img.is_file():
                raise ManifestError(f"{listing}:{n}: image {img} does not exist")
            entries.append(ManifestEntry(Path(name).stem, split, str(img), None, label))
    return entries


# -- FGADR -------------------------------------------------------------------

_FGADR_MASK_DIRS = {
    "EX": "HardExudate_Masks",
    "HE": "Hemohedge_Masks",
    "MA": "Microaneurysms_Masks",
    "SE": "SoftExudate_Masks",
}
_FGADR_LABELS = "DR_Seg_Grading_Label.csv"


def _fgadr(root: Path, split_seed: int) -> list[ManifestEntry]:
    if (root / "Seg-set").is_dir():
        root = root / "Seg-set"
    img_dir = _require_dir(root / "Original_Images", "Seg-set/Original_Images")
    label_file = root / _FGADR_LABELS
    if not label_file.is_file():
        raise ManifestError(f"missing label file {_FGADR_LABELS!r} (expected at {label_file})")
    grades = {}
    with open(label_file, newline="") as fh:
        for row in csv.reader(fh):
            if len(row) >= 2 and row[1].strip().lstrip("-").isdigit():
                grades[Path(row[0].strip()).stem] = int(row[1])
    kept = {}
    for img in _images(img_dir):
        if grades.get(img.stem) == PDR_GRADE:
            continue
        masks = {}
        for lesion in LESIONS:
            mdir = root / _FGADR_MASK_DIRS[lesion]
            hit = _first_existing(mdir, img.stem) if mdir.is_dir() else None
            masks[lesion] = str(hit) if hit else None
        kept[img.stem] = (img, masks)
    # no official split: proportions of the published 920/369/553 partition
    ids = sorted(kept)
    ref = REFERENCE_COUNTS["FGADR-Seg"]
    total = sum(ref.values())
    n_train = round(len(ids) * ref["train"] / total)
    n_valid = round(len(ids) * ref["valid"] / total)
    parts = _seeded_split(ids, [n_train, n_valid, len(ids) - n_train - n_valid], split_seed)
    entries = []
    for split, part in zip(SPLITS, parts):
        for i in part:
            img, masks = kept[i]
            entries.append(ManifestEntry(i, split, str(img), masks))
    return entries


def build_manifest(root_dir: str | Path, dataset_kind: str, split_seed: int = 0) -> DatasetManifest:
    """Scan a dataset release directory into a manifest.

    Raises :class:`ManifestError` when the layout is malformed, a split ends up
    empty, or an image id appears in more than one split.
    """
    root = Path(root_dir)
    if not root.is_dir():
        raise ManifestError(f"dataset root {root} does not exist")
    if dataset_kind not in DATASET_KINDS:
        raise ManifestError(f"unknown dataset kind {dataset_kind!r}; expected one of {DATASET_KINDS}")
    if not any(root.iterdir()):
        raise ManifestError(f"no entries: dataset root {root} is empty")
    if dataset_kind == "IDRiD-Seg":
        entries = _idrid(root, split_seed)
    elif dataset_kind == "DDR-Seg":
        entries = _ddr_seg(root)
    elif dataset_kind == "DDR-Scr":
        entries = _ddr_scr(root)
    else:
        entries = _fgadr(root, split_seed)

    manifest = DatasetManifest(dataset_kind, entries)
    for split in SPLITS:
        if not manifest.split(split):
            raise ManifestError(f"no entries in split {split!r} of {dataset_kind} at {root}")
    seen: dict[str, str] = {}
    for e in entries:
        if e.id in seen and seen[e.id] != e.split:
            raise ManifestError(f"image id {e.id!r} appears in splits {seen[e.id]!r} and {e.split!r}")
        seen[e.id] = e.split
    return manifest
