"""Experiment configuration.

Every run is described by one :class:`ExperimentConfig`, loaded from a YAML
file and optionally patched with ``key=value`` overrides (dotted keys reach
into nested sections, e.g. ``seg_loss.alpha=5``).
"""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

LESIONS: tuple[str, ...] = ("EX", "HE", "MA", "SE")
SCREEN_CLASSES: tuple[str, ...] = ("NoDR", "NPDR")


class ConfigError(ValueError):
    pass


@dataclass
class ModelVariant:
    use_lam: bool = True
    use_fpm: bool = True
    backbone: str = "resnet50"
    input_size: int = 512
    decoder_channels: tuple[int, ...] = (256, 128, 64, 64)
    num_lesions: int = 4
    screening_head: bool = False
    # ImageNet weights for the residual-50 encoder; False trains from scratch.
    pretrained: bool = True

    @property
    def name(self) -> str:
        if self.use_lam and self.use_fpm:
            return "Base+LAM+FPM"
        if self.use_lam:
            return "Base+LAM"
        if self.use_fpm:
            return "Base+FPM"
        return "Base"

    def header(self) -> dict[str, Any]:
        """Fields that determine the weight layout (recorded in checkpoints)."""
        return {
            "use_lam": self.use_lam,
            "use_fpm": self.use_fpm,
            "backbone": self.backbone,
            "input_size": self.input_size,
            "decoder_channels": list(self.decoder_channels),
            "num_lesions": self.num_lesions,
            "screening_head": self.screening_head,
            "lesion_order": list(LESIONS),
        }


@dataclass
class PreprocessConfig:
    crop_threshold: float = 0.02
    enhance: bool = True
    clahe_clip: float = 2.0
    clahe_tiles: int = 8


@dataclass
class AugmentConfig:
    enabled: bool = True
    flip_prob: float = 0.5
    max_rotation: float = 30.0
    crop_scale: tuple[float, float] = (0.8, 1.0)


@dataclass
class SegLossConfig:
    alpha: float = 10.0
    clamp_eps: float = 1e-7
    per_layer_weights: tuple[float, ...] = (1.0, 1.0, 1.0, 1.0)
    # score the deepest stage through the upsampled final map at input resolution
    full_res_final: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.clamp_eps <= 1e-3:
            raise ConfigError(f"clamp_eps must lie in (0, 1e-3], got {self.clamp_eps}")


@dataclass
class SmoothingConfig:
    epsilon: float = 0.2
    num_classes: int = 2

    def __post_init__(self):
        if not 0 <= self.epsilon < 1:
            raise ConfigError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        if self.num_classes < 2:
            raise ConfigError("num_classes must be at least 2")


@dataclass
class OptimConfig:
    name: str = "sgd"  # sgd | adamw
    lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    schedule: str = "poly"  # poly | cosine | fixed
    poly_power: float = 0.9


def _screening_optim() -> OptimConfig:
    return OptimConfig(name="adamw", lr=3e-4, weight_decay=1e-2, schedule="fixed")


@dataclass
class ExperimentConfig:
    name: str = "lanet"
    dataset: str = "IDRiD-Seg"
    root: str = "data/IDRiD"
    input_size: int = 512
    seed: int = 0
    batch_size: int = 8
    seg_epochs: int = 60
    scr_epochs: int = 20
    scratch_epochs: int = 30
    # Hard cap on optimizer steps; None means epochs decide.
    max_steps: int | None = None
    eval_split: str = "valid"
    eval_every: int = 1
    checkpoint_dir: str = "runs"
    freeze_encoder: bool = False
    binarize_threshold: float = 0.5
    ap_pooling: str = "pooled"  # pooled | per_image
    split_seed: int = 0
    variant: ModelVariant = field(default_factory=ModelVariant)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seg_loss: SegLossConfig = field(default_factory=SegLossConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    seg_optim: OptimConfig = field(default_factory=OptimConfig)
    scr_optim: OptimConfig = field(default_factory=_screening_optim)

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.ap_pooling not in ("pooled", "per_image"):
            raise ConfigError(f"unknown ap_pooling {self.ap_pooling!r}")
        # the top-level input size is authoritative
        self.variant.input_size = self.input_size

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _build(cls, data: dict[str, Any], where: str = ""):
    if not isinstance(data, dict):
        raise ConfigError(f"section {where or '<root>'} must be a mapping")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown config key(s) {sorted(unknown)} in {where or '<root>'}")
    kwargs = {}
    for key, value in data.items():
        hint = hints[key]
        if dataclasses.is_dataclass(hint):
            kwargs[key] = _build(hint, value, f"{where}{key}.")
        elif typing.get_origin(hint) is tuple and isinstance(value, list):
            kwargs[key] = tuple(value)
        else:
            kwargs[key] = value
    return cls(**kwargs)


def config_from_dict(data: dict[str, Any]) -> ExperimentConfig:
    return _build(ExperimentConfig, data)


def apply_overrides(data: dict[str, Any], overrides: list[str]) -> dict[str, Any]:
    """Apply ``a.b=value`` overrides to a raw config mapping (values parsed as YAML)."""
    data = _plain(data)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, raw = item.split("=", 1)
        parts = key.strip().split(".")
        node = data
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a scalar")
        node[parts[-1]] = yaml.safe_load(raw)
    return data


def load_config(path: str | Path | None = None, overrides: list[str] | None = None) -> ExperimentConfig:
    data: dict[str, Any] = {}
    if path is not None:
        loaded = yaml.safe_load(Path(path).read_text())
        data = loaded or {}
    data = apply_overrides(data, overrides or [])
    return config_from_dict(data)
