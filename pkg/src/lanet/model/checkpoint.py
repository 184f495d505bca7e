"""Checkpoint files: weights keyed by block name plus a variant header.

The payload is serialised into memory before being written so the bytes do
not depend on the target filename; save -> load -> save is byte-identical.
"""

from __future__ import annotations

import io
import sys
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import torch
import torch.nn as nn

from lanet.config import ModelVariant

FORMAT = "lanet-checkpoint/1"
# header keys that change the parameter layout
_LAYOUT_KEYS = ("use_lam", "use_fpm", "backbone", "decoder_channels", "num_lesions", "lesion_order")


class IncompatibleCheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    weights: "OrderedDict[str, torch.Tensor]"
    header: dict[str, Any]
    epoch: int = 0
    optimizer_state: dict | None = None
    best: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_model(cls, model: nn.Module, variant: ModelVariant, epoch: int = 0,
                   optimizer: torch.optim.Optimizer | None = None, best: dict | None = None) -> "Checkpoint":
        weights = OrderedDict((k, v.detach().cpu().clone()) for k, v in model.state_dict().items())
        opt_state = None
        if optimizer is not None:
            opt_state = _clone(optimizer.state_dict())
        return cls(weights, variant.header(), epoch, opt_state, dict(best or {}))

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        payload = {
            "format": FORMAT,
            "header": self.header,
            "epoch": self.epoch,
            "best": self.best,
            "weights": self.weights,
            "optimizer": self.optimizer_state,
        }
        torch.save(_canonical(payload), buf)
        return buf.getvalue()

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        payload = torch.load(io.BytesIO(data), map_location="cpu", weights_only=True)
        if not isinstance(payload, dict) or payload.get("format") != FORMAT:
            raise IncompatibleCheckpointError("not a lanet checkpoint (format tag missing or unknown)")
        return cls(payload["weights"], payload["header"], payload["epoch"], payload["optimizer"], payload["best"])

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        return cls.from_bytes(Path(path).read_bytes())

    def variant(self, **changes) -> ModelVariant:
        h = dict(self.header)
        h.pop("lesion_order", None)
        h["decoder_channels"] = tuple(h["decoder_channels"])
        h.update(pretrained=False)
        h.update(changes)
        return ModelVariant(**h)


def _canonical(obj):
    """Rebuild containers with interned strings.

    The pickler memoises by object identity, so equal strings that are
    distinct objects (as after a load) would otherwise serialise differently.
    """
    if isinstance(obj, str):
        return sys.intern(obj)
    if isinstance(obj, dict):
        return type(obj)((_canonical(k), _canonical(v)) for k, v in obj.items())
    if isinstance(obj, (list, tuple)):
        return type(obj)(_canonical(v) for v in obj)
    return obj


def _clone(obj):
    if isinstance(obj, torch.Tensor):
        return obj.detach().cpu().clone()
    if isinstance(obj, dict):
        return {k: _clone(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_clone(v) for v in obj]
    return obj


def check_compatible(header: dict[str, Any], variant: ModelVariant, ignore_screening_head: bool = False) -> None:
    expected = variant.header()
    diffs = [k for k in _LAYOUT_KEYS if header.get(k) != expected[k]]
    if not ignore_screening_head and header.get("screening_head") != expected["screening_head"]:
        diffs.append("screening_head")
    if diffs:
        detail = ", ".join(f"{k}: checkpoint={header.get(k)!r} model={expected[k]!r}" for k in diffs)
        raise IncompatibleCheckpointError(f"checkpoint does not match model variant ({detail})")


def load_weights(model: nn.Module, ckpt: Checkpoint, variant: ModelVariant, allow_new_head: bool = False) -> list[str]:
    """Copy checkpoint weights into ``model``; returns the keys left at their initial value.

    With ``allow_new_head`` a segmentation checkpoint may initialise a model
    that additionally carries the screening classifier.
    """
    check_compatible(ckpt.header, variant, ignore_screening_head=allow_new_head)
    own = model.state_dict()
    missing = [k for k in own if k not in ckpt.weights]
    unexpected = [k for k in ckpt.weights if k not in own]
    if allow_new_head:
        missing_bad = [k for k in missing if not k.startswith("classifier.")]
        unexpected = [k for k in unexpected if not k.startswith("classifier.")]
    else:
        missing_bad = missing
    if missing_bad or unexpected:
        raise IncompatibleCheckpointError(
            f"weight keys differ: missing {missing_bad[:5]}, unexpected {unexpected[:5]}"
        )
    shared = {k: v for k, v in ckpt.weights.items() if k in own}
    for k, v in shared.items():
        if own[k].shape != v.shape:
            raise IncompatibleCheckpointError(f"shape mismatch for {k}: {tuple(v.shape)} vs {tuple(own[k].shape)}")
    model.load_state_dict(shared, strict=not allow_new_head)
    return missing
