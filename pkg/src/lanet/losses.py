"""Segmentation and screening losses.

``weighted_bce`` up-weights lesion pixels by ``alpha``; ``seg_loss`` sums it
over every decoder stage (deep supervision) against max-pooled ground truth;
``screening_ce`` is cross-entropy against label-smoothed targets.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

from lanet.config import SegLossConfig, SmoothingConfig


def weighted_bce(pred: torch.Tensor, gt: torch.Tensor, cfg: SegLossConfig | None = None) -> torch.Tensor:
    """Positive-weighted binary cross-entropy averaged over the last two axes.

    Leading axes (batch, lesion channel) are averaged as well, giving one
    scalar. ``pred`` is clamped to ``[eps, 1 - eps]`` before the logs.
    """
    cfg = cfg or SegLossConfig()
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {tuple(pred.shape)} != ground truth {tuple(gt.shape)}")
    if not torch.all((gt == 0) | (gt == 1)):
        raise ValueError("ground truth must be binary (0 or 1)")
    x = pred.clamp(cfg.clamp_eps, 1.0 - cfg.clamp_eps)
    per_pixel = cfg.alpha * gt * torch.log(x) + (1.0 - gt) * torch.log1p(-x)
    return -per_pixel.mean(dim=(-2, -1)).mean()


def downsample_mask(gt: torch.Tensor, size: Sequence[int]) -> torch.Tensor:
    """Max-pool a binary mask to ``size`` so a cell is positive if any pixel in it is."""
    h, w = gt.shape[-2:]
    if (h, w) == tuple(size):
        return gt
    if h % size[0] or w % size[1]:
        raise ValueError(f"mask size {(h, w)} is not a multiple of {tuple(size)}")
    return F.max_pool2d(gt, kernel_size=(h // size[0], w // size[1]))


def seg_loss(stages: Sequence[torch.Tensor], gt_mask: torch.Tensor, cfg: SegLossConfig | None = None) -> torch.Tensor:
    """Deep-supervision loss: ``sum_s w_s * weighted_bce(stage_s, pooled gt)``.

    ``stages`` are the per-stage lesion maps (N, 4, h_s, w_s), coarse to fine;
    weights align with the last ``len(stages)`` entries of ``per_layer_weights``.
    """
    cfg = cfg or SegLossConfig()
    weights = list(cfg.per_layer_weights)[-len(stages):]
    if len(weights) != len(stages):
        raise ValueError(f"{len(stages)} stages but {len(cfg.per_layer_weights)} layer weights")
    total = gt_mask.new_zeros(())
    for w, pred in zip(weights, stages):
        if w == 0:
            continue
        total = total + w * weighted_bce(pred, downsample_mask(gt_mask, pred.shape[-2:]), cfg)
    return total


def smooth_labels(hard_label, cfg: SmoothingConfig | None = None) -> torch.Tensor:
    """Label-smoothed target(s): ``1 - eps + eps/C`` for the true class, ``eps/C`` elsewhere.

    Accepts a class index or a 1-D tensor of indices; returns float64.
    """
    cfg = cfg or SmoothingConfig()
    labels = torch.as_tensor(hard_label, dtype=torch.long)
    if torch.any(labels < 0) or torch.any(labels >= cfg.num_classes):
        raise IndexError(f"label {hard_label} out of range for {cfg.num_classes} classes")
    off = cfg.epsilon / cfg.num_classes
    # written as 1 - (C-1)*off so the entries sum to one
    on = 1.0 - (cfg.num_classes - 1) * off
    out = torch.full(labels.shape + (cfg.num_classes,), off, dtype=torch.float64)
    out.scatter_(-1, labels.unsqueeze(-1), on)
    return out


def screening_ce(logits: torch.Tensor, smoothed: torch.Tensor) -> torch.Tensor:
    """``-sum_i y_hat_i * log softmax(logits)_i``, averaged over the batch."""
    if not torch.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    logp = F.log_softmax(logits, dim=-1)
    loss = -(smoothed.to(logp.dtype) * logp).sum(dim=-1)
    return loss.mean()
