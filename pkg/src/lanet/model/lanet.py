"""The lesion-aware segmentation network and its screening extension."""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
import torch.nn as nn
import torch.nn.functional as F

from lanet.config import ModelVariant
from lanet.model.blocks import (
    FeatureFusionBlock,
    FeaturePreserveBlock,
    HeadAttention,
    LesionAwareModule,
    UpsampleProject,
    conv_bn_relu,
)
from lanet.model.encoder import BACKBONES, build_encoder

DECODER_DEPTH = 4


@dataclass
class LesionOutput:
    """Per-stage lesion maps (coarse to fine), the final full-size map, decoder features."""

    stages: list[torch.Tensor]
    final: torch.Tensor
    features: list[torch.Tensor] = field(default_factory=list)
    logits: torch.Tensor | None = None


class LANet(nn.Module):
    """Encoder, head attention and a four-stage decoder with a lesion head per stage.

    Stage 0 decodes the head-attention output of the deepest encoder feature;
    stage ``i > 0`` fuses the encoder skip ``4 - i`` with stage ``i - 1``
    through the feature-preserve module, then applies a lesion-aware module.
    Ablation variants swap the lesion-aware module for a 3 x 3 convolution
    and the feature-preserve module for bilinear upsampling. With
    ``screening_head`` the pooled decoder features feed a two-way classifier.
    """

    def __init__(self, variant: ModelVariant):
        super().__init__()
        if variant.backbone not in BACKBONES:
            raise ValueError(f"unsupported backbone {variant.backbone!r}; expected one of {BACKBONES}")
        if variant.input_size % 32:
            raise ValueError(f"input size {variant.input_size} is not divisible by 32")
        widths = tuple(variant.decoder_channels)
        if len(widths) != DECODER_DEPTH:
            raise ValueError(f"decoder_channels needs {DECODER_DEPTH} widths, got {widths}")
        self.variant = variant

        self.encoder = build_encoder(variant.backbone, variant.pretrained)
        enc = self.encoder.channels
        self.ham = HeadAttention(enc[3], widths[0])

        self.lams = nn.ModuleList(
            LesionAwareModule(w, w) if variant.use_lam else conv_bn_relu(w, w, 3) for w in widths
        )
        if variant.use_fpm:
            self.fpbs = nn.ModuleList(
                FeaturePreserveBlock(enc[3], widths[i - 1], widths[i - 1]) for i in range(1, DECODER_DEPTH)
            )
            self.ffbs = nn.ModuleList(
                FeatureFusionBlock(enc[3 - i], widths[i - 1], widths[i]) for i in range(1, DECODER_DEPTH)
            )
        else:
            self.ups = nn.ModuleList(UpsampleProject(widths[i - 1], widths[i]) for i in range(1, DECODER_DEPTH))
        self.heads = nn.ModuleList(nn.Conv2d(w, variant.num_lesions, 1) for w in widths)
        if variant.screening_head:
            self.classifier = nn.Linear(sum(widths), 2)
        self._init_decoder()

    def _init_decoder(self):
        for name, module in self.named_modules():
            if name.startswith("encoder"):
                continue
            if isinstance(module, nn.Conv2d):
                nn.init.kaiming_normal_(module.weight, mode="fan_in", nonlinearity="relu")
                if module.bias is not None:
                    nn.init.zeros_(module.bias)

    def decode_stage(self, i: int, feats: list[torch.Tensor], prev: torch.Tensor | None) -> torch.Tensor:
        if i == 0:
            x = self.ham(feats[3])
        elif self.variant.use_fpm:
            x_fpb = self.fpbs[i - 1](feats[3], prev)
            x = self.ffbs[i - 1](feats[3 - i], prev, x_fpb)
        else:
            x = self.ups[i - 1](prev, feats[3 - i].shape[-2:])
        return self.lams[i](x)

    def forward(self, image: torch.Tensor) -> LesionOutput:
        size = image.shape[-2:]
        if size[0] % 32 or size[1] % 32:
            raise ValueError(f"input spatial size {tuple(size)} is not divisible by 32")
        feats = self.encoder(image)
        decoded, maps = [], []
        prev = None
        for i in range(DECODER_DEPTH):
            prev = self.decode_stage(i, feats, prev)
            decoded.append(prev)
            maps.append(torch.sigmoid(self.heads[i](prev)))
        final = F.interpolate(maps[-1], size=size, mode="bilinear", align_corners=False)
        logits = None
        if self.variant.screening_head:
            pooled = torch.cat([F.adaptive_avg_pool2d(d, 1).flatten(1) for d in decoded], dim=1)
            logits = self.classifier(pooled)
        return LesionOutput(maps, final, decoded, logits)

    def screen(self, image: torch.Tensor) -> tuple[LesionOutput, torch.Tensor]:
        """Lesion maps plus NoDR/NPDR logits; requires a screening head."""
        if not self.variant.screening_head:
            raise RuntimeError("model was built without a screening head")
        out = self.forward(image)
        return out, out.logits

    def head_parameter_names(self) -> list[str]:
        return [n for n, _ in self.named_parameters() if n.startswith("classifier.")]


def build_variant(variant: ModelVariant) -> LANet:
    return LANet(variant)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
