from __future__ import annotations

import torch
import torch.nn as nn
import torchvision
from torchvision.models.resnet import BasicBlock

BACKBONES = ("resnet50", "tiny")


class ResNetEncoder(nn.Module):
    """Residual-50 stages 1-4 (strides 4, 8, 16, 32); the stem is not a skip."""

    def __init__(self, pretrained: bool = False):
        super().__init__()
        weights = None
        if pretrained:
            weights = torchvision.models.ResNet50_Weights.IMAGENET1K_V1
        try:
            net = torchvision.models.resnet50(weights=weights)
        except Exception as exc:  # download / cache failures
            raise RuntimeError(
                "could not load ImageNet weights for resnet50; set variant.pretrained=false "
                f"to train from scratch ({exc})"
            ) from exc
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu, net.maxpool)
        self.stages = nn.ModuleList([net.layer1, net.layer2, net.layer3, net.layer4])
        self.channels = (256, 512, 1024, 2048)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def _stage(in_ch: int, out_ch: int, stride: int) -> nn.Sequential:
    down = None
    if stride != 1 or in_ch != out_ch:
        down = nn.Sequential(nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False), nn.BatchNorm2d(out_ch))
    return nn.Sequential(BasicBlock(in_ch, out_ch, stride, down), BasicBlock(out_ch, out_ch))


class TinyEncoder(nn.Module):
    """Small residual encoder with the same four-stage stride layout, for desk-scale runs."""

    def __init__(self, widths: tuple[int, ...] = (32, 64, 128, 256)):
        super().__init__()
        self.stem = nn.Sequential(
            nn.Conv2d(3, widths[0], 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
            nn.Conv2d(widths[0], widths[0], 3, stride=2, padding=1, bias=False),
            nn.BatchNorm2d(widths[0]),
            nn.ReLU(inplace=True),
        )
        ins = (widths[0],) + tuple(widths[:-1])
        self.stages = nn.ModuleList([_stage(i, o, 1 if k == 0 else 2) for k, (i, o) in enumerate(zip(ins, widths))])
        self.channels = tuple(widths)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        x = self.stem(x)
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        return feats


def build_encoder(backbone: str, pretrained: bool = False) -> nn.Module:
    if backbone == "resnet50":
        return ResNetEncoder(pretrained)
    if backbone == "tiny":
        return TinyEncoder()
    raise ValueError(f"unsupported backbone {backbone!r}; expected one of {BACKBONES}")
