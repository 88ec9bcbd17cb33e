"""
Cabezas de decodificación sobre la pirámide ``[F_1..F_4]``.

- ``DAFormerHead``: fusión consciente del contexto. Cada nivel se proyecta a
  ``C_e`` canales con una conv 1×1, se sube al tamaño de ``F_1``, se concatena
  y se fusiona con ramas paralelas de convoluciones 3×3 dilatadas
  (depthwise-separables por defecto) unidas por una conv 1×1. Sin pooling
  global.
- ``SegFormerMLPHead``: proyección 1×1 por nivel, concatenación y fusión 1×1.
- ``ContextF4Head``: las ramas dilatadas solo sobre el cuello de botella ``F_4``.
- ``AttentionHead``: decodificador MLP ligero con salida sigmoide de un canal.
"""

import math
from typing import List, Sequence

import torch
import torch.nn as nn
import torch.nn.functional as F


def _group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


def _upsample_to(x: torch.Tensor, size) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


class SeparableConv2d(nn.Sequential):
    """Conv 3×3 depthwise dilatada seguida de conv 1×1 pointwise."""

    def __init__(self, in_channels: int, out_channels: int, dilation: int):
        super().__init__(
            nn.Conv2d(in_channels, in_channels, kernel_size=3, padding=dilation,
                      dilation=dilation, groups=in_channels, bias=False),
            nn.Conv2d(in_channels, out_channels, kernel_size=1),
        )


class DilatedFusion(nn.Module):
    """Ramas paralelas con distintas dilataciones y fusión 1×1 (tipo ASPP sin pooling global)."""

    def __init__(self, in_channels: int, out_channels: int, dilation_rates: Sequence[int],
                 depthwise_separable: bool = True):
        super().__init__()
        branches = []
        for rate in dilation_rates:
            if rate == 1:
                conv = nn.Conv2d(in_channels, out_channels, kernel_size=1)
            elif depthwise_separable:
                conv = SeparableConv2d(in_channels, out_channels, rate)
            else:
                conv = nn.Conv2d(in_channels, out_channels, kernel_size=3,
                                 padding=rate, dilation=rate)
            branches.append(nn.Sequential(conv, _group_norm(out_channels), nn.ReLU()))
        self.branches = nn.ModuleList(branches)
        self.merge = nn.Sequential(
            nn.Conv2d(out_channels * len(dilation_rates), out_channels, kernel_size=1),
            _group_norm(out_channels),
            nn.ReLU(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.merge(torch.cat([branch(x) for branch in self.branches], dim=1))


class _PyramidEmbedding(nn.Module):
    """Proyección 1×1 de cada nivel a ``embed`` canales y subida al tamaño de ``F_1``."""

    def __init__(self, in_channels: Sequence[int], embed: int):
        super().__init__()
        self.proj = nn.ModuleList([nn.Conv2d(c, embed, kernel_size=1) for c in in_channels])

    def forward(self, features: List[torch.Tensor]) -> List[torch.Tensor]:
        size = features[0].shape[-2:]
        return [_upsample_to(proj(f), size) for proj, f in zip(self.proj, features)]


class DAFormerHead(nn.Module):
    def __init__(self, in_channels: Sequence[int], num_classes: int, embed: int,
                 dilation_rates: Sequence[int], depthwise_separable: bool = True):
        super().__init__()
        self.embed = _PyramidEmbedding(in_channels, embed)
        self.fusion = DilatedFusion(embed * len(in_channels), embed, dilation_rates,
                                    depthwise_separable)
        self.classifier = nn.Conv2d(embed, num_classes, kernel_size=1)

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        x = torch.cat(self.embed(features), dim=1)
        return self.classifier(self.fusion(x))


class SegFormerMLPHead(nn.Module):
    def __init__(self, in_channels: Sequence[int], num_classes: int, embed: int):
        super().__init__()
        self.embed = _PyramidEmbedding(in_channels, embed)
        self.fuse = nn.Sequential(
            nn.Conv2d(embed * len(in_channels), embed, kernel_size=1),
            _group_norm(embed),
            nn.ReLU(),
        )
        self.classifier = nn.Conv2d(embed, num_classes, kernel_size=1)

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        x = torch.cat(self.embed(features), dim=1)
        return self.classifier(self.fuse(x))


class ContextF4Head(nn.Module):
    def __init__(self, in_channels: Sequence[int], num_classes: int, embed: int,
                 dilation_rates: Sequence[int], depthwise_separable: bool = True):
        super().__init__()
        self.embed = _PyramidEmbedding(in_channels, embed)
        self.context = DilatedFusion(embed, embed, dilation_rates, depthwise_separable)
        self.fuse = nn.Sequential(
            nn.Conv2d(embed * len(in_channels), embed, kernel_size=1),
            _group_norm(embed),
            nn.ReLU(),
        )
        self.classifier = nn.Conv2d(embed, num_classes, kernel_size=1)

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        size = features[0].shape[-2:]
        embedded = [proj(f) for proj, f in zip(self.embed.proj, features)]
        embedded[-1] = self.context(embedded[-1])
        x = torch.cat([_upsample_to(e, size) for e in embedded], dim=1)
        return self.classifier(self.fuse(x))


class AttentionHead(nn.Module):
    """Atención de escala: valores en (0, 1), un canal, mismo stride que los logits."""

    def __init__(self, in_channels: Sequence[int], embed: int):
        super().__init__()
        self.embed = _PyramidEmbedding(in_channels, embed)
        self.fuse = nn.Sequential(
            nn.Conv2d(embed * len(in_channels), embed, kernel_size=1),
            nn.ReLU(),
        )
        self.classifier = nn.Conv2d(embed, 1, kernel_size=1)

    def forward(self, features: List[torch.Tensor]) -> torch.Tensor:
        x = torch.cat(self.embed(features), dim=1)
        return torch.sigmoid(self.classifier(self.fuse(x)))
