"""
Encoder convolucional de referencia con la misma pirámide de salida que MiT.
"""

import math
from typing import List

import torch
import torch.nn as nn

from src.models.config import EncoderConfig


def _group_norm(channels: int) -> nn.GroupNorm:
    return nn.GroupNorm(math.gcd(8, channels), channels)


class _ConvStage(nn.Sequential):
    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__(
            nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=stride, padding=1),
            _group_norm(out_channels),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_channels, out_channels, kernel_size=3, padding=1),
            _group_norm(out_channels),
            nn.ReLU(inplace=True),
        )


class ConvEncoder(nn.Module):
    """Convoluciones con stride: 4 en la primera etapa (dos saltos de 2) y 2 en las siguientes."""

    def __init__(self, cfg: EncoderConfig, in_channels: int = 3):
        super().__init__()
        self.channels = list(cfg.channels)
        self.stem = _ConvStage(in_channels, cfg.channels[0], stride=2)
        stages = [_ConvStage(cfg.channels[0], cfg.channels[0], stride=2)]
        for prev, dim in zip(cfg.channels, cfg.channels[1:]):
            stages.append(_ConvStage(prev, dim, stride=2))
        self.stages = nn.ModuleList(stages)

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        x = self.stem(x)
        features = []
        for stage in self.stages:
            x = stage(x)
            features.append(x)
        return features
