"""
Segmentador completo: encoder + cabeza de segmentación + cabeza de atención de escala.

Nombres de parámetros fijos para los checkpoints: ``encoder.*``, ``decode_head.*``
y ``attention_head.*``.
"""

import logging
from typing import List, Tuple

import torch
import torch.nn as nn

from src.core.network.conv_encoder import ConvEncoder
from src.core.network.decoders import (
    AttentionHead,
    ContextF4Head,
    DAFormerHead,
    SegFormerMLPHead,
)
from src.core.network.mix_transformer import MixTransformer
from src.core.validators import validate_spatial_divisible
from src.models.config import DecoderConfig, EncoderConfig

logger = logging.getLogger(__name__)

# Stride total del encoder: la entrada debe ser múltiplo de este valor
ENCODER_STRIDE = 32
OUTPUT_STRIDE = 4


def build_encoder(cfg: EncoderConfig) -> nn.Module:
    if cfg.variant == "conv_baseline":
        return ConvEncoder(cfg)
    return MixTransformer(cfg)


def build_decode_head(enc: EncoderConfig, dec: DecoderConfig, num_classes: int) -> nn.Module:
    if dec.variant == "segformer_mlp":
        return SegFormerMLPHead(enc.channels, num_classes, dec.embed_channels)
    if dec.variant == "context_f4":
        return ContextF4Head(enc.channels, num_classes, dec.embed_channels,
                             dec.dilation_rates, dec.use_depthwise_separable)
    return DAFormerHead(enc.channels, num_classes, dec.embed_channels,
                        dec.dilation_rates, dec.use_depthwise_separable)


class DAFormer(nn.Module):
    """Red de segmentación con stride de salida 4."""

    def __init__(self, enc: EncoderConfig, dec: DecoderConfig, num_classes: int):
        super().__init__()
        self.num_classes = num_classes
        self.channels = list(enc.channels)
        self.encoder = build_encoder(enc)
        self.decode_head = build_decode_head(enc, dec, num_classes)
        self.attention_head = AttentionHead(enc.channels, dec.attention_channels)

    def encode(self, images: torch.Tensor) -> List[torch.Tensor]:
        """Pirámide de características de un lote ``(N, 3, H, W)``.

        Raises:
            ValueError: Si H o W no son múltiplos de 32.
        """
        if images.dim() != 4 or images.shape[1] != 3:
            raise ValueError(f"Se esperaba un lote (N, 3, H, W), recibido {tuple(images.shape)}")
        validate_spatial_divisible(images.shape[-2], images.shape[-1], ENCODER_STRIDE)
        return self.encoder(images)

    def decode_segmentation(self, features: List[torch.Tensor]) -> torch.Tensor:
        """Logits ``(N, K, H/4, W/4)``."""
        self._check_pyramid(features)
        return self.decode_head(features)

    def decode_attention(self, features: List[torch.Tensor]) -> torch.Tensor:
        """Atención de escala ``(N, 1, H/4, W/4)`` en (0, 1)."""
        self._check_pyramid(features)
        return self.attention_head(features)

    def forward(self, images: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor, List[torch.Tensor]]:
        """Devuelve ``(logits, atención, pirámide)``."""
        features = self.encode(images)
        return self.decode_segmentation(features), self.decode_attention(features), features

    def _check_pyramid(self, features: List[torch.Tensor]) -> None:
        if len(features) != len(self.channels):
            raise ValueError(
                f"La pirámide debe tener {len(self.channels)} niveles (recibidos {len(features)})"
            )
        h0, w0 = features[0].shape[-2:]
        for i, (f, c) in enumerate(zip(features, self.channels)):
            expected = (h0 // 2 ** i, w0 // 2 ** i)
            if f.shape[1] != c or tuple(f.shape[-2:]) != expected:
                raise ValueError(
                    f"Nivel F_{i + 1} con forma {tuple(f.shape[1:])}, se esperaba "
                    f"({c}, {expected[0]}, {expected[1]})"
                )


def init_weights(module: nn.Module) -> None:
    """Normal truncada (std 0.02) en capas lineales; Kaiming (fan_out) en convoluciones."""
    for m in module.modules():
        if isinstance(m, nn.Linear):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, nn.Conv2d):
            fan_out = m.kernel_size[0] * m.kernel_size[1] * m.out_channels // m.groups
            nn.init.normal_(m.weight, 0.0, (2.0 / fan_out) ** 0.5)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.LayerNorm, nn.GroupNorm)):
            nn.init.ones_(m.weight)
            nn.init.zeros_(m.bias)


def build_segmentor(enc: EncoderConfig, dec: DecoderConfig, num_classes: int,
                    seed: int = 0) -> DAFormer:
    """Construye un DAFormer con inicialización determinista a partir de *seed*."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        model = DAFormer(enc, dec, num_classes)
        init_weights(model)
    n_params = sum(p.numel() for p in model.parameters())
    logger.debug("Segmentador %s/%s con %d parámetros", enc.variant, dec.variant, n_params)
    return model
