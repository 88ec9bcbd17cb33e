"""
Encoder Mix Transformer (MiT) de cuatro etapas.

Cada etapa reduce la resolución con una incrustación de parches solapados
(convolución 7×7/4 en la primera etapa, 3×3/2 en las demás) y aplica bloques
con auto-atención eficiente (claves y valores reducidos espacialmente por
``sr_ratio``) y un Mix-FFN con convolución depthwise 3×3.
"""

from typing import List, Tuple

import torch
import torch.nn as nn

from src.models.config import EncoderConfig


class OverlapPatchEmbed(nn.Module):
    """Incrustación de parches solapados: conv con padding ``k // 2`` + LayerNorm."""

    def __init__(self, in_channels: int, embed_dim: int, patch_size: int, stride: int):
        super().__init__()
        self.proj = nn.Conv2d(in_channels, embed_dim, kernel_size=patch_size,
                              stride=stride, padding=patch_size // 2)
        self.norm = nn.LayerNorm(embed_dim)

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, int, int]:
        x = self.proj(x)
        _, _, h, w = x.shape
        tokens = self.norm(x.flatten(2).transpose(1, 2))
        return tokens, h, w


class EfficientSelfAttention(nn.Module):
    """Auto-atención multi-cabeza con reducción de secuencia en claves y valores."""

    def __init__(self, dim: int, num_heads: int, sr_ratio: int):
        super().__init__()
        if dim % num_heads:
            raise ValueError(f"{dim} canales no son divisibles entre {num_heads} cabezas")
        self.num_heads = num_heads
        self.head_dim = dim // num_heads
        self.scale = self.head_dim ** -0.5
        self.q = nn.Linear(dim, dim)
        self.kv = nn.Linear(dim, dim * 2)
        self.proj = nn.Linear(dim, dim)
        self.sr_ratio = sr_ratio
        if sr_ratio > 1:
            self.sr = nn.Conv2d(dim, dim, kernel_size=sr_ratio, stride=sr_ratio)
            self.norm = nn.LayerNorm(dim)

    def forward(self, x: torch.Tensor, h: int, w: int) -> torch.Tensor:
        b, n, c = x.shape
        q = self.q(x).reshape(b, n, self.num_heads, self.head_dim).transpose(1, 2)

        if self.sr_ratio > 1:
            x_ = x.transpose(1, 2).reshape(b, c, h, w)
            x_ = self.norm(self.sr(x_).flatten(2).transpose(1, 2))
        else:
            x_ = x
        kv = self.kv(x_).reshape(b, -1, 2, self.num_heads, self.head_dim).permute(2, 0, 3, 1, 4)
        k, v = kv.unbind(0)

        attn = (q @ k.transpose(-2, -1)) * self.scale
        attn = attn.softmax(dim=-1)
        out = (attn @ v).transpose(1, 2).reshape(b, n, c)
        return self.proj(out)


class MixFFN(nn.Module):
    def __init__(self, dim: int, hidden: int):
        super().__init__()
        self.fc1 = nn.Linear(dim, hidden)
        self.dwconv = nn.Conv2d(hidden, hidden, kernel_size=3, padding=1, groups=hidden)
        self.act = nn.GELU()
        self.fc2 = nn.Linear(hidden, dim)

    def forward(self, x: torch.Tensor, h: int, w: int) -> torch.Tensor:
        x = self.fc1(x)
        b, n, c = x.shape
        x = self.dwconv(x.transpose(1, 2).reshape(b, c, h, w)).flatten(2).transpose(1, 2)
        return self.fc2(self.act(x))


class MixBlock(nn.Module):
    def __init__(self, dim: int, num_heads: int, sr_ratio: int, mlp_ratio: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = EfficientSelfAttention(dim, num_heads, sr_ratio)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = MixFFN(dim, dim * mlp_ratio)

    def forward(self, x: torch.Tensor, h: int, w: int) -> torch.Tensor:
        x = x + self.attn(self.norm1(x), h, w)
        x = x + self.mlp(self.norm2(x), h, w)
        return x


class MixTransformer(nn.Module):
    """Encoder jerárquico: devuelve ``[F_1, F_2, F_3, F_4]`` con strides 4, 8, 16 y 32."""

    def __init__(self, cfg: EncoderConfig, in_channels: int = 3):
        super().__init__()
        self.channels = list(cfg.channels)
        self.patch_embeds = nn.ModuleList()
        self.blocks = nn.ModuleList()
        self.norms = nn.ModuleList()
        prev = in_channels
        for i, dim in enumerate(cfg.channels):
            if i == 0:
                embed = OverlapPatchEmbed(prev, dim, patch_size=2 * cfg.patch_size - 1,
                                          stride=cfg.patch_size)
            else:
                embed = OverlapPatchEmbed(prev, dim, patch_size=3, stride=2)
            self.patch_embeds.append(embed)
            self.blocks.append(nn.ModuleList([
                MixBlock(dim, cfg.num_heads[i], cfg.sr_ratios[i], cfg.mlp_ratio)
                for _ in range(cfg.depths[i])
            ]))
            self.norms.append(nn.LayerNorm(dim))
            prev = dim

    def forward(self, x: torch.Tensor) -> List[torch.Tensor]:
        features = []
        b = x.shape[0]
        for embed, blocks, norm in zip(self.patch_embeds, self.blocks, self.norms):
            tokens, h, w = embed(x)
            for block in blocks:
                tokens = block(tokens, h, w)
            tokens = norm(tokens)
            x = tokens.transpose(1, 2).reshape(b, -1, h, w)
            features.append(x)
        return features
