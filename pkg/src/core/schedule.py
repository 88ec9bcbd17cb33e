"""
Optimizador y calendario de tasa de aprendizaje.

Calentamiento lineal ``η·t/t_warm`` hasta ``t_warm`` y decaimiento lineal hasta 0
en ``total_iters``. El encoder usa ``η`` y las cabezas ``η × decoder_lr_mult``.
"""

from typing import List

import torch
from torch.optim.lr_scheduler import LambdaLR

from src.core.network.segmentor import DAFormer
from src.models.config import OptimizerConfig


def lr_factor(t: int, total_iters: int, cfg: OptimizerConfig) -> float:
    """Factor multiplicativo de la tasa base en la iteración *t*."""
    if not 0 <= t <= total_iters:
        raise ValueError(f"Iteración {t} fuera de [0, {total_iters}]")
    if cfg.warmup:
        if t < cfg.t_warm:
            return t / cfg.t_warm
        return (total_iters - t) / (total_iters - cfg.t_warm)
    return (total_iters - t) / total_iters


def lr_at(t: int, total_iters: int, cfg: OptimizerConfig) -> float:
    """Tasa de aprendizaje del encoder en la iteración *t*."""
    return cfg.lr * lr_factor(t, total_iters, cfg)


def build_optimizer(model: DAFormer, cfg: OptimizerConfig) -> torch.optim.AdamW:
    """AdamW con dos grupos: encoder (``lr``) y cabezas (``lr × decoder_lr_mult``)."""
    head_params: List[torch.nn.Parameter] = list(model.decode_head.parameters())
    head_params += list(model.attention_head.parameters())
    groups = [
        {"params": list(model.encoder.parameters()), "lr": cfg.lr, "name": "encoder"},
        {"params": head_params, "lr": cfg.lr * cfg.decoder_lr_mult, "name": "decoder"},
    ]
    return torch.optim.AdamW(groups, lr=cfg.lr, betas=tuple(cfg.betas),
                             weight_decay=cfg.weight_decay)


def build_scheduler(optimizer: torch.optim.Optimizer, total_iters: int,
                    cfg: OptimizerConfig) -> LambdaLR:
    """LambdaLR que aplica :func:`lr_factor` a la tasa inicial de cada grupo."""
    return LambdaLR(optimizer, lambda t: lr_factor(min(t, total_iters), total_iters, cfg))
