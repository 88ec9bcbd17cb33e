"""
Generalización de dominio: diversificación fotométrica de estilo y consistencia.

Solo usa datos fuente. Cada muestra se ve dos veces (original y estilizada)
con las mismas cajas de recorte; ambas vistas se supervisan y una divergencia
de Jensen-Shannon entre sus probabilidades las acerca.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np
import torch

from src.core.hrda import crop_pair_from_context, forward_crops, hrda_source_loss, sample_crops
from src.core.losses import style_consistency_divergence
from src.core.network.ema import ModelBundle
from src.core.photometric import PHOTOMETRIC_OPS, color_jitter
from src.core.selftrain import fd_inputs, feature_distance_term
from src.models.config import DgConfig, TrainConfig
from src.models.sample import Sample

logger = logging.getLogger(__name__)


def stylize(image: torch.Tensor, cfg: DgConfig, rng: np.random.Generator) -> torch.Tensor:
    """Brillo, contraste, saturación y tono aleatorios en orden aleatorio."""
    order = [PHOTOMETRIC_OPS[i] for i in rng.permutation(len(PHOTOMETRIC_OPS))]
    return color_jitter(image, cfg.brightness, cfg.contrast, cfg.saturation, cfg.hue, rng,
                        order=order)


def dg_objective(l_s: torch.Tensor, l_s_stylized: torch.Tensor, l_consistency: torch.Tensor,
                 l_fd: torch.Tensor, cfg: TrainConfig) -> torch.Tensor:
    """``L_S + L_S_estilizada + w · JSD + λ_FD · L_FD``."""
    total = l_s + l_s_stylized + cfg.dg.consistency_weight * l_consistency
    if cfg.fd.enabled:
        total = total + cfg.fd.lambda_fd * l_fd
    return total


def _normalized(p: torch.Tensor) -> torch.Tensor:
    # La fusión bilineal no suma exactamente 1 junto al borde de la caja de detalle
    return p / p.sum(dim=1, keepdim=True)


def dg_step(bundle: ModelBundle, optimizer: torch.optim.Optimizer, sources: List[Sample],
            cfg: TrainConfig, thing_flags: Sequence[bool],
            rng: np.random.Generator) -> Dict[str, float]:
    """Un paso de generalización de dominio; nunca consume datos objetivo.

    Returns:
        Diccionario con ``L_S``, ``L_S_stylized``, ``L_consistency`` y ``L_FD``.
    """
    spec, hrda = cfg.hrda.crop, cfg.hrda
    student = bundle.student
    student.train()
    optimizer.zero_grad(set_to_none=True)

    pairs = [sample_crops(s.image, spec, rng, s.label, hrda.interpolation) for s in sources]
    styled = [
        crop_pair_from_context(stylize(p.context_hr, cfg.dg, rng), p.box_context, p.box_detail,
                               spec, p.label_context_hr, hrda.interpolation)
        for p in pairs
    ]

    labels_hr = torch.stack([p.label_context_hr for p in pairs])
    labels_detail = torch.stack([p.label_detail for p in pairs])
    fused, y_d, _ = forward_crops(student, pairs, spec, hrda)
    fused_s, y_d_s, _ = forward_crops(student, styled, spec, hrda)
    weight = hrda.detail_loss_weight
    l_s = hrda_source_loss(fused, y_d, labels_hr, labels_detail if y_d is not None else None,
                           weight, hrda.interpolation).value
    l_s_styl = hrda_source_loss(fused_s, y_d_s, labels_hr,
                                labels_detail if y_d_s is not None else None,
                                weight, hrda.interpolation).value
    l_cons = style_consistency_divergence([_normalized(fused), _normalized(fused_s)])

    l_fd = l_s.new_zeros(())
    if cfg.fd.enabled and cfg.fd.lambda_fd > 0:
        images, labels = fd_inputs(sources, pairs)
        l_fd = feature_distance_term(bundle, images, labels, cfg, thing_flags).value

    total = dg_objective(l_s, l_s_styl, l_cons, l_fd, cfg)
    total.backward()
    optimizer.step()
    bundle.step += 1
    return {
        "L_S": float(l_s),
        "L_S_stylized": float(l_s_styl),
        "L_consistency": float(l_cons),
        "L_FD": float(l_fd),
    }
