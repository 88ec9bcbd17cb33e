"""
Funciones de pérdida: entropía cruzada ponderada por calidad, distancia de
características en clases *thing* y divergencia de Jensen-Shannon entre vistas.

Los casos degenerados (todo IGNORE, máscara vacía) devuelven 0 con la marca
``is_empty`` en lugar de dividir por cero.
"""

import logging
from typing import NamedTuple, Sequence, Union

import torch
import torch.nn.functional as F

from src.core.validators import validate_probabilities
from src.models.sample import IGNORE_INDEX

logger = logging.getLogger(__name__)

# Suelo para log(p) al trabajar con probabilidades
_PROB_EPS = 1e-12


class LossValue(NamedTuple):
    value: torch.Tensor
    is_empty: bool = False


def weighted_cross_entropy(
    prediction: torch.Tensor,
    target: torch.Tensor,
    quality: Union[float, torch.Tensor] = 1.0,
    probabilities: bool = False,
) -> LossValue:
    """Entropía cruzada ``−Σ q · y · log p`` normalizada por los píxeles que contribuyen.

    Args:
        prediction: Logits (o probabilidades si ``probabilities=True``) de forma
            ``(K, h, w)`` o ``(N, K, h, w)``.
        target: Índices ``(h, w)``/``(N, h, w)`` con IGNORE, o one-hot con la
            misma forma que *prediction*.
        quality: Peso ``q`` escalar o mapa ``(h, w)``/``(N, h, w)`` en [0, 1].
        probabilities: Si *prediction* ya son probabilidades.

    Returns:
        LossValue; si todos los píxeles son IGNORE vale 0 con ``is_empty=True``.
    """
    pred = prediction if prediction.dim() == 4 else prediction.unsqueeze(0)
    if probabilities:
        log_p = pred.clamp_min(_PROB_EPS).log()
    else:
        log_p = F.log_softmax(pred, dim=1)

    if target.is_floating_point():
        one_hot = target if target.dim() == 4 else target.unsqueeze(0)
        if one_hot.shape != log_p.shape:
            raise ValueError(
                f"Objetivo one-hot {tuple(one_hot.shape)} incompatible con {tuple(log_p.shape)}"
            )
        valid = one_hot.sum(dim=1) > 0
        nll = -(one_hot * log_p).sum(dim=1)
    else:
        idx = target if target.dim() == 3 else target.unsqueeze(0)
        if idx.shape != log_p.shape[:1] + log_p.shape[2:]:
            raise ValueError(
                f"Objetivo {tuple(idx.shape)} incompatible con la predicción {tuple(log_p.shape)}"
            )
        valid = idx != IGNORE_INDEX
        safe = torch.where(valid, idx, torch.zeros_like(idx))
        nll = -log_p.gather(1, safe.unsqueeze(1)).squeeze(1)

    q = torch.as_tensor(quality, dtype=log_p.dtype, device=log_p.device)
    if q.dim() == 2:
        q = q.unsqueeze(0)
    weighted = torch.where(valid, q * nll, torch.zeros_like(nll))
    count = int(valid.sum())
    if count == 0:
        logger.debug("Entropía cruzada sin píxeles válidos")
        return LossValue(log_p.sum() * 0.0, True)
    return LossValue(weighted.sum() / count, False)


def downsample_thing_mask(label: torch.Tensor, thing_flags: Sequence[bool], r: float,
                          feature_size) -> torch.Tensor:
    """Máscara ``(H_F, W_F)`` de parches dominados por una clase *thing*.

    Cada canal one-hot se promedia en parches ``H/H_F × W/W_F``; una clase se
    conserva si su proporción supera estrictamente ``r``.

    Raises:
        ValueError: Si el tamaño de la etiqueta no es divisible por el de las características.
    """
    h, w = label.shape[-2:]
    hf, wf = feature_size
    if h % hf or w % wf:
        raise ValueError(f"La etiqueta {h}x{w} no es divisible por el tamaño {hf}x{wf}")
    num_classes = len(thing_flags)
    lbl = label if label.dim() == 3 else label.unsqueeze(0)
    valid = (lbl != IGNORE_INDEX) & (lbl < num_classes)
    safe = torch.where(valid, lbl, torch.zeros_like(lbl))
    one_hot = F.one_hot(safe, num_classes).permute(0, 3, 1, 2).double()
    one_hot = one_hot * valid.unsqueeze(1)
    pooled = F.avg_pool2d(one_hot, kernel_size=(h // hf, w // wf))
    things = torch.tensor(list(thing_flags), dtype=torch.bool, device=label.device)
    kept = (pooled > r) & things.view(1, -1, 1, 1)
    mask = kept.any(dim=1)
    return mask if label.dim() == 3 else mask.squeeze(0)


def feature_distance_loss(f_ref: torch.Tensor, f_student: torch.Tensor,
                          mask: torch.Tensor) -> LossValue:
    """Media de ``‖F_ref − F_student‖₂`` sobre los píxeles de la máscara.

    Las características tienen forma ``(C, H_F, W_F)`` o ``(N, C, H_F, W_F)``. El
    gradiente solo llega a ``f_student``; en distancia cero se usa el
    subgradiente 0.
    """
    if f_ref.shape != f_student.shape:
        raise ValueError(
            f"Formas distintas: {tuple(f_ref.shape)} frente a {tuple(f_student.shape)}"
        )
    diff = f_student - f_ref.detach()
    sq = (diff * diff).sum(dim=-3)
    nonzero = sq > 0
    dist = torch.where(nonzero, torch.sqrt(torch.where(nonzero, sq, torch.ones_like(sq))),
                       torch.zeros_like(sq))
    m = mask.to(dist.dtype)
    total = m.sum()
    if float(total) == 0.0:
        logger.debug("Máscara de distancia de características vacía")
        return LossValue(dist.sum() * 0.0, True)
    return LossValue((dist * m).sum() / total, False)


def style_consistency_divergence(prob_maps: Sequence[torch.Tensor]) -> torch.Tensor:
    """Divergencia de Jensen-Shannon media por píxel entre varios mapas de probabilidad.

    ``JSD = H(media p) − media H(p_i)`` con logaritmo natural; los mapas tienen
    forma ``(K, h, w)`` o ``(N, K, h, w)``.

    Raises:
        ValueError: Si algún mapa no está normalizado.
    """
    if not prob_maps:
        raise ValueError("Se necesita al menos un mapa de probabilidades")
    maps = [p if p.dim() == 4 else p.unsqueeze(0) for p in prob_maps]
    for p in maps:
        validate_probabilities(p.detach(), dim=1)

    def entropy(p: torch.Tensor) -> torch.Tensor:
        return -(p * p.clamp_min(_PROB_EPS).log()).sum(dim=1)

    mean_p = torch.stack(maps).mean(dim=0)
    mean_h = torch.stack([entropy(p) for p in maps]).mean(dim=0)
    return (entropy(mean_p) - mean_h).mean()
