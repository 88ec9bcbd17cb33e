"""
Auto-entrenamiento para adaptación no supervisada.

El profesor EMA genera pseudo-etiquetas sobre imágenes objetivo limpias; el
alumno aprende de una mezcla ClassMix (clases pegadas desde la fuente)
aumentada con color y desenfoque, ponderada por la calidad ``q`` de la
pseudo-etiqueta. Después de cada paso del optimizador el profesor se actualiza
como media móvil exponencial del alumno.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from src.core.hrda import (
    crop_pair_from_context,
    forward_crops,
    hrda_loss,
    hrda_source_loss,
    pseudo_label_context,
    sample_crops,
    sample_detail_box,
)
from src.core.losses import LossValue, downsample_thing_mask, feature_distance_loss
from src.core.network.ema import ModelBundle, ema_update
from src.core.network.segmentor import ENCODER_STRIDE
from src.core.photometric import color_jitter, gaussian_blur
from src.models.config import FdConfig, SelfTrainConfig, TrainConfig
from src.models.crop import CropPair
from src.models.pseudo_label import PseudoLabel
from src.models.sample import IGNORE_INDEX, Domain, Sample

logger = logging.getLogger(__name__)


def augment(image: torch.Tensor, cfg: SelfTrainConfig, rng: np.random.Generator) -> torch.Tensor:
    """Jitter de color (con probabilidad) y desenfoque gaussiano opcional; la etiqueta no cambia."""
    out = image
    strength = cfg.color_jitter_strength
    if strength > 0 and rng.uniform() < cfg.color_jitter_probability:
        out = color_jitter(out, strength, strength, strength, min(strength, 0.5), rng)
    if cfg.blur and rng.uniform() < cfg.blur_probability:
        lo, hi = cfg.blur_sigma
        out = gaussian_blur(out, float(rng.uniform(lo, hi)))
    return out.clamp(0.0, 1.0)


def classmix(src: Sample, tgt_image: torch.Tensor, tgt_pseudo: PseudoLabel,
             rng: np.random.Generator,
             classes: Optional[Sequence[int]] = None) -> Tuple[Sample, torch.Tensor]:
    """Pega en la imagen objetivo los píxeles fuente de la mitad de sus clases.

    Args:
        src: Muestra fuente (imagen y etiqueta).
        tgt_image: Imagen objetivo del mismo tamaño.
        tgt_pseudo: Pseudo-etiqueta de la imagen objetivo.
        rng: Generador para elegir ``⌈n/2⌉`` de las ``n`` clases presentes.
        classes: Clases a pegar; si se da, sustituye a la elección aleatoria.

    Returns:
        Tupla ``(muestra mezclada, mapa de calidad)``; la calidad vale 1 en los
        píxeles pegados y ``q`` en el resto.
    """
    if tuple(src.label.shape) != tuple(tgt_image.shape[-2:]):
        raise ValueError(
            f"Tamaños distintos: fuente {tuple(src.label.shape)}, objetivo "
            f"{tuple(tgt_image.shape[-2:])}"
        )
    if classes is None:
        present = [int(c) for c in torch.unique(src.label) if int(c) != IGNORE_INDEX]
        n_pick = math.ceil(len(present) / 2)
        classes = sorted(int(c) for c in rng.choice(present, size=n_pick, replace=False)) \
            if present else []

    mask = torch.zeros_like(src.label, dtype=torch.bool)
    for c in classes:
        mask |= src.label == c

    image = torch.where(mask.unsqueeze(0), src.image, tgt_image)
    label = torch.where(mask, src.label, tgt_pseudo.as_target())
    quality = torch.where(mask, torch.ones_like(mask, dtype=src.image.dtype),
                          torch.full(mask.shape, tgt_pseudo.quality, dtype=src.image.dtype))
    mixed = Sample(image=image, label=label, domain=Domain.TARGET, id=f"mix_{src.id}")
    return mixed, quality


def _whole_image_size(samples: Sequence[Sample]) -> Optional[Tuple[int, int]]:
    sizes = {tuple(s.label.shape) for s in samples}
    if len(sizes) != 1:
        return None
    h, w = next(iter(sizes))
    if h % ENCODER_STRIDE or w % ENCODER_STRIDE:
        return None
    return h, w


def fd_inputs(sources: Sequence[Sample],
              pairs: Sequence[CropPair]) -> Tuple[torch.Tensor, torch.Tensor]:
    """Imágenes y etiquetas sobre las que se mide la distancia de características.

    Se usa la imagen fuente completa, igual para el alumno y la referencia,
    cuando todas comparten tamaño múltiplo de ``ENCODER_STRIDE``; si no, los
    recortes de contexto a alta resolución.
    """
    if _whole_image_size(sources) is not None:
        return (torch.stack([s.image for s in sources]),
                torch.stack([s.label for s in sources]))
    return (torch.stack([p.context_hr for p in pairs]),
            torch.stack([p.label_context_hr for p in pairs]))


def fd_coverage(samples: Sequence[Sample], thing_flags: Sequence[bool],
                cfg: FdConfig) -> Optional[Tuple[Tuple[int, int], float]]:
    """Rejilla de ``F_4`` y fracción de muestras con algún parche dominado por una clase *thing*.

    Devuelve ``None`` si las imágenes no se pueden pasar completas al encoder.
    """
    size = _whole_image_size(samples)
    if size is None:
        return None
    grid = (size[0] // ENCODER_STRIDE, size[1] // ENCODER_STRIDE)
    flags = list(thing_flags) if cfg.things_only else [True] * len(thing_flags)
    active = sum(bool(downsample_thing_mask(s.label, flags, cfg.r, grid).any()) for s in samples)
    return grid, active / len(samples)


def feature_distance_term(bundle: ModelBundle, images: torch.Tensor, labels: torch.Tensor,
                          cfg: TrainConfig, thing_flags: Sequence[bool]) -> LossValue:
    """``L_FD`` entre el encoder del alumno y el de referencia congelado."""
    with torch.no_grad():
        ref = bundle.reference(images)[-1]
    student_f4 = bundle.student.encode(images)[-1]
    flags = list(thing_flags) if cfg.fd.things_only else [True] * len(thing_flags)
    mask = downsample_thing_mask(labels, flags, cfg.fd.r, tuple(ref.shape[-2:]))
    return feature_distance_loss(ref, student_f4, mask)


def source_losses(bundle: ModelBundle, pairs: List[CropPair], cfg: TrainConfig,
                  thing_flags: Sequence[bool],
                  sources: Sequence[Sample]) -> Dict[str, LossValue]:
    """Pérdida supervisada del alumno sobre pares de recortes etiquetados y distancia de características."""
    fused, y_d, _ = forward_crops(bundle.student, pairs, cfg.hrda.crop, cfg.hrda)
    labels_hr = torch.stack([p.label_context_hr for p in pairs])
    labels_detail = torch.stack([p.label_detail for p in pairs]) if y_d is not None else None
    losses = {"L_S": hrda_source_loss(fused, y_d, labels_hr, labels_detail,
                                      cfg.hrda.detail_loss_weight, cfg.hrda.interpolation)}

    if cfg.fd.enabled and cfg.fd.lambda_fd > 0:
        images, labels = fd_inputs(sources, pairs)
        losses["L_FD"] = feature_distance_term(bundle, images, labels, cfg, thing_flags)
    return losses


def uda_step(bundle: ModelBundle, optimizer: torch.optim.Optimizer, sources: List[Sample],
             target_images: List[torch.Tensor], cfg: TrainConfig,
             thing_flags: Sequence[bool], rng: np.random.Generator) -> Dict[str, float]:
    """Un paso de adaptación: fuente + FD, pseudo-etiquetas, ClassMix, objetivo y EMA.

    Returns:
        Diccionario con ``L_S``, ``L_FD``, ``L_T`` y la calidad media ``q``.
    """
    spec, hrda, st = cfg.hrda.crop, cfg.hrda, cfg.selftrain
    student, teacher = bundle.student, bundle.teacher
    student.train()
    optimizer.zero_grad(set_to_none=True)

    src_pairs = [sample_crops(s.image, spec, rng, s.label, hrda.interpolation) for s in sources]
    src = source_losses(bundle, src_pairs, cfg, thing_flags, sources)
    total_src = src["L_S"].value
    if "L_FD" in src:
        total_src = total_src + cfg.fd.lambda_fd * src["L_FD"].value
    total_src.backward()

    mixed_pairs: List[CropPair] = []
    q_maps, q_detail, qualities = [], [], []
    for s_pair, s_sample, tgt in zip(src_pairs, sources, target_images):
        t_pair = sample_crops(tgt, spec, rng, None, hrda.interpolation)
        _, pseudo = pseudo_label_context(teacher, t_pair.context_hr, spec, hrda, st,
                                         t_pair.box_context, int(tgt.shape[-2]))
        qualities.append(pseudo.quality)
        src_crop = Sample(image=s_pair.context_hr, label=s_pair.label_context_hr,
                          domain=Domain.SOURCE, id=s_sample.id)
        mixed, quality = classmix(src_crop, t_pair.context_hr, pseudo, rng)
        mixed_image = augment(mixed.image, st, rng)
        box_d = sample_detail_box(spec, rng)
        mixed_pairs.append(crop_pair_from_context(mixed_image, t_pair.box_context, box_d, spec,
                                                  mixed.label, hrda.interpolation))
        y1, y2, x1, x2 = box_d
        q_maps.append(quality)
        q_detail.append(quality[y1:y2, x1:x2])

    fused, y_d, _ = forward_crops(student, mixed_pairs, spec, hrda)
    labels_hr = torch.stack([p.label_context_hr for p in mixed_pairs])
    labels_detail = torch.stack([p.label_detail for p in mixed_pairs]) if y_d is not None else None
    tgt_loss = hrda_loss(fused, y_d, labels_hr, labels_detail, hrda.detail_loss_weight,
                         torch.stack(q_maps), torch.stack(q_detail), hrda.interpolation)
    tgt_loss.value.backward()

    optimizer.step()
    ema_update(teacher, student, st.alpha)
    bundle.step += 1

    return {
        "L_S": float(src["L_S"].value),
        "L_FD": float(src["L_FD"].value) if "L_FD" in src else 0.0,
        "L_T": float(tgt_loss.value),
        "q": float(np.mean(qualities)) if qualities else 0.0,
    }


def supervised_step(bundle: ModelBundle, optimizer: torch.optim.Optimizer,
                    samples: List[Sample], cfg: TrainConfig, thing_flags: Sequence[bool],
                    rng: np.random.Generator) -> Dict[str, float]:
    """Paso supervisado (modos solo-fuente y oráculo): ``L_S + λ_FD · L_FD``."""
    spec, hrda = cfg.hrda.crop, cfg.hrda
    bundle.student.train()
    optimizer.zero_grad(set_to_none=True)
    pairs = [sample_crops(s.image, spec, rng, s.label, hrda.interpolation) for s in samples]
    losses = source_losses(bundle, pairs, cfg, thing_flags, samples)
    total = losses["L_S"].value
    if "L_FD" in losses:
        total = total + cfg.fd.lambda_fd * losses["L_FD"].value
    total.backward()
    optimizer.step()
    bundle.step += 1
    return {
        "L_S": float(losses["L_S"].value),
        "L_FD": float(losses["L_FD"].value) if "L_FD" in losses else 0.0,
    }
