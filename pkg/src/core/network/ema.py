"""
Conjunto de redes del entrenamiento: alumno, profesor EMA y encoder de referencia.
"""

import copy
import logging
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from src.core.network.segmentor import DAFormer, build_segmentor
from src.models.config import DecoderConfig, EncoderConfig

logger = logging.getLogger(__name__)


@dataclass
class ModelBundle:
    """Alumno ``θ``, profesor ``φ`` y encoder de referencia congelado para la distancia de características.

    El profesor y la referencia no reciben gradiente.
    """

    student: DAFormer
    teacher: DAFormer
    reference: nn.Module
    step: int = 0


def _freeze(module: nn.Module) -> nn.Module:
    module.eval()
    for p in module.parameters():
        p.requires_grad_(False)
    return module


def build_model_bundle(enc: EncoderConfig, dec: DecoderConfig, num_classes: int,
                       seed: int = 0,
                       reference_state: Optional[dict] = None) -> ModelBundle:
    """Crea el conjunto de redes.

    El profesor arranca como copia exacta del alumno. La referencia es una
    instantánea del encoder inicial, o el encoder contenido en
    *reference_state* (``state_dict`` de un segmentador) si se proporciona.
    """
    student = build_segmentor(enc, dec, num_classes, seed)
    teacher = _freeze(copy.deepcopy(student))
    reference = copy.deepcopy(student.encoder)
    if reference_state is not None:
        prefix = "encoder."
        encoder_state = {k[len(prefix):]: v for k, v in reference_state.items()
                         if k.startswith(prefix)}
        reference.load_state_dict(encoder_state)
        logger.info("Encoder de referencia cargado desde checkpoint")
    return ModelBundle(student=student, teacher=teacher, reference=_freeze(reference))


@torch.no_grad()
def ema_update(teacher: nn.Module, student: nn.Module, alpha: float) -> None:
    """Actualiza *teacher* en el sitio: ``φ ← α·φ + (1 − α)·θ``.

    Raises:
        ValueError: Si ``alpha`` no está en [0, 1] o los parámetros no coinciden.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha debe estar en [0, 1] (alpha={alpha})")
    t_params = dict(teacher.named_parameters())
    s_params = dict(student.named_parameters())
    if t_params.keys() != s_params.keys():
        raise ValueError("Profesor y alumno no tienen los mismos parámetros")
    for name, pt in t_params.items():
        ps = s_params[name]
        if pt.shape != ps.shape:
            raise ValueError(
                f"Forma distinta en '{name}': {tuple(pt.shape)} frente a {tuple(ps.shape)}"
            )
        pt.mul_(alpha).add_(ps.detach(), alpha=1.0 - alpha)
