"""
Pseudo-etiquetas a partir de las probabilidades del profesor.
"""

import logging
from typing import Optional

import torch

from src.core.validators import validate_probabilities
from src.models.config import SelfTrainConfig
from src.models.pseudo_label import PseudoLabel

logger = logging.getLogger(__name__)


def make_pseudo_label(teacher_probs: torch.Tensor, tau: float,
                      edge_cfg: SelfTrainConfig, canvas_height: Optional[int] = None,
                      row_offset: int = 0) -> PseudoLabel:
    """Argmax del profesor, máscara de bordes y calidad ``q``.

    Args:
        teacher_probs: Probabilidades ``(K, H, W)``.
        tau: Umbral de confianza.
        edge_cfg: Configuración con las bandas de borde.
        canvas_height: Alto de la imagen completa a la que pertenecen las
            probabilidades; las bandas se escalan a este alto. Por defecto ``H``.
        row_offset: Fila de la imagen completa en la que empieza el recorte.

    Returns:
        PseudoLabel con ``q`` = fracción de píxeles válidos con probabilidad
        máxima ``>= tau``. Los empates se resuelven hacia la clase de menor índice.
    """
    if teacher_probs.dim() != 3:
        raise ValueError(f"Se esperaba (K, H, W), recibido {tuple(teacher_probs.shape)}")
    validate_probabilities(teacher_probs, dim=0)
    max_prob, labels = teacher_probs.max(dim=0)

    h, w = labels.shape
    canvas_height = h if canvas_height is None else canvas_height
    if row_offset < 0 or row_offset + h > canvas_height:
        raise ValueError(
            f"Las filas {row_offset}..{row_offset + h} no caben en una imagen "
            f"de alto {canvas_height}"
        )
    top, bottom = edge_cfg.edge_bands(canvas_height)
    rows = torch.arange(row_offset, row_offset + h, device=labels.device)
    valid_rows = (rows >= top) & (rows < canvas_height - bottom)
    valid = valid_rows.view(h, 1).expand(h, w).clone()

    n_valid = int(valid.sum())
    if n_valid == 0:
        logger.debug("Pseudo-etiqueta sin píxeles válidos (H=%d)", h)
        return PseudoLabel(labels=labels, quality=0.0, valid_mask=valid, degenerate=True)
    confident = int(((max_prob >= tau) & valid).sum())
    return PseudoLabel(labels=labels, quality=confident / n_valid, valid_mask=valid)
