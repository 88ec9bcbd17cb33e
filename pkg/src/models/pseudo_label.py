"""
Modelo de datos para pseudo-etiquetas del profesor EMA.
"""

from dataclasses import dataclass

import torch

from src.models.sample import IGNORE_INDEX


@dataclass
class PseudoLabel:
    """Pseudo-etiqueta de una imagen objetivo.

    Attributes:
        labels: Mapa ``(H, W)`` con el argmax del profesor en todos los píxeles.
        quality: Estimación escalar de calidad ``q`` en [0, 1].
        valid_mask: Máscara booleana ``(H, W)``; falsa en las bandas de borde ignoradas.
        degenerate: True si no quedó ningún píxel válido (``q`` se fija a 0).
    """

    labels: torch.Tensor
    quality: float
    valid_mask: torch.Tensor
    degenerate: bool = False

    def as_target(self) -> torch.Tensor:
        """Etiquetas con ``IGNORE_INDEX`` en los píxeles no válidos."""
        target = self.labels.clone()
        target[~self.valid_mask] = IGNORE_INDEX
        return target
