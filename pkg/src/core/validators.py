"""
Validadores de datos de entrada (imágenes, etiquetas, mapas de probabilidad).
"""

import torch

from src.models.sample import IGNORE_INDEX


def validate_image(image: torch.Tensor) -> None:
    """
    Valida una imagen ``(3, H, W)`` con valores en [0, 1].

    Raises:
        ValueError: Si la forma o el rango no son válidos.
    """
    if image.dim() != 3 or image.shape[0] != 3:
        raise ValueError(f"Se esperaba una imagen (3, H, W), recibido {tuple(image.shape)}")
    if not image.is_floating_point():
        raise ValueError("La imagen debe ser de tipo flotante")
    if image.numel() and (image.min() < 0 or image.max() > 1):
        raise ValueError("Los valores de la imagen deben estar en [0, 1]")


def validate_label_values(label: torch.Tensor, num_classes: int) -> None:
    """
    Valida que todos los valores de *label* estén en ``0..K-1`` o sean IGNORE.

    Raises:
        ValueError: Con la lista de valores fuera de rango.
    """
    if label.dim() != 2:
        raise ValueError(f"Se esperaba una etiqueta (H, W), recibido {tuple(label.shape)}")
    values = torch.unique(label)
    bad = [int(v) for v in values if (v < 0 or v >= num_classes) and v != IGNORE_INDEX]
    if bad:
        raise ValueError(f"Valores de etiqueta fuera de rango para K={num_classes}: {bad}")


def validate_probabilities(probs: torch.Tensor, dim: int = 0, atol: float = 1e-5) -> None:
    """
    Valida que *probs* sea no negativo y sume 1 a lo largo de *dim*.

    Raises:
        ValueError: Si algún píxel no está normalizado.
    """
    if probs.numel() == 0:
        return
    if probs.min() < -atol:
        raise ValueError("El mapa de probabilidades tiene valores negativos")
    sums = probs.sum(dim=dim)
    err = (sums - 1).abs().max().item()
    if err > atol:
        raise ValueError(
            f"El mapa de probabilidades no está normalizado (desviación máxima {err:.2e})"
        )


def validate_spatial_divisible(height: int, width: int, multiple: int) -> None:
    """Comprueba que ``height`` y ``width`` sean múltiplos de *multiple*."""
    if height % multiple or width % multiple:
        raise ValueError(
            f"El tamaño {height}x{width} debe ser múltiplo de {multiple}"
        )
