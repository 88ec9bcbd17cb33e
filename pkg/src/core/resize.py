"""
Reescalado de tensores (el operador ζ de la fusión multi-resolución).

Convención fija: interpolación bilineal con ``align_corners=False`` y sin
antialias, la misma para imágenes y mapas de predicción. Con este convenio la
reducción por un factor entero ``1/s`` promedia bloques ``s×s`` cuando ``s=2``
y las regiones constantes se conservan exactamente en cualquier dirección.
El modo ``nearest`` existe para las comprobaciones exactas de los tests.
"""

from fractions import Fraction
from typing import Tuple, Union

import torch
import torch.nn.functional as F

Factor = Union[int, float, Fraction]

RESIZE_MODES = ("bilinear", "nearest")


def output_size(size: Tuple[int, int], factor: Factor) -> Tuple[int, int]:
    """Calcula el tamaño de salida ``size · factor``; lanza ValueError si no es entero."""
    frac = Fraction(factor).limit_denominator(10_000)
    if frac <= 0:
        raise ValueError(f"El factor de escala debe ser positivo (factor={factor})")
    out = []
    for dim in size:
        value = dim * frac
        if value.denominator != 1:
            raise ValueError(
                f"El tamaño {dim} por el factor {factor} no da un tamaño entero ({float(value)})"
            )
        out.append(int(value))
    return out[0], out[1]


def resize_bilinear(t: torch.Tensor, factor: Factor, mode: str = "bilinear") -> torch.Tensor:
    """Reescala las dos últimas dimensiones de *t* por *factor*.

    Args:
        t: Tensor ``(H, W)``, ``(C, H, W)`` o ``(N, C, H, W)``.
        factor: Factor racional (p.ej. ``2`` o ``Fraction(1, 2)``).
        mode: ``"bilinear"`` (por defecto) o ``"nearest"``.

    Returns:
        Tensor del mismo rango con tamaño espacial ``(H·factor, W·factor)``.
    """
    if mode not in RESIZE_MODES:
        raise ValueError(f"Modo de reescalado desconocido: {mode}")
    size = output_size((t.shape[-2], t.shape[-1]), factor)
    if size == (t.shape[-2], t.shape[-1]):
        return t.clone()
    return resize_to(t, size, mode)


def resize_to(t: torch.Tensor, size: Tuple[int, int], mode: str = "bilinear") -> torch.Tensor:
    """Reescala a un tamaño explícito con la misma convención que :func:`resize_bilinear`."""
    ndim = t.dim()
    if ndim not in (2, 3, 4):
        raise ValueError(f"Se esperaba un tensor 2D, 3D o 4D (recibido {ndim}D)")
    x = t
    while x.dim() < 4:
        x = x.unsqueeze(0)
    if not x.is_floating_point():
        x = x.float()
    if mode == "nearest":
        out = F.interpolate(x, size=size, mode="nearest")
    else:
        out = F.interpolate(x, size=size, mode="bilinear", align_corners=False)
    while out.dim() > ndim:
        out = out.squeeze(0)
    return out
