"""
Perturbaciones fotométricas sobre imágenes ``(3, H, W)`` en [0, 1].

Las magnitudes nulas omiten la operación, de modo que una configuración a cero
es exactamente la identidad. Toda la aleatoriedad sale del generador numpy
recibido.
"""

import math
from typing import Optional, Sequence

import numpy as np
import torch
import torchvision.transforms.functional as TF

PHOTOMETRIC_OPS = ("brightness", "contrast", "saturation", "hue")


def color_jitter(image: torch.Tensor, brightness: float, contrast: float, saturation: float,
                 hue: float, rng: np.random.Generator,
                 order: Optional[Sequence[str]] = None) -> torch.Tensor:
    """Aplica brillo, contraste, saturación y tono con factores aleatorios.

    Brillo, contraste y saturación usan un factor uniforme en ``[1 − m, 1 + m]``;
    el tono un desplazamiento uniforme en ``[−m, m]`` (fracción de vuelta).
    """
    magnitudes = {"brightness": brightness, "contrast": contrast,
                  "saturation": saturation, "hue": hue}
    out = image
    for name in (order or PHOTOMETRIC_OPS):
        m = magnitudes[name]
        if m <= 0:
            continue
        if name == "hue":
            out = TF.adjust_hue(out, float(rng.uniform(-m, m)))
            continue
        factor = float(rng.uniform(max(0.0, 1.0 - m), 1.0 + m))
        if name == "brightness":
            out = TF.adjust_brightness(out, factor)
        elif name == "contrast":
            out = TF.adjust_contrast(out, factor)
        else:
            out = TF.adjust_saturation(out, factor)
    return out.clamp(0.0, 1.0)


def gaussian_blur(image: torch.Tensor, sigma: float) -> torch.Tensor:
    """Desenfoque gaussiano con kernel impar de aproximadamente el 10% de la altura."""
    k = max(3, int(math.ceil(0.1 * image.shape[-2])))
    if k % 2 == 0:
        k += 1
    return TF.gaussian_blur(image, kernel_size=[k, k], sigma=[sigma, sigma]).clamp(0.0, 1.0)
