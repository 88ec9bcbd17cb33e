"""
Modelo de datos para la geometría de recortes multi-resolución (contexto/detalle).
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch

# Caja (y1, y2, x1, x2) en píxeles, extremo superior exclusivo
Box = Tuple[int, int, int, int]


@dataclass(frozen=True)
class CropSpec:
    """Contrato geométrico de los recortes.

    ``h_c × w_c`` es el tamaño del recorte de contexto ya reducido por ``s``;
    ``h_d × w_d`` el del recorte de detalle a resolución completa. ``o`` es el
    stride de salida de la red y ``u = s · o`` la unidad de divisibilidad de
    todas las coordenadas.
    """

    h_c: int = 32
    w_c: int = 32
    h_d: int = 32
    w_d: int = 32
    s: int = 2
    o: int = 4

    @property
    def u(self) -> int:
        return self.s * self.o

    @property
    def context_hr_size(self) -> Tuple[int, int]:
        """Tamaño del recorte de contexto a alta resolución (``s·h_c × s·w_c``)."""
        return self.s * self.h_c, self.s * self.w_c

    def validate(self) -> None:
        """Comprueba los invariantes del contrato; lanza ValueError si no se cumplen."""
        if not isinstance(self.s, int) or self.s < 1:
            raise ValueError(f"El factor de escala s debe ser un entero >= 1 (s={self.s})")
        if self.o < 1:
            raise ValueError(f"El stride de salida o debe ser >= 1 (o={self.o})")
        for name in ("h_c", "w_c", "h_d", "w_d"):
            value = getattr(self, name)
            if value <= 0 or value % self.o:
                raise ValueError(
                    f"{name}={value} debe ser positivo y divisible por o={self.o}"
                )
        hr_h, hr_w = self.context_hr_size
        if self.h_d > hr_h or self.w_d > hr_w:
            raise ValueError(
                f"El recorte de detalle ({self.h_d}x{self.w_d}) no cabe en el "
                f"contexto HR ({hr_h}x{hr_w})"
            )
        if (hr_h - self.h_d) % self.u or (hr_w - self.w_d) % self.u:
            raise ValueError(
                f"s·h_c - h_d y s·w_c - w_d deben ser múltiplos de u={self.u}"
            )
        # La caja de detalle debe caer en celdas enteras de la rejilla de atención
        if self.h_d % self.u or self.w_d % self.u:
            raise ValueError(f"h_d y w_d deben ser múltiplos de u={self.u}")

    @classmethod
    def from_dict(cls, d: dict) -> "CropSpec":
        """Crea una instancia desde un diccionario (claves faltantes usan valores por defecto)."""
        defaults = cls()
        return cls(**{k: int(d.get(k, getattr(defaults, k))) for k in
                      ("h_c", "w_c", "h_d", "w_d", "s", "o")})

    def to_dict(self) -> dict:
        """Convierte la instancia a diccionario."""
        return {"h_c": self.h_c, "w_c": self.w_c, "h_d": self.h_d,
                "w_d": self.w_d, "s": self.s, "o": self.o}


@dataclass
class CropPair:
    """Par de recortes muestreado de una imagen HR.

    Attributes:
        box_context: Caja del contexto en coordenadas HR de la imagen completa.
        context_hr: Recorte de contexto a alta resolución ``(3, s·h_c, s·w_c)``.
        context: Recorte de contexto reducido ``ζ(context_hr, 1/s)``.
        box_detail: Caja del detalle en coordenadas HR del recorte de contexto.
        detail: Recorte de detalle ``(3, h_d, w_d)``.
    """

    box_context: Box
    context_hr: torch.Tensor
    context: torch.Tensor
    box_detail: Box
    detail: torch.Tensor
    label_context_hr: Optional[torch.Tensor] = None
    label_detail: Optional[torch.Tensor] = None
