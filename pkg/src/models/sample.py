"""
Modelo de datos para muestras de segmentación y metadatos de dataset.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

import torch

# Valor de etiqueta ignorada (píxeles sin anotación o fuera de la máscara válida)
IGNORE_INDEX = 255


class Domain(str, Enum):
    """Dominio de procedencia de una muestra."""

    SOURCE = "source"
    TARGET = "target"


@dataclass(frozen=True)
class Sample:
    """Unidad de datos de entrenamiento/evaluación.

    ``image`` es un tensor float32 ``(3, H, W)`` con valores en [0, 1] y
    ``label`` un mapa int64 ``(H, W)`` con valores en ``0..K-1`` o ``IGNORE_INDEX``.
    Las muestras son inmutables: pueden pasarse entre hilos sin copia.
    """

    image: torch.Tensor
    label: torch.Tensor
    domain: Domain
    id: str

    def __post_init__(self) -> None:
        if self.image.dim() != 3 or self.image.shape[0] != 3:
            raise ValueError(
                f"Se esperaba una imagen (3, H, W), recibido {tuple(self.image.shape)}")
        if self.label.dim() != 2 or tuple(self.image.shape[1:]) != tuple(self.label.shape):
            raise ValueError(
                f"Tamaños distintos de imagen {tuple(self.image.shape[1:])} y etiqueta "
                f"{tuple(self.label.shape)} en '{self.id}'"
            )

    @property
    def size(self) -> Tuple[int, int]:
        return int(self.label.shape[0]), int(self.label.shape[1])


@dataclass
class DatasetMeta:
    """Metadatos de un dataset: nombres de clase, clases *thing* y paleta."""

    class_names: List[str]
    thing_flags: List[bool]
    palette: List[Tuple[int, int, int]]
    num_samples: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def thing_classes(self) -> List[int]:
        return [k for k, flag in enumerate(self.thing_flags) if flag]

    def validate(self, require_thing: bool = False) -> None:
        """Comprueba la coherencia de los metadatos.

        Args:
            require_thing: Exigir al menos una clase *thing* (necesario con FD).

        Raises:
            ValueError: Si las listas por clase no tienen ``K`` elementos, algún
                color no es RGB de 8 bits o falta una clase *thing* requerida.
        """
        k = self.num_classes
        if k < 1:
            raise ValueError("El dataset debe declarar al menos una clase")
        if len(self.thing_flags) != k:
            raise ValueError(f"thing_flags tiene {len(self.thing_flags)} valores; se esperaban {k}")
        if len(self.palette) != k:
            raise ValueError(f"La paleta tiene {len(self.palette)} colores; se esperaban {k}")
        bad = [rgb for rgb in self.palette if len(rgb) != 3 or any(not 0 <= c <= 255 for c in rgb)]
        if bad:
            raise ValueError(f"Colores de paleta inválidos: {bad}")
        if require_thing and not any(self.thing_flags):
            raise ValueError("La distancia de características necesita al menos una clase thing")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetMeta":
        """Crea una instancia desde un diccionario (formato de ``meta.json``)."""
        return cls(
            class_names=list(d.get("class_names", [])),
            thing_flags=[bool(v) for v in d.get("thing_flags", [])],
            palette=[tuple(int(c) for c in rgb) for rgb in d.get("palette", [])],
            num_samples=int(d.get("num_samples", 0)),
            extra=dict(d.get("extra", {})),
        )

    def to_dict(self) -> dict:
        """Convierte la instancia a diccionario serializable en JSON."""
        return {
            "class_names": list(self.class_names),
            "thing_flags": list(self.thing_flags),
            "palette": [list(rgb) for rgb in self.palette],
            "num_samples": self.num_samples,
            "extra": dict(self.extra),
        }
