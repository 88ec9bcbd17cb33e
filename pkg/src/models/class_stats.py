"""
Modelo de datos para las estadísticas de frecuencia de clases del dataset fuente.
"""

from dataclasses import dataclass
from typing import Dict, List

import numpy as np


@dataclass
class ClassStats:
    """Frecuencias de píxel por clase e índice clase → muestras.

    Attributes:
        omega: Frecuencia ``ω_k`` de cada clase (float64, longitud K).
        class_index: Para cada clase, ids de las muestras que la contienen.
        total_pixels: Número total de píxeles del dataset (incluye IGNORE).
        sample_ids: Ids de todas las muestras, en el orden de ``pixel_counts``.
        pixel_counts: Matriz ``(N, K)`` con los píxeles de cada clase por muestra.
    """

    omega: np.ndarray
    class_index: Dict[int, List[str]]
    total_pixels: int
    sample_ids: List[str]
    pixel_counts: np.ndarray

    @property
    def num_classes(self) -> int:
        return int(self.omega.shape[0])

    @property
    def present_classes(self) -> List[int]:
        """Clases con al menos un píxel en el dataset."""
        return [k for k in range(self.num_classes) if self.class_index.get(k)]

    @classmethod
    def from_dict(cls, d: dict) -> "ClassStats":
        """Crea una instancia desde el diccionario del fichero de cache."""
        num_classes = len(d["omega"])
        return cls(
            omega=np.asarray(d["omega"], dtype=np.float64),
            class_index={
                k: list(d.get("class_index", {}).get(str(k), []))
                for k in range(num_classes)
            },
            total_pixels=int(d["total_pixels"]),
            sample_ids=list(d.get("sample_ids", [])),
            pixel_counts=np.asarray(
                d.get("pixel_counts", []), dtype=np.int64
            ).reshape(-1, num_classes),
        )

    def to_dict(self) -> dict:
        """Convierte la instancia a diccionario serializable en JSON."""
        return {
            "omega": [float(w) for w in self.omega],
            "class_index": {str(k): list(ids) for k, ids in self.class_index.items()},
            "total_pixels": int(self.total_pixels),
            "sample_ids": list(self.sample_ids),
            "pixel_counts": self.pixel_counts.astype(int).tolist(),
        }
