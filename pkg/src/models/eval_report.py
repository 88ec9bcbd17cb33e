"""
Modelo de datos para los informes de evaluación (IoU por clase).
"""

from dataclasses import dataclass, field
from typing import List, Optional

import pandas as pd


@dataclass
class EvalReport:
    """Resultado de una evaluación.

    ``iou`` contiene ``None`` para las clases sin ningún píxel en el ground
    truth ni en la predicción (0/0), que quedan fuera de la media.
    """

    iou: List[Optional[float]]
    miou: float
    tp: List[int]
    fp: List[int]
    fn: List[int]
    step: int = 0
    class_names: List[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        """Registro del log de métricas: ``{step, mIoU, per-class IoU}``."""
        return {
            "step": self.step,
            "mIoU": self.miou,
            "iou": list(self.iou),
            "tp": list(self.tp),
            "fp": list(self.fp),
            "fn": list(self.fn),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            iou=list(d["iou"]),
            miou=float(d["mIoU"]),
            tp=list(d.get("tp", [])),
            fp=list(d.get("fp", [])),
            fn=list(d.get("fn", [])),
            step=int(d.get("step", 0)),
        )

    def to_dataframe(self) -> pd.DataFrame:
        """Tabla legible con IoU y recuentos por clase."""
        names = self.class_names or [str(k) for k in range(len(self.iou))]
        return pd.DataFrame({
            "clase": names,
            "IoU": [None if v is None else round(100.0 * v, 2) for v in self.iou],
            "TP": self.tp,
            "FP": self.fp,
            "FN": self.fn,
        })
