"""
Métricas de segmentación: matriz de confusión e IoU por clase.
"""

from typing import List, Optional

import numpy as np
import torch

from src.models.eval_report import EvalReport
from src.models.sample import IGNORE_INDEX


class ConfusionAccumulator:
    """Acumula una matriz de confusión ``K × K`` (filas = ground truth)."""

    def __init__(self, num_classes: int):
        self.num_classes = num_classes
        self.matrix = np.zeros((num_classes, num_classes), dtype=np.int64)

    def update(self, prediction: torch.Tensor, label: torch.Tensor) -> None:
        """Añade un par predicción/etiqueta; los píxeles IGNORE se descartan.

        Raises:
            ValueError: Si las formas difieren o hay clases fuera de ``0..K-1``.
        """
        if prediction.shape != label.shape:
            raise ValueError(
                f"Predicción {tuple(prediction.shape)} y etiqueta {tuple(label.shape)} difieren"
            )
        pred = prediction.detach().cpu().numpy().ravel().astype(np.int64)
        gt = label.detach().cpu().numpy().ravel().astype(np.int64)
        keep = gt != IGNORE_INDEX
        pred, gt = pred[keep], gt[keep]
        k = self.num_classes
        if gt.size and (gt.max() >= k or pred.max() >= k or pred.min() < 0):
            raise ValueError(f"Clases fuera de rango para K={k}")
        self.matrix += np.bincount(gt * k + pred, minlength=k * k).reshape(k, k)

    def report(self, step: int = 0, class_names: Optional[List[str]] = None) -> EvalReport:
        """IoU por clase (None si 0/0) y mIoU sobre las clases presentes en el ground truth."""
        tp = np.diag(self.matrix)
        fp = self.matrix.sum(axis=0) - tp
        fn = self.matrix.sum(axis=1) - tp
        iou: List[Optional[float]] = []
        for k in range(self.num_classes):
            denom = tp[k] + fp[k] + fn[k]
            iou.append(None if denom == 0 else float(tp[k] / denom))
        in_gt = [iou[k] for k in range(self.num_classes) if tp[k] + fn[k] > 0]
        miou = float(np.mean(in_gt)) if in_gt else 0.0
        return EvalReport(
            iou=iou,
            miou=miou,
            tp=tp.astype(int).tolist(),
            fp=fp.astype(int).tolist(),
            fn=fn.astype(int).tolist(),
            step=step,
            class_names=list(class_names or []),
        )
