"""
Servicio de evaluación e inferencia a partir de checkpoints.
"""

import logging
from typing import Iterable, List, Optional, Tuple

import torch

from src.core.dataset_io import load_dataset, read_image, write_index_png
from src.core.hrda import predict_context, slide_inference
from src.core.metrics import ConfusionAccumulator
from src.core.network.segmentor import DAFormer, build_segmentor
from src.core.repositories.checkpoint_repository import Checkpoint, load_checkpoint
from src.core.resize import resize_bilinear
from src.core.toy_domain import toy_dataset_meta
from src.models.config import HrdaConfig, TrainConfig, unflatten
from src.models.eval_report import EvalReport
from src.models.sample import DatasetMeta, Domain, Sample

logger = logging.getLogger(__name__)


def predict_image(model: DAFormer, image: torch.Tensor, hrda: HrdaConfig,
                  use_slide: bool = True) -> torch.Tensor:
    """Probabilidades ``(K, H, W)`` de una imagen completa.

    Con ``use_slide`` se usa la ventana deslizante; si no, la imagen completa
    se trata como un único contexto.
    """
    model.eval()
    if use_slide:
        return slide_inference(model, image, hrda.crop, hrda)
    fused = predict_context(model, image, hrda.crop, hrda)
    return resize_bilinear(fused, hrda.crop.o, hrda.interpolation)


def evaluate_model(model: DAFormer, samples: Iterable[Sample], hrda: HrdaConfig,
                   use_slide: bool = True, step: int = 0,
                   class_names: Optional[List[str]] = None) -> EvalReport:
    """Acumula la matriz de confusión sobre *samples* y devuelve el informe de IoU."""
    acc = ConfusionAccumulator(model.num_classes)
    was_training = model.training
    for sample in samples:
        probs = predict_image(model, sample.image, hrda, use_slide)
        acc.update(probs.argmax(dim=0), sample.label)
    model.train(was_training)
    return acc.report(step=step, class_names=class_names)


def model_from_checkpoint(checkpoint: Checkpoint) -> Tuple[DAFormer, TrainConfig, int]:
    """Reconstruye el alumno de un checkpoint; devuelve ``(modelo, config, K)``."""
    cfg = TrainConfig.from_dict(unflatten(checkpoint.config))
    num_classes = int(checkpoint.student["decode_head.classifier.weight"].shape[0])
    model = build_segmentor(cfg.encoder, cfg.decoder, num_classes, cfg.seed)
    model.load_state_dict(checkpoint.student)
    model.eval()
    return model, cfg, num_classes


def _default_palette(cfg: TrainConfig, num_classes: int) -> List[Tuple[int, int, int]]:
    toy_meta = toy_dataset_meta(cfg.toy)
    if toy_meta.num_classes == num_classes:
        return toy_meta.palette
    return [(int(255 * k / max(num_classes - 1, 1)),) * 3 for k in range(num_classes)]


class EvaluationService:
    """Evalúa checkpoints sobre datasets en disco y genera predicciones."""

    def evaluate(self, checkpoint_path: str, dataset_dir: str,
                 use_slide: Optional[bool] = None) -> Tuple[EvalReport, DatasetMeta]:
        """Evalúa el checkpoint sobre el dataset etiquetado de *dataset_dir*.

        Sin indicación explícita, la ventana deslizante se usa si el modelo se
        entrenó con HRDA.

        Raises:
            ValueError: Si el número de clases del checkpoint no coincide con el dataset.
        """
        checkpoint = load_checkpoint(checkpoint_path)
        model, cfg, num_classes = model_from_checkpoint(checkpoint)
        meta, samples = load_dataset(dataset_dir, Domain.TARGET)
        if meta.num_classes != num_classes:
            raise ValueError(
                f"El checkpoint tiene {num_classes} clases y el dataset {meta.num_classes}"
            )
        slide = cfg.hrda.enabled if use_slide is None else use_slide
        report = evaluate_model(model, samples, cfg.hrda, slide, checkpoint.iteration,
                                meta.class_names)
        logger.info("Evaluación de %s en %s: mIoU=%.4f", checkpoint_path, dataset_dir,
                    report.miou)
        return report, meta

    def infer(self, checkpoint_path: str, input_path: str, output_path: str,
              palette: Optional[List[Tuple[int, int, int]]] = None) -> torch.Tensor:
        """Predice una imagen y guarda el mapa de índices como PNG con paleta."""
        checkpoint = load_checkpoint(checkpoint_path)
        model, cfg, num_classes = model_from_checkpoint(checkpoint)
        image = read_image(input_path)
        probs = predict_image(model, image, cfg.hrda, use_slide=cfg.hrda.enabled)
        prediction = probs.argmax(dim=0)
        if palette is None:
            palette = _default_palette(cfg, num_classes)
        write_index_png(output_path, prediction, palette)
        logger.info("Predicción de %s guardada en %s", input_path, output_path)
        return prediction
