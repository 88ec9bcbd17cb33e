"""Capa de servicios que orquesta entrenamiento, evaluación e inferencia para la CLI."""

from src.core.services.evaluation_service import EvaluationService
from src.core.services.training_service import TrainingError, TrainingService

__all__ = ["EvaluationService", "TrainingError", "TrainingService"]
