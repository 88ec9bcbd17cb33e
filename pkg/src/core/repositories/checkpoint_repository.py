"""
Persistencia de checkpoints de entrenamiento.

Un checkpoint es un diccionario serializado con ``torch.save``::

    {"format_version": 1, "iteration": t, "config": {...claves planas...},
     "student": state_dict, "teacher": state_dict, "reference": state_dict,
     "optimizer": state_dict, "scheduler": state_dict,
     "numpy_rng": "<json>", "torch_rng": ByteTensor}
"""

import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Any, Dict, Optional

import torch

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1

_REQUIRED_KEYS = ("format_version", "iteration", "config", "student", "teacher", "reference")


class CheckpointError(ValueError):
    """Checkpoint ilegible, incompleto o de una versión no soportada."""


@dataclass
class Checkpoint:
    iteration: int
    config: Dict[str, Any]
    student: Dict[str, torch.Tensor]
    teacher: Dict[str, torch.Tensor]
    reference: Dict[str, torch.Tensor]
    optimizer: Optional[dict] = None
    scheduler: Optional[dict] = None
    numpy_rng: Optional[str] = None
    torch_rng: Optional[torch.Tensor] = None
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "iteration": self.iteration,
            "config": self.config,
            "student": self.student,
            "teacher": self.teacher,
            "reference": self.reference,
            "optimizer": self.optimizer,
            "scheduler": self.scheduler,
            "numpy_rng": self.numpy_rng,
            "torch_rng": self.torch_rng,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Checkpoint":
        missing = [k for k in _REQUIRED_KEYS if k not in d]
        if missing:
            raise CheckpointError(f"Faltan claves en el checkpoint: {', '.join(missing)}")
        if d["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"Versión de checkpoint {d['format_version']} no soportada "
                f"(se esperaba {CHECKPOINT_FORMAT_VERSION})"
            )
        return cls(
            iteration=int(d["iteration"]),
            config=dict(d["config"]),
            student=d["student"],
            teacher=d["teacher"],
            reference=d["reference"],
            optimizer=d.get("optimizer"),
            scheduler=d.get("scheduler"),
            numpy_rng=d.get("numpy_rng"),
            torch_rng=d.get("torch_rng"),
        )


def save_checkpoint(path: str, checkpoint: Checkpoint) -> None:
    """Guarda de forma atómica (fichero temporal + ``os.replace``)."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix=".tmp", prefix="ckpt_")
    os.close(fd)
    try:
        torch.save(checkpoint.to_dict(), tmp_path)
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise
    logger.info("Checkpoint de la iteración %d guardado en %s", checkpoint.iteration, path)


def load_checkpoint(path: str) -> Checkpoint:
    """Carga un checkpoint.

    Raises:
        CheckpointError: Si el fichero no existe, no se puede leer o no es compatible.
    """
    if not os.path.isfile(path):
        raise CheckpointError(f"No existe el checkpoint '{path}'")
    try:
        data = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CheckpointError(f"No se pudo leer el checkpoint '{path}': {exc}") from exc
    if not isinstance(data, dict):
        raise CheckpointError(f"Formato de checkpoint desconocido en '{path}'")
    return Checkpoint.from_dict(data)
