"""
Persistencia de la cache de estadísticas de clase (ω e índice clase → muestras).

Fichero JSON versionado::

    {"version": 1, "dataset": "<ruta>", "num_classes": K, "stats": {...}}
"""

import logging
import os
from typing import Optional

from src.models.class_stats import ClassStats
from src.utils.helpers import atomic_write_json, read_json

logger = logging.getLogger(__name__)

STATS_CACHE_VERSION = 1


def save_stats(path: str, stats: ClassStats, dataset: str = "") -> None:
    """Escribe la cache de forma atómica."""
    atomic_write_json(path, {
        "version": STATS_CACHE_VERSION,
        "dataset": dataset,
        "num_classes": stats.num_classes,
        "stats": stats.to_dict(),
    })
    logger.info("Cache de estadísticas guardada en %s", path)


def load_stats(path: str, num_classes: Optional[int] = None) -> Optional[ClassStats]:
    """Lee la cache; devuelve None si no existe, es de otra versión o no coincide K."""
    if not os.path.isfile(path):
        return None
    try:
        data = read_json(path)
    except (OSError, ValueError):
        logger.warning("Cache de estadísticas ilegible: %s", path)
        return None
    if data.get("version") != STATS_CACHE_VERSION:
        logger.info("Cache de estadísticas con versión %s ignorada", data.get("version"))
        return None
    if num_classes is not None and data.get("num_classes") != num_classes:
        logger.info("Cache de estadísticas con K=%s distinto de %d", data.get("num_classes"),
                    num_classes)
        return None
    return ClassStats.from_dict(data["stats"])
