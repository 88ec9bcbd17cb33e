"""
Persistencia en disco de checkpoints y de la cache de estadísticas de clase.
"""

from src.core.repositories.checkpoint_repository import (
    CHECKPOINT_FORMAT_VERSION,
    Checkpoint,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from src.core.repositories.stats_cache_repository import load_stats, save_stats

__all__ = [
    "CHECKPOINT_FORMAT_VERSION",
    "Checkpoint",
    "CheckpointError",
    "load_checkpoint",
    "save_checkpoint",
    "load_stats",
    "save_stats",
]
