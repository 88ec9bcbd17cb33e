"""
Redes de segmentación: encoders, cabezas de decodificación y profesor EMA.
"""

from src.core.network.ema import ModelBundle, build_model_bundle, ema_update
from src.core.network.segmentor import DAFormer, build_segmentor

__all__ = [
    "DAFormer",
    "ModelBundle",
    "build_model_bundle",
    "build_segmentor",
    "ema_update",
]
