"""
Módulo de modelos de datos.
"""

from src.models.class_stats import ClassStats
from src.models.config import (
    ConfigError,
    DataConfig,
    DecoderConfig,
    DgConfig,
    EncoderConfig,
    FdConfig,
    HrdaConfig,
    OptimizerConfig,
    RcsConfig,
    SelfTrainConfig,
    ShiftConfig,
    ToyDomainConfig,
    TrainConfig,
)
from src.models.crop import CropPair, CropSpec
from src.models.eval_report import EvalReport
from src.models.pseudo_label import PseudoLabel
from src.models.sample import IGNORE_INDEX, DatasetMeta, Domain, Sample

__all__ = [
    "ClassStats",
    "ConfigError",
    "CropPair",
    "CropSpec",
    "DataConfig",
    "DatasetMeta",
    "DecoderConfig",
    "DgConfig",
    "Domain",
    "EncoderConfig",
    "EvalReport",
    "FdConfig",
    "HrdaConfig",
    "IGNORE_INDEX",
    "OptimizerConfig",
    "PseudoLabel",
    "RcsConfig",
    "Sample",
    "SelfTrainConfig",
    "ShiftConfig",
    "ToyDomainConfig",
    "TrainConfig",
]
