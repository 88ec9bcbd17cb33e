"""
Fixtures compartidas para toda la suite de tests de segadapt.
"""

import shutil
import tempfile

import numpy as np
import pytest
import torch

from src.core.network.ema import build_model_bundle
from src.core.settings import build_train_config
from src.core.toy_domain import generate_toy_dataset
from src.models.config import EncoderConfig, DecoderConfig

# Configuración mínima para entrenar unas pocas iteraciones en CPU
TINY_OVERRIDES = {
    "total_iters": 4,
    "eval_interval": 2,
    "checkpoint_interval": 2,
    "log_interval": 1,
    "toy.height": 64,
    "toy.width": 64,
    "toy.num_samples": 6,
    "toy.val_samples": 2,
    "optimizer.t_warm": 1,
}


@pytest.fixture
def temp_dir():
    """Directorio temporal que se limpia al acabar el test."""
    path = tempfile.mkdtemp()
    yield path
    shutil.rmtree(path, ignore_errors=True)


@pytest.fixture
def rng():
    """Generador numpy con semilla fija."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    """TrainConfig de escritorio reducido a lienzos de 64×64 y 4 iteraciones."""
    return build_train_config(dict(TINY_OVERRIDES))


@pytest.fixture
def desk_encoder():
    return EncoderConfig(channels=[8, 16, 32, 64], num_heads=[1, 1, 2, 2])


@pytest.fixture
def desk_decoder():
    return DecoderConfig(embed_channels=32, attention_channels=32)


@pytest.fixture
def tiny_bundle(tiny_cfg):
    """Alumno, profesor y referencia con la arquitectura de escritorio (K=7)."""
    return build_model_bundle(tiny_cfg.encoder, tiny_cfg.decoder, tiny_cfg.toy.num_classes, seed=0)


@pytest.fixture
def toy_source(tiny_cfg):
    """Seis escenas fuente de 64×64."""
    return generate_toy_dataset(tiny_cfg.toy)


@pytest.fixture(autouse=True)
def _reset_torch_seed():
    torch.manual_seed(0)
    yield
