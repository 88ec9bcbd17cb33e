"""
Gestión de configuración de segadapt.

Resuelve el directorio de trabajo y carga/guarda las configuraciones de
entrenamiento. Prioridad del directorio de trabajo: argumento explícito >
variable de entorno > ``~/.segadapt``.

Los ficheros de configuración son JSON con claves planas separadas por puntos
(``"rcs.temperature"``); las claves ausentes toman los valores de escritorio de
``src/data/default_config.json``.
"""

import json
import logging
import os
from typing import Any, Dict, Optional

from src.models.config import ConfigError, TrainConfig, flatten, unflatten
from src.utils.helpers import atomic_write_json

logger = logging.getLogger(__name__)

# Variable de entorno para el directorio de trabajo
ENV_VAR_NAME = "SEGADAPT_WORK_DIR"

DEFAULT_CONFIG_PATH = os.path.join(
    os.path.dirname(os.path.dirname(__file__)), "data", "default_config.json"
)


def load_default_flat() -> Dict[str, Any]:
    """Devuelve la configuración de escritorio como diccionario plano."""
    with open(DEFAULT_CONFIG_PATH, "r", encoding="utf-8") as f:
        return json.load(f)


def build_train_config(flat_overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """Construye y valida un TrainConfig aplicando *flat_overrides* sobre los valores de escritorio.

    Raises:
        ConfigError: Si alguna clave es desconocida o la configuración no es válida.
    """
    flat = load_default_flat()
    for key, value in flatten(flat_overrides or {}).items():
        if key not in flat and not _is_known_key(key):
            raise ConfigError(f"Clave de configuración desconocida: '{key}'")
        flat[key] = value
    cfg = TrainConfig.from_dict(unflatten(flat))
    cfg.validate()
    return cfg


def load_train_config(path: Optional[str] = None,
                      overrides: Optional[Dict[str, Any]] = None) -> TrainConfig:
    """Carga un fichero de configuración (claves planas o anidadas) y aplica *overrides*."""
    merged: Dict[str, Any] = {}
    if path:
        if not os.path.isfile(path):
            raise ConfigError(f"No existe el fichero de configuración '{path}'")
        try:
            with open(path, "r", encoding="utf-8") as f:
                merged.update(flatten(json.load(f)))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"JSON inválido en '{path}': {exc}") from exc
    merged.update(flatten(overrides or {}))
    return build_train_config(merged)


def save_train_config(path: str, cfg: TrainConfig) -> None:
    """Guarda *cfg* como JSON de claves planas (escritura atómica)."""
    atomic_write_json(path, flatten(cfg.to_dict()))


def _is_known_key(key: str) -> bool:
    return key in flatten(TrainConfig().to_dict())


class Settings:
    """Rutas del directorio de trabajo de la aplicación."""

    LOGS_DIRNAME = ".segadapt_logs"
    RUNS_DIRNAME = "runs"
    CACHE_DIRNAME = "cache"

    def __init__(self, work_dir: Optional[str] = None):
        if not work_dir:
            env_dir = os.environ.get(ENV_VAR_NAME, "").strip()
            work_dir = env_dir or os.path.join(os.path.expanduser("~"), ".segadapt")
        self._work_dir = os.path.abspath(work_dir)

    @property
    def work_dir(self) -> str:
        return self._work_dir

    @property
    def logs_dir(self) -> str:
        return os.path.join(self._work_dir, self.LOGS_DIRNAME)

    @property
    def cache_dir(self) -> str:
        return os.path.join(self._work_dir, self.CACHE_DIRNAME)

    def run_dir(self, name: str) -> str:
        """Directorio de una ejecución de entrenamiento dentro del directorio de trabajo."""
        return os.path.join(self._work_dir, self.RUNS_DIRNAME, name)

    def ensure_dirs(self) -> None:
        for path in (self._work_dir, self.logs_dir, self.cache_dir):
            os.makedirs(path, exist_ok=True)
