"""
Funciones auxiliares y utilidades.
"""

import json
import os
import random
import tempfile
from typing import Any

import numpy as np
import torch


def atomic_write_json(path: str, data: Any) -> None:
    """Escribe *data* como JSON en *path* mediante fichero temporal + ``os.replace``."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, suffix='.tmp', prefix='seg_')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            json.dump(data, f, indent=2, ensure_ascii=False)
        os.replace(tmp_path, path)
    except BaseException:
        try:
            os.unlink(tmp_path)
        except OSError:
            pass
        raise


def read_json(path: str) -> Any:
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def append_jsonl(path: str, record: dict) -> None:
    """Añade un registro al final de un fichero JSON por líneas."""
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'a', encoding='utf-8') as f:
        f.write(json.dumps(record, ensure_ascii=False) + "\n")


def read_jsonl(path: str) -> list:
    if not os.path.exists(path):
        return []
    with open(path, 'r', encoding='utf-8') as f:
        return [json.loads(line) for line in f if line.strip()]


def seed_everything(seed: int, deterministic: bool = True) -> np.random.Generator:
    """Siembra torch y ``random`` y devuelve el generador numpy del entrenamiento.

    En modo determinista fuerza algoritmos deterministas y un único hilo de
    cómputo, de modo que dos ejecuciones con la misma semilla son bit-idénticas.
    """
    random.seed(seed)
    torch.manual_seed(seed)
    if deterministic:
        torch.use_deterministic_algorithms(True)
        torch.set_num_threads(1)
    else:
        torch.use_deterministic_algorithms(False)
    return np.random.default_rng(seed)


def rng_state_to_json(rng: np.random.Generator) -> str:
    """Serializa el estado del generador numpy como texto JSON."""
    return json.dumps(rng.bit_generator.state)


def rng_from_json(state: str) -> np.random.Generator:
    """Reconstruye un generador numpy a partir de :func:`rng_state_to_json`."""
    data = json.loads(state)
    bit_generator = getattr(np.random, data["bit_generator"])()
    bit_generator.state = data
    return np.random.Generator(bit_generator)
