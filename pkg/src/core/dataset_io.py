"""
Lectura y escritura de datasets en disco.

Estructura de un dataset::

    root/
      meta.json        <- nombres de clase, clases thing, paleta, nº de muestras
      images/<id>.png  <- imagen RGB de 8 bits
      labels/<id>.png  <- mapa de índices de 8 bits (un canal), 255 = IGNORE

Las imágenes y etiquetas se emparejan por nombre de fichero.
"""

import logging
import os
from typing import Iterable, List, Tuple

import numpy as np
import torch
from PIL import Image

from src.core.validators import validate_image, validate_label_values
from src.models.sample import DatasetMeta, Domain, Sample
from src.utils.helpers import atomic_write_json, read_json

logger = logging.getLogger(__name__)

META_FILENAME = "meta.json"
IMAGES_DIR = "images"
LABELS_DIR = "labels"


class DatasetError(ValueError):
    """Dataset en disco incompleto o con valores inválidos."""


def load_dataset(root_path: str, domain: Domain = Domain.SOURCE) -> Tuple[DatasetMeta, List[Sample]]:
    """Carga un dataset desde *root_path*.

    Args:
        root_path: Directorio con ``images/``, ``labels/`` y ``meta.json``.
        domain: Dominio con el que se etiquetan las muestras cargadas.

    Returns:
        Tupla ``(meta, muestras)`` con las muestras ordenadas por nombre.

    Raises:
        DatasetError: Si falta el fichero de metadatos, falta la etiqueta de
            alguna imagen o una etiqueta tiene valores ``>= K`` distintos de IGNORE.
    """
    root_path = os.path.normpath(root_path) if root_path else ""
    meta_path = os.path.join(root_path, META_FILENAME)
    if not root_path or not os.path.isfile(meta_path):
        raise DatasetError(f"No se encontró {META_FILENAME} en '{root_path}'")
    meta = DatasetMeta.from_dict(read_json(meta_path))
    try:
        meta.validate()
    except ValueError as exc:
        raise DatasetError(f"{META_FILENAME} inválido en '{root_path}': {exc}") from exc

    images_dir = os.path.join(root_path, IMAGES_DIR)
    labels_dir = os.path.join(root_path, LABELS_DIR)
    if not os.path.isdir(images_dir):
        raise DatasetError(f"No existe el directorio de imágenes '{images_dir}'")

    samples: List[Sample] = []
    for filename in sorted(os.listdir(images_dir)):
        if not filename.lower().endswith(".png"):
            continue
        label_path = os.path.join(labels_dir, filename)
        if not os.path.isfile(label_path):
            raise DatasetError(f"Falta la etiqueta de la imagen '{filename}'")
        image = read_image(os.path.join(images_dir, filename))
        label = read_label(label_path)
        try:
            validate_image(image)
            validate_label_values(label, meta.num_classes)
        except ValueError as exc:
            raise DatasetError(f"Muestra inválida '{filename}': {exc}") from exc
        if tuple(image.shape[1:]) != tuple(label.shape):
            raise DatasetError(
                f"Tamaños distintos de imagen {tuple(image.shape[1:])} y etiqueta "
                f"{tuple(label.shape)} en '{filename}'"
            )
        samples.append(Sample(image=image, label=label, domain=domain,
                              id=os.path.splitext(filename)[0]))

    if not samples:
        raise DatasetError(f"El dataset '{root_path}' no contiene muestras")
    logger.info("Cargadas %d muestras de %s", len(samples), root_path)
    return meta, samples


def save_dataset(root_path: str, meta: DatasetMeta, samples: Iterable[Sample]) -> int:
    """Escribe las muestras y ``meta.json`` en *root_path*; devuelve cuántas se escribieron."""
    os.makedirs(os.path.join(root_path, IMAGES_DIR), exist_ok=True)
    os.makedirs(os.path.join(root_path, LABELS_DIR), exist_ok=True)
    count = 0
    for sample in samples:
        write_image(os.path.join(root_path, IMAGES_DIR, f"{sample.id}.png"), sample.image)
        write_label(os.path.join(root_path, LABELS_DIR, f"{sample.id}.png"), sample.label)
        count += 1
    meta.num_samples = count
    atomic_write_json(os.path.join(root_path, META_FILENAME), meta.to_dict())
    return count


def read_image(path: str) -> torch.Tensor:
    """Lee un PNG RGB como tensor float32 ``(3, H, W)`` en [0, 1]."""
    with Image.open(path) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return torch.from_numpy(arr.copy()).permute(2, 0, 1).float().div(255.0)


def read_label(path: str) -> torch.Tensor:
    """Lee un PNG de índices (modo ``L`` o ``P``) como tensor int64 ``(H, W)``."""
    with Image.open(path) as img:
        if img.mode not in ("L", "P"):
            raise DatasetError(f"La etiqueta '{path}' no es un mapa de índices de un canal")
        arr = np.asarray(img, dtype=np.uint8)
    return torch.from_numpy(arr.astype(np.int64))


def write_image(path: str, image: torch.Tensor) -> None:
    arr = image.detach().clamp(0, 1).mul(255.0).round().to(torch.uint8)
    Image.fromarray(arr.permute(1, 2, 0).cpu().numpy(), mode="RGB").save(path)


def write_label(path: str, label: torch.Tensor) -> None:
    Image.fromarray(label.detach().cpu().numpy().astype(np.uint8), mode="L").save(path)


def write_index_png(path: str, label: torch.Tensor, palette: List[Tuple[int, int, int]]) -> None:
    """Guarda un mapa de índices como PNG con paleta (modo ``P``)."""
    img = Image.fromarray(label.detach().cpu().numpy().astype(np.uint8), mode="P")
    flat = [c for rgb in palette for c in rgb]
    img.putpalette(flat + [0] * (768 - len(flat)))
    img.save(path)
