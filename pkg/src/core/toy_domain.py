"""
Generación procedural de escenas sintéticas con cambio de dominio controlable.

Cada escena tiene bandas horizontales de clases *stuff* (cielo, edificio,
vegetación, carretera...) y formas de clases *thing* colocadas al azar
(rectángulos, elipses y triángulos). El dominio objetivo aplica a la imagen
una rotación de tono, ruido gaussiano y una textura de alta frecuencia; las
etiquetas no cambian.

La generación es una función pura de ``(config, index)``: la escena usa un
generador sembrado con ``[seed, index]`` y el cambio de dominio otro sembrado
con ``[seed, index, 1]``, así que fuente y objetivo comparten etiquetas.
"""

import colorsys
import dataclasses
import json
import logging
import os
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
import torch
import torchvision.transforms.functional as TF

from src.models.config import ShiftConfig, ToyDomainConfig
from src.models.sample import DatasetMeta, Domain, Sample

logger = logging.getLogger(__name__)

_CLASSES_PATH = os.path.join(
    os.path.dirname(os.path.dirname(__file__)), "data", "toy_classes.json"
)

# Ruido por píxel de la apariencia base (igual en ambos dominios)
_BASE_NOISE_STD = 0.02

_SHAPES = ("rectangle", "ellipse", "triangle")

# Desplazamiento de semilla de la partición de validación
_VAL_SEED_OFFSET = 10_007


@lru_cache(maxsize=1)
def _catalog() -> List[dict]:
    with open(_CLASSES_PATH, "r", encoding="utf-8") as f:
        return json.load(f)["clases"]


def toy_dataset_meta(cfg: ToyDomainConfig) -> DatasetMeta:
    """Metadatos (nombres, clases thing y paleta) para la configuración dada.

    Con el número de clases del catálogo se usan sus nombres y colores; para
    otros valores de K se generan nombres ``stuff_i``/``thing_j`` y una paleta
    de tonos equiespaciados.
    """
    catalog = _catalog()
    n_stuff = cfg.num_stuff
    catalog_stuff = [c for c in catalog if not c["thing"]]
    catalog_things = [c for c in catalog if c["thing"]]
    if n_stuff == len(catalog_stuff) and cfg.num_classes - n_stuff == len(catalog_things):
        entries = catalog_stuff + catalog_things
        names = [c["nombre"] for c in entries]
        palette = [tuple(c["color"]) for c in entries]
    else:
        names = [f"stuff_{k}" for k in range(n_stuff)]
        names += [f"thing_{k}" for k in range(cfg.num_classes - n_stuff)]
        palette = []
        for k in range(cfg.num_classes):
            r, g, b = colorsys.hsv_to_rgb(k / cfg.num_classes, 0.7, 0.4 + 0.5 * ((k * 7) % 5) / 4)
            palette.append((int(r * 255), int(g * 255), int(b * 255)))
    thing_flags = [k >= n_stuff for k in range(cfg.num_classes)]
    return DatasetMeta(
        class_names=names,
        thing_flags=thing_flags,
        palette=palette,
        num_samples=cfg.num_samples,
    )


def generate_toy_sample(cfg: ToyDomainConfig, index: int) -> Sample:
    """Genera la muestra *index* del dominio configurado.

    Args:
        cfg: Configuración del dominio sintético.
        index: Índice de la muestra, ``0 <= index < cfg.num_samples``.

    Returns:
        Sample con imagen cuantizada a 8 bits (así el guardado en PNG es exacto).
    """
    cfg.validate()
    if not 0 <= index < cfg.num_samples:
        raise ValueError(
            f"Índice {index} fuera de rango: el dominio tiene {cfg.num_samples} muestras"
        )

    meta = toy_dataset_meta(cfg)
    scene_rng = np.random.default_rng([cfg.seed, index])
    label = _draw_label(cfg, scene_rng)
    image = _render(label, meta.palette, scene_rng)

    domain = Domain(cfg.domain)
    if domain is Domain.TARGET and not cfg.shift.is_identity():
        shift_rng = np.random.default_rng([cfg.seed, index, 1])
        image = apply_shift(image, cfg.shift, shift_rng)

    image_u8 = np.clip(np.rint(image * 255.0), 0, 255).astype(np.uint8)
    return Sample(
        image=torch.from_numpy(image_u8).permute(2, 0, 1).float().div(255.0),
        label=torch.from_numpy(label.astype(np.int64)),
        domain=domain,
        id=f"{domain.value}_{index:05d}",
    )


def generate_toy_dataset(
    cfg: ToyDomainConfig, start: int = 0, count: Optional[int] = None
) -> List[Sample]:
    """Genera ``count`` muestras consecutivas a partir de ``start``."""
    count = cfg.num_samples if count is None else count
    samples = [generate_toy_sample(cfg, start + i) for i in range(count)]
    logger.debug("Generadas %d muestras del dominio %s", len(samples), cfg.domain)
    return samples


def validation_config(cfg: ToyDomainConfig) -> ToyDomainConfig:
    """Configuración de la partición de validación: otra semilla y ``val_samples`` muestras."""
    return dataclasses.replace(
        cfg, seed=cfg.seed + _VAL_SEED_OFFSET, num_samples=cfg.val_samples
    )


def apply_shift(image: np.ndarray, shift: ShiftConfig, rng: np.random.Generator) -> np.ndarray:
    """Aplica el cambio de apariencia del dominio objetivo a una imagen ``(H, W, 3)``."""
    out = image
    if shift.hue_rotation % 360.0:
        tensor = torch.from_numpy(np.ascontiguousarray(out.transpose(2, 0, 1))).float()
        out = rotate_hue(tensor, shift.hue_rotation).permute(1, 2, 0).numpy().astype(np.float64)
    if shift.texture_frequency > 0:
        h, w = out.shape[:2]
        theta = rng.uniform(0.0, np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        yy, xx = np.mgrid[0:h, 0:w]
        wave = np.sin(2.0 * np.pi * shift.texture_frequency
                      * (xx * np.cos(theta) + yy * np.sin(theta)) + phase)
        out = out + shift.texture_amplitude * wave[..., None]
    if shift.noise_std > 0:
        out = out + rng.normal(0.0, shift.noise_std, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def rotate_hue(image: torch.Tensor, degrees: float) -> torch.Tensor:
    """Rota el tono de una imagen ``(3, H, W)``; los múltiplos de 360° son la identidad."""
    wrapped = ((degrees + 180.0) % 360.0) - 180.0
    if wrapped == 0.0:
        return image.clone()
    return TF.adjust_hue(image, wrapped / 360.0)


# ---------------------------------------------------------------------------
# Funciones auxiliares internas
# ---------------------------------------------------------------------------

def _draw_label(cfg: ToyDomainConfig, rng: np.random.Generator) -> np.ndarray:
    h, w = cfg.height, cfg.width
    label = np.zeros((h, w), dtype=np.int64)
    yy, xx = np.mgrid[0:h, 0:w]

    # Bandas stuff de arriba abajo, con fronteras ligeramente inclinadas
    for k in range(1, cfg.num_stuff):
        base = h * k / cfg.num_stuff + rng.uniform(-1, 1) * cfg.band_jitter * h
        slope = rng.uniform(-0.15, 0.15)
        boundary = base + slope * (xx - w / 2.0)
        label[yy >= boundary] = k

    n_things = cfg.num_classes - cfg.num_stuff
    if n_things <= 0:
        return label

    weights = np.array([cfg.thing_rarity ** j for j in range(n_things)], dtype=np.float64)
    weights /= weights.sum()
    lo, hi = cfg.shape_count
    count = int(rng.integers(lo, hi + 1))
    for _ in range(count):
        j = int(rng.choice(n_things, p=weights))
        k = cfg.num_stuff + j
        mask = _draw_shape(_SHAPES[j % len(_SHAPES)], h, w, yy, xx, cfg.thing_size, rng)
        label[mask] = k
    return label


def _draw_shape(kind: str, h: int, w: int, yy: np.ndarray, xx: np.ndarray,
                size: Tuple[float, float],
                rng: np.random.Generator) -> np.ndarray:
    sh = rng.uniform(size[0], size[1]) * h
    sw = rng.uniform(size[0], size[1]) * w
    cy = rng.uniform(0.35, 0.9) * h
    cx = rng.uniform(0.05, 0.95) * w
    if kind == "rectangle":
        return (np.abs(yy - cy) <= sh / 2) & (np.abs(xx - cx) <= sw / 2)
    if kind == "ellipse":
        return ((yy - cy) / (sh / 2)) ** 2 + ((xx - cx) / (sw / 2)) ** 2 <= 1.0
    # Triángulo con el vértice arriba
    top = cy - sh / 2
    rel = (yy - top) / sh
    return (rel >= 0) & (rel <= 1) & (np.abs(xx - cx) <= rel * sw / 2)


def _render(label: np.ndarray, palette: List[Tuple[int, int, int]],
            rng: np.random.Generator) -> np.ndarray:
    colors = np.asarray(palette, dtype=np.float64) / 255.0
    # Variación de color por clase en cada escena
    jitter = rng.uniform(-0.06, 0.06, size=colors.shape)
    image = np.clip(colors + jitter, 0.0, 1.0)[label]
    h = label.shape[0]
    shading = np.linspace(1.05, 0.9, h)[:, None, None]
    image = image * shading + rng.normal(0.0, _BASE_NOISE_STD, size=image.shape)
    return np.clip(image, 0.0, 1.0)
