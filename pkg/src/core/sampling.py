"""
Estadísticas de frecuencia de clases y muestreo de clases raras (RCS).

Cada clase ``k`` tiene una frecuencia de píxel ``ω_k`` en el dataset fuente.
RCS elige primero una clase con probabilidad ``softmax((1 − ω) / T)`` y luego
una muestra al azar entre las que contienen esa clase, de modo que las clases
raras aparecen con más frecuencia durante el entrenamiento.
"""

import logging
import math
from typing import Iterable, List, Sequence

import numpy as np
import pandas as pd
from scipy.special import softmax

from src.models.class_stats import ClassStats
from src.models.config import RcsConfig
from src.models.sample import IGNORE_INDEX, DatasetMeta, Sample

logger = logging.getLogger(__name__)


def compute_class_stats(dataset: Iterable[Sample], num_classes: int) -> ClassStats:
    """Cuenta los píxeles de cada clase en *dataset*.

    El numerador de ``ω_k`` excluye los píxeles IGNORE y el denominador es el
    total de píxeles ``N·H·W``, así que ``Σ ω_k`` es la fracción de píxeles
    anotados.

    Raises:
        ValueError: Si el dataset está vacío.
    """
    sample_ids: List[str] = []
    rows: List[np.ndarray] = []
    total = 0
    for sample in dataset:
        label = sample.label.detach().cpu().numpy().ravel()
        valid = label[label != IGNORE_INDEX]
        rows.append(np.bincount(valid, minlength=num_classes)[:num_classes].astype(np.int64))
        sample_ids.append(sample.id)
        total += label.size
    if not rows:
        raise ValueError("No se pueden calcular estadísticas de un dataset vacío")

    counts = np.stack(rows)
    omega = counts.sum(axis=0) / float(total)
    class_index = {
        k: [sid for sid, row in zip(sample_ids, counts) if row[k] > 0]
        for k in range(num_classes)
    }
    logger.debug("Estadísticas de %d muestras: ω=%s", len(sample_ids), np.round(omega, 4))
    return ClassStats(
        omega=omega,
        class_index=class_index,
        total_pixels=total,
        sample_ids=sample_ids,
        pixel_counts=counts,
    )


def rcs_probabilities(omega: Sequence[float], temperature: float) -> np.ndarray:
    """Probabilidad de muestreo de cada clase, ``softmax((1 − ω) / T)``.

    ``T = inf`` da la distribución uniforme (muestreo balanceado por clase).
    """
    if not temperature > 0:
        raise ValueError(f"La temperatura debe ser > 0 (T={temperature})")
    omega = np.asarray(omega, dtype=np.float64)
    if math.isinf(temperature):
        return np.full(omega.shape, 1.0 / omega.size)
    return softmax((1.0 - omega) / temperature)


def sample_source(stats: ClassStats, cfg: RcsConfig, rng: np.random.Generator) -> str:
    """Elige el id de una muestra fuente.

    Con RCS activo se sortea una clase entre las presentes en el dataset y
    luego una muestra uniforme de ``class_index[k]``; sin RCS, una muestra
    uniforme de todo el dataset.
    """
    if not cfg.enabled:
        if not stats.sample_ids:
            raise ValueError("Las estadísticas no contienen muestras")
        return stats.sample_ids[int(rng.integers(len(stats.sample_ids)))]

    present = stats.present_classes
    if not present:
        raise ValueError("Ninguna clase tiene píxeles en el dataset fuente")
    probs = rcs_probabilities(stats.omega[present], cfg.temperature)
    k = present[int(rng.choice(len(present), p=probs))]
    candidates = stats.class_index[k]
    return candidates[int(rng.integers(len(candidates)))]


def class_frequency_table(stats: ClassStats, meta: DatasetMeta,
                          temperature: float) -> pd.DataFrame:
    """Tabla legible de frecuencias y probabilidades RCS por clase."""
    probs = np.zeros(stats.num_classes)
    present = stats.present_classes
    if present:
        probs[present] = rcs_probabilities(stats.omega[present], temperature)
    return pd.DataFrame({
        "clase": meta.class_names,
        "thing": meta.thing_flags,
        "omega": stats.omega,
        "p_rcs": probs,
        "muestras": [len(stats.class_index.get(k, [])) for k in range(stats.num_classes)],
    })


def resampled_pixel_report(stats: ClassStats, temperatures: Sequence[float]) -> pd.DataFrame:
    """Píxeles esperados por clase en cada sorteo RCS para varias temperaturas.

    Para cada ``T`` calcula ``E_T[n_c] = Σ_k P_T(k) · media_{m ∈ X_k} n_{m,c}``,
    el mínimo sobre clases presentes y marca la ``T`` que maximiza ese mínimo.
    Es solo un diagnóstico: no cambia la configuración.
    """
    present = stats.present_classes
    id_to_row = {sid: i for i, sid in enumerate(stats.sample_ids)}
    # Media de píxeles por clase en las muestras que contienen cada clase k
    mean_counts = np.stack([
        stats.pixel_counts[[id_to_row[sid] for sid in stats.class_index[k]]].mean(axis=0)
        for k in present
    ])

    records = []
    for t in temperatures:
        probs = rcs_probabilities(stats.omega[present], t)
        expected = probs @ mean_counts
        record = {"temperature": float(t)}
        record.update({f"n_{c}": float(expected[c]) for c in range(stats.num_classes)})
        record["min_pixels"] = float(expected[present].min())
        records.append(record)
    report = pd.DataFrame.from_records(records)
    report["best"] = report["min_pixels"] == report["min_pixels"].max()
    return report
