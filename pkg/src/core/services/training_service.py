"""
Servicio de entrenamiento: resuelve los datos, construye las redes y ejecuta
el bucle de iteraciones para los cuatro modos (``uda``, ``dg``,
``source_only`` y ``oracle``).

Cada ejecución escribe en su directorio:

- ``config.json``: configuración plana efectiva.
- ``losses.jsonl``: un registro por iteración con las pérdidas y la tasa.
- ``metrics.jsonl``: un registro por evaluación (``step``, ``mIoU``, IoU por clase).
- ``class_stats.json``: estadísticas de clases del conjunto supervisado.
- ``checkpoints/iter_XXXXXX.pt`` y ``checkpoints/last.pt``.
"""

import dataclasses
import logging
import os
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np
import torch

from src.core.dataset_io import DatasetError, load_dataset
from src.core.dg import dg_step
from src.core.network.ema import ModelBundle, build_model_bundle
from src.core.repositories.checkpoint_repository import (
    Checkpoint,
    load_checkpoint,
    save_checkpoint,
)
from src.core.repositories.stats_cache_repository import load_stats, save_stats
from src.core.sampling import compute_class_stats, sample_source
from src.core.schedule import build_optimizer, build_scheduler
from src.core.selftrain import fd_coverage, supervised_step, uda_step
from src.core.services.evaluation_service import evaluate_model
from src.core.settings import save_train_config
from src.core.toy_domain import generate_toy_dataset, toy_dataset_meta, validation_config
from src.models.class_stats import ClassStats
from src.models.config import ConfigError, ToyDomainConfig, TrainConfig, flatten, unflatten
from src.models.eval_report import EvalReport
from src.models.sample import DatasetMeta, Domain, Sample
from src.utils.helpers import (
    append_jsonl,
    rng_from_json,
    rng_state_to_json,
    seed_everything,
)

logger = logging.getLogger(__name__)

# Separación de semillas entre las escenas fuente y objetivo del dominio sintético
_TARGET_SEED_OFFSET = 1

LOSSES_FILENAME = "losses.jsonl"
METRICS_FILENAME = "metrics.jsonl"
CONFIG_FILENAME = "config.json"
STATS_FILENAME = "class_stats.json"
CHECKPOINTS_DIRNAME = "checkpoints"
LAST_CHECKPOINT = "last.pt"


class TrainingError(RuntimeError):
    """Fallo durante una iteración de entrenamiento."""

    def __init__(self, step: int, message: str):
        super().__init__(f"Iteración {step}: {message}")
        self.step = step


@dataclass
class TrainingData:
    """Particiones resueltas para una ejecución."""

    meta: DatasetMeta
    source: List[Sample]
    target: List[Sample]
    val: List[Sample]

    @property
    def supervised(self) -> Dict[str, Sample]:
        return {s.id: s for s in self.source}


@dataclass
class TrainingResult:
    """Resultado de :meth:`TrainingService.train`."""

    run_dir: str
    checkpoint: Checkpoint
    checkpoint_path: str
    reports: List[EvalReport] = field(default_factory=list)

    @property
    def final_report(self) -> Optional[EvalReport]:
        return self.reports[-1] if self.reports else None


def toy_domain_config(toy: ToyDomainConfig, domain: str) -> ToyDomainConfig:
    """Configuración sintética de un dominio; el objetivo usa escenas distintas a las fuente."""
    if domain == "target":
        return dataclasses.replace(toy, domain="target", seed=toy.seed + _TARGET_SEED_OFFSET)
    return dataclasses.replace(toy, domain="source")


def resolve_data(cfg: TrainConfig) -> TrainingData:
    """Carga los datasets configurados o genera el par sintético.

    En modo ``oracle`` el conjunto supervisado es el de entrenamiento objetivo.

    Raises:
        DatasetError: Si los datasets tienen distinto número de clases.
        ConfigError: Si FD está activa y el dataset no declara clases thing.
    """
    toy_source = toy_domain_config(cfg.toy, "source")
    toy_target = toy_domain_config(cfg.toy, "target")
    meta = toy_dataset_meta(toy_source)

    if cfg.data.source_dir:
        meta, source = load_dataset(cfg.data.source_dir, Domain.SOURCE)
    else:
        source = generate_toy_dataset(toy_source)
    if cfg.data.target_dir:
        target_meta, target = load_dataset(cfg.data.target_dir, Domain.TARGET)
        _check_same_classes(meta, target_meta, cfg.data.target_dir)
    else:
        target = generate_toy_dataset(toy_target)
    if cfg.data.val_dir:
        val_meta, val = load_dataset(cfg.data.val_dir, Domain.TARGET)
        _check_same_classes(meta, val_meta, cfg.data.val_dir)
    else:
        val = generate_toy_dataset(validation_config(toy_target))

    if cfg.mode == "oracle":
        source = target
    needs_thing = cfg.fd.enabled and cfg.fd.lambda_fd > 0 and cfg.fd.things_only
    try:
        meta.validate(require_thing=needs_thing)
    except ValueError as exc:
        raise ConfigError(f"Metadatos incompatibles con la configuración: {exc}") from exc
    logger.info("Datos: %d supervisadas, %d objetivo, %d validación (K=%d)",
                len(source), len(target), len(val), meta.num_classes)
    return TrainingData(meta=meta, source=source, target=target, val=val)


def _check_same_classes(meta: DatasetMeta, other: DatasetMeta, path: str) -> None:
    if other.num_classes != meta.num_classes:
        raise DatasetError(
            f"El dataset '{path}' tiene {other.num_classes} clases; se esperaban {meta.num_classes}"
        )


class TrainingService:
    """Orquesta una ejecución de entrenamiento.

    Args:
        cfg: Configuración validada.
        run_dir: Directorio de la ejecución (por defecto ``cfg.run_dir``).
        data: Particiones ya resueltas; si no se dan se resuelven con :func:`resolve_data`.
    """

    def __init__(self, cfg: TrainConfig, run_dir: Optional[str] = None,
                 data: Optional[TrainingData] = None):
        cfg.validate()
        self.cfg = cfg
        self.run_dir = os.path.abspath(run_dir or cfg.run_dir or "run")
        self._data = data

    # ── Rutas ────────────────────────────────────────────────────

    @property
    def losses_path(self) -> str:
        return os.path.join(self.run_dir, LOSSES_FILENAME)

    @property
    def metrics_path(self) -> str:
        return os.path.join(self.run_dir, METRICS_FILENAME)

    def checkpoint_path(self, iteration: Optional[int] = None) -> str:
        name = LAST_CHECKPOINT if iteration is None else f"iter_{iteration:06d}.pt"
        return os.path.join(self.run_dir, CHECKPOINTS_DIRNAME, name)

    # ── Preparación ──────────────────────────────────────────────

    @property
    def data(self) -> TrainingData:
        if self._data is None:
            self._data = resolve_data(self.cfg)
        return self._data

    def class_stats(self) -> ClassStats:
        """Estadísticas del conjunto supervisado; reutiliza la cache del dataset si es válida."""
        k = self.data.meta.num_classes
        cache_dir = self.cfg.data.target_dir if self.cfg.mode == "oracle" else self.cfg.data.source_dir
        stats = load_stats(os.path.join(cache_dir, STATS_FILENAME), k) if cache_dir else None
        if stats is None or set(stats.sample_ids) != {s.id for s in self.data.source}:
            stats = compute_class_stats(self.data.source, k)
        save_stats(os.path.join(self.run_dir, STATS_FILENAME), stats, cache_dir or "toy")
        return stats

    def _log_fd_coverage(self, samples: List[Sample], thing_flags: List[bool]) -> None:
        fd = self.cfg.fd
        if not (fd.enabled and fd.lambda_fd > 0):
            return
        coverage = fd_coverage(samples, thing_flags, fd)
        if coverage is None:
            logger.info("FD sobre recortes de contexto: las imágenes no entran completas")
            return
        grid, fraction = coverage
        if fraction == 0.0:
            logger.warning(
                "FD no se activará: ninguna muestra tiene una celda de la rejilla %dx%d "
                "cubierta en más de r=%.2f por una clase thing", grid[0], grid[1], fd.r,
            )
        else:
            logger.info("FD activa en el %.1f%% de las muestras supervisadas (rejilla %dx%d)",
                        100.0 * fraction, grid[0], grid[1])

    def _build_bundle(self) -> ModelBundle:
        cfg = self.cfg
        reference_state = None
        if cfg.data.reference_checkpoint:
            reference_state = load_checkpoint(cfg.data.reference_checkpoint).student
        return build_model_bundle(cfg.encoder, cfg.decoder, self.data.meta.num_classes,
                                  cfg.seed, reference_state)

    # ── Bucle ────────────────────────────────────────────────────

    def train(self, resume_from: Optional[str] = None,
              stop_at: Optional[int] = None,
              on_step: Optional[Callable[[int, Dict[str, float]], None]] = None) -> TrainingResult:
        """Entrena hasta ``total_iters`` (o hasta *stop_at*, exclusivo).

        Reanudar desde un checkpoint de la iteración t y continuar hasta el
        final produce el mismo estado que una ejecución sin interrupción.

        Raises:
            TrainingError: Si falla una iteración.
            CheckpointError: Si el checkpoint de reanudación no es válido.
        """
        cfg = self.cfg
        os.makedirs(self.run_dir, exist_ok=True)
        save_train_config(os.path.join(self.run_dir, CONFIG_FILENAME), cfg)

        rng = seed_everything(cfg.seed, cfg.deterministic)
        data = self.data
        stats = self.class_stats()
        by_id = data.supervised
        thing_flags = data.meta.thing_flags
        self._log_fd_coverage(data.source, thing_flags)

        bundle = self._build_bundle()
        optimizer = build_optimizer(bundle.student, cfg.optimizer)
        scheduler = build_scheduler(optimizer, cfg.total_iters, cfg.optimizer)

        start = 0
        if resume_from:
            start, rng = self._restore(resume_from, bundle, optimizer, scheduler)
            logger.info("Reanudando desde %s en la iteración %d", resume_from, start)

        end = cfg.total_iters if stop_at is None else min(stop_at, cfg.total_iters)
        logger.info("Entrenamiento %s: iteraciones %d → %d en %s", cfg.mode, start, end,
                    self.run_dir)
        reports: List[EvalReport] = []
        checkpoint = None
        for t in range(start, end):
            lr = optimizer.param_groups[0]["lr"]
            try:
                losses = self._step(bundle, optimizer, stats, by_id, thing_flags, rng)
            except (ValueError, RuntimeError) as exc:
                logger.error("Fallo en la iteración %d: %s", t, exc)
                raise TrainingError(t, str(exc)) from exc
            scheduler.step()
            done = t + 1

            append_jsonl(self.losses_path, {"step": t, "lr": lr, **losses})
            if on_step is not None:
                on_step(t, losses)
            if done % cfg.log_interval == 0 or done == end:
                summary = ", ".join(f"{k}={v:.4f}" for k, v in losses.items())
                logger.info("Iteración %d/%d lr=%.2e %s", done, cfg.total_iters, lr, summary)
            if done % cfg.eval_interval == 0 or done == cfg.total_iters:
                reports.append(self._evaluate(bundle, done))
            if done % cfg.checkpoint_interval == 0 or done == end:
                checkpoint = self._save(bundle, optimizer, scheduler, rng, done)

        if checkpoint is None:
            checkpoint = self._snapshot(bundle, optimizer, scheduler, rng, start)
        return TrainingResult(run_dir=self.run_dir, checkpoint=checkpoint,
                              checkpoint_path=self.checkpoint_path(), reports=reports)

    def _step(self, bundle: ModelBundle, optimizer: torch.optim.Optimizer, stats: ClassStats,
              by_id: Dict[str, Sample], thing_flags: List[bool],
              rng: np.random.Generator) -> Dict[str, float]:
        cfg = self.cfg
        batch = [by_id[sample_source(stats, cfg.rcs, rng)] for _ in range(cfg.batch_size)]
        if cfg.mode == "uda":
            target = self.data.target
            picks = rng.integers(0, len(target), size=cfg.batch_size)
            return uda_step(bundle, optimizer, batch, [target[i].image for i in picks],
                            cfg, thing_flags, rng)
        if cfg.mode == "dg" and cfg.dg.enabled:
            return dg_step(bundle, optimizer, batch, cfg, thing_flags, rng)
        return supervised_step(bundle, optimizer, batch, cfg, thing_flags, rng)

    def _evaluate(self, bundle: ModelBundle, step: int) -> EvalReport:
        meta = self.data.meta
        report = evaluate_model(bundle.student, self.data.val, self.cfg.hrda,
                                use_slide=self.cfg.hrda.enabled, step=step,
                                class_names=meta.class_names)
        append_jsonl(self.metrics_path, report.to_dict())
        logger.info("Evaluación en la iteración %d: mIoU=%.2f", step, 100.0 * report.miou)
        return report

    # ── Checkpoints ──────────────────────────────────────────────

    def _snapshot(self, bundle: ModelBundle, optimizer: torch.optim.Optimizer, scheduler,
                  rng: np.random.Generator, iteration: int) -> Checkpoint:
        return Checkpoint(
            iteration=iteration,
            config=flatten(self.cfg.to_dict()),
            student=bundle.student.state_dict(),
            teacher=bundle.teacher.state_dict(),
            reference=bundle.reference.state_dict(),
            optimizer=optimizer.state_dict(),
            scheduler=scheduler.state_dict(),
            numpy_rng=rng_state_to_json(rng),
            torch_rng=torch.get_rng_state(),
        )

    def _save(self, bundle: ModelBundle, optimizer: torch.optim.Optimizer, scheduler,
              rng: np.random.Generator, iteration: int) -> Checkpoint:
        checkpoint = self._snapshot(bundle, optimizer, scheduler, rng, iteration)
        save_checkpoint(self.checkpoint_path(iteration), checkpoint)
        save_checkpoint(self.checkpoint_path(), checkpoint)
        return checkpoint

    def _restore(self, path: str, bundle: ModelBundle, optimizer: torch.optim.Optimizer,
                 scheduler) -> tuple:
        checkpoint = load_checkpoint(path)
        saved = TrainConfig.from_dict(unflatten(checkpoint.config))
        if saved.encoder != self.cfg.encoder or saved.decoder != self.cfg.decoder:
            raise ValueError("La arquitectura del checkpoint no coincide con la configuración")
        bundle.student.load_state_dict(checkpoint.student)
        bundle.teacher.load_state_dict(checkpoint.teacher)
        bundle.reference.load_state_dict(checkpoint.reference)
        bundle.step = checkpoint.iteration
        if checkpoint.optimizer is not None:
            optimizer.load_state_dict(checkpoint.optimizer)
        if checkpoint.scheduler is not None:
            scheduler.load_state_dict(checkpoint.scheduler)
        if checkpoint.torch_rng is not None:
            torch.set_rng_state(checkpoint.torch_rng)
        if checkpoint.numpy_rng is None:
            raise ValueError("El checkpoint no contiene el estado del generador aleatorio")
        return checkpoint.iteration, rng_from_json(checkpoint.numpy_rng)
