#!/usr/bin/env python3
"""
Punto de entrada de segadapt (línea de comandos).

Subcomandos: ``train``, ``eval``, ``infer``, ``stats`` y ``generate``.
"""

import argparse
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import pandas as pd

from src.core.dataset_io import DatasetError, load_dataset, save_dataset
from src.core.repositories.checkpoint_repository import CheckpointError
from src.core.repositories.stats_cache_repository import save_stats
from src.core.sampling import class_frequency_table, compute_class_stats, resampled_pixel_report
from src.core.services.evaluation_service import EvaluationService
from src.core.services.training_service import (
    STATS_FILENAME,
    TrainingError,
    TrainingService,
    toy_domain_config,
)
from src.core.settings import Settings, load_train_config
from src.core.toy_domain import generate_toy_dataset, toy_dataset_meta, validation_config
from src.models.config import TRAIN_MODES, ConfigError

logger = logging.getLogger(__name__)


def _setup_logging(settings: Settings, verbose: bool = False) -> None:
    settings.ensure_dirs()
    log_file = os.path.join(settings.logs_dir, "segadapt.log")
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s [%(levelname)s] %(name)s: %(message)s",
        handlers=[
            logging.FileHandler(log_file, encoding="utf-8"),
            logging.StreamHandler(sys.stderr),
        ],
    )


def _parse_overrides(pairs: Optional[List[str]]) -> Dict[str, Any]:
    """``["rcs.temperature=0.1", "mode=dg"]`` → diccionario plano (valores JSON o texto)."""
    overrides: Dict[str, Any] = {}
    for pair in pairs or []:
        key, sep, raw = pair.partition("=")
        if not sep:
            raise ConfigError(f"Se esperaba clave=valor, recibido '{pair}'")
        try:
            overrides[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key.strip()] = raw
    return overrides


def cmd_train(args, settings: Settings) -> int:
    overrides = _parse_overrides(args.set)
    if args.mode is not None:
        overrides["mode"] = args.mode
    if args.seed is not None:
        overrides["seed"] = args.seed
    cfg = load_train_config(args.config, overrides)
    run_dir = args.run_dir or cfg.run_dir or settings.run_dir(f"{cfg.mode}_seed{cfg.seed}")
    result = TrainingService(cfg, run_dir).train(resume_from=args.resume)
    if result.final_report is not None:
        print(result.final_report.to_dataframe().to_string(index=False))
        print(f"mIoU: {100.0 * result.final_report.miou:.2f}")
    print(f"Checkpoint: {result.checkpoint_path}")
    return 0


def cmd_eval(args, settings: Settings) -> int:
    if args.slide and args.no_slide:
        raise ConfigError("--slide y --no-slide son incompatibles")
    use_slide = True if args.slide else False if args.no_slide else None
    report, _ = EvaluationService().evaluate(args.checkpoint, args.dataset, use_slide)
    print(report.to_dataframe().to_string(index=False))
    print(f"mIoU: {100.0 * report.miou:.2f}")
    return 0


def cmd_infer(args, settings: Settings) -> int:
    EvaluationService().infer(args.checkpoint, args.input, args.output)
    print(f"Predicción guardada en {args.output}")
    return 0


def cmd_stats(args, settings: Settings) -> int:
    meta, samples = load_dataset(args.dataset)
    stats = compute_class_stats(samples, meta.num_classes)
    out_path = args.out or os.path.join(args.dataset, STATS_FILENAME)
    save_stats(out_path, stats, args.dataset)
    print(f"Estadísticas guardadas en {out_path}")
    with pd.option_context("display.float_format", "{:.6f}".format):
        print(class_frequency_table(stats, meta, args.temperature).to_string(index=False))
        if args.sweep:
            print()
            print(resampled_pixel_report(stats, args.sweep).to_string(index=False))
    return 0


def cmd_generate(args, settings: Settings) -> int:
    cfg = load_train_config(args.config, _parse_overrides(args.set))
    toy = toy_domain_config(cfg.toy, args.domain)
    if args.split == "val":
        toy = validation_config(toy)
    samples = generate_toy_dataset(toy)
    meta = toy_dataset_meta(toy)
    count = save_dataset(args.output, meta, samples)
    print(f"{count} muestras ({args.domain}/{args.split}) escritas en {args.output}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segadapt",
        description="Segmentación semántica con adaptación y generalización de dominio",
    )
    parser.add_argument("--work-dir", help="Directorio de trabajo (por defecto $SEGADAPT_WORK_DIR)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log en nivel DEBUG")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Entrenar un modelo")
    p.add_argument("--config", help="Fichero JSON de configuración")
    p.add_argument("--mode", choices=TRAIN_MODES,
                   help="Modo de entrenamiento (sobrescribe 'mode')")
    p.add_argument("--seed", type=int, help="Semilla (sobrescribe 'seed')")
    p.add_argument("--set", nargs="*", metavar="CLAVE=VALOR", help="Sobrescribe claves planas")
    p.add_argument("--run-dir", help="Directorio de la ejecución")
    p.add_argument("--resume", help="Checkpoint desde el que reanudar")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="Evaluar un checkpoint sobre un dataset etiquetado")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", "--data", dest="dataset", required=True,
                   help="Directorio del dataset")
    p.add_argument("--slide", action="store_true", help="Forzar la inferencia por ventanas")
    p.add_argument("--no-slide", action="store_true", help="Imagen completa sin ventana deslizante")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="Predecir una imagen")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True, help="PNG de índices de salida")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("stats", help="Frecuencias de clase y probabilidades RCS de un dataset")
    p.add_argument("--dataset", "--data", dest="dataset", required=True)
    p.add_argument("--out", help="Fichero de caché (por defecto <dataset>/class_stats.json)")
    p.add_argument("--temperature", type=float, default=0.01)
    p.add_argument("--sweep", type=float, nargs="*", help="Temperaturas a comparar")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("generate", help="Escribir el dominio sintético a disco")
    p.add_argument("--output", required=True)
    p.add_argument("--domain", choices=("source", "target"), default="source")
    p.add_argument("--split", choices=("train", "val"), default="train")
    p.add_argument("--config", help="Fichero JSON de configuración")
    p.add_argument("--set", nargs="*", metavar="CLAVE=VALOR")
    p.set_defaults(func=cmd_generate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    settings = Settings(args.work_dir)
    _setup_logging(settings, args.verbose)
    try:
        return args.func(args, settings)
    except (ConfigError, DatasetError, CheckpointError) as exc:
        logger.error("%s", exc)
        return 2
    except TrainingError as exc:
        logger.error("Entrenamiento interrumpido: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
