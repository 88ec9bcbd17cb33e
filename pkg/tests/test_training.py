"""
Tests de extremo a extremo del servicio de entrenamiento, la evaluación y la CLI.

Cubren:
- Ficheros de una ejecución (config, pérdidas, métricas, checkpoints)
- Reproducibilidad y reanudación bit-idéntica
- Errores de iteración con su número de paso
- Evaluación e inferencia desde checkpoints
- Subcomandos generate, stats y train
"""

import dataclasses
import os

import pytest
import torch
from PIL import Image

import src.core.services.training_service as training_module
from main import build_parser, main
from src.core.dataset_io import load_dataset, save_dataset
from src.core.repositories.checkpoint_repository import Checkpoint, save_checkpoint
from src.core.repositories.stats_cache_repository import load_stats
from src.core.services.evaluation_service import EvaluationService
from src.core.services.training_service import (
    TrainingError,
    TrainingService,
    resolve_data,
    toy_domain_config,
)
from src.core.toy_domain import generate_toy_dataset, toy_dataset_meta, validation_config
from src.models.config import ConfigError, ToyDomainConfig, flatten
from src.models.sample import DatasetMeta, Domain, Sample
from src.utils.helpers import atomic_write_json, read_json, read_jsonl


def _run(cfg, run_dir, **kwargs):
    return TrainingService(cfg, run_dir).train(**kwargs)


def _checkpoint_from(cfg, bundle) -> Checkpoint:
    return Checkpoint(
        iteration=0,
        config=flatten(cfg.to_dict()),
        student=bundle.student.state_dict(),
        teacher=bundle.teacher.state_dict(),
        reference=bundle.reference.state_dict(),
    )


class TestResolveData:
    def test_toy_pair(self, tiny_cfg):
        data = resolve_data(tiny_cfg)
        assert len(data.source) == 6 and len(data.target) == 6 and len(data.val) == 2
        assert data.meta.num_classes == 7
        assert all(s.domain == Domain.TARGET for s in data.target)
        assert not torch.equal(data.source[0].label, data.target[0].label)

    def test_oracle_trains_on_target(self, tiny_cfg):
        data = resolve_data(dataclasses.replace(tiny_cfg, mode="oracle"))
        assert data.source is data.target

    def test_target_scenes_differ_from_source(self, tiny_cfg):
        target = toy_domain_config(tiny_cfg.toy, "target")
        assert target.domain == "target" and target.seed == tiny_cfg.toy.seed + 1

    def test_class_mismatch(self, tiny_cfg, temp_dir):
        other = os.path.join(temp_dir, "otro")
        meta = DatasetMeta(class_names=["a", "b"], thing_flags=[False, True],
                           palette=[(0, 0, 0), (255, 255, 255)])
        sample = Sample(image=torch.zeros(3, 64, 64), label=torch.zeros(64, 64, dtype=torch.int64),
                        domain=Domain.TARGET, id="x")
        save_dataset(other, meta, [sample])
        cfg = dataclasses.replace(tiny_cfg, data=dataclasses.replace(tiny_cfg.data,
                                                                     target_dir=other))
        with pytest.raises(ValueError, match="clases"):
            resolve_data(cfg)

    def test_stuff_only_source_with_fd_rejected(self, tiny_cfg, temp_dir):
        """Con FD solo sobre things, un dataset sin clases thing no sirve para entrenar."""
        source = os.path.join(temp_dir, "fuente")
        meta = DatasetMeta(class_names=["a", "b"], thing_flags=[False, False],
                           palette=[(0, 0, 0), (255, 255, 255)])
        sample = Sample(image=torch.zeros(3, 64, 64), label=torch.ones(64, 64, dtype=torch.int64),
                        domain=Domain.SOURCE, id="x")
        save_dataset(source, meta, [sample])
        cfg = dataclasses.replace(tiny_cfg, mode="source_only", data=dataclasses.replace(
            tiny_cfg.data, source_dir=source))
        assert cfg.fd.enabled and cfg.fd.things_only
        with pytest.raises(ConfigError, match="thing"):
            resolve_data(cfg)


class TestTrainingService:
    """Tests de TrainingService.train."""

    def test_run_files(self, tiny_cfg, temp_dir):
        result = _run(tiny_cfg, temp_dir)
        for name in ("config.json", "losses.jsonl", "metrics.jsonl", "class_stats.json"):
            assert os.path.isfile(os.path.join(temp_dir, name)), name
        for name in ("iter_000002.pt", "iter_000004.pt", "last.pt"):
            assert os.path.isfile(os.path.join(temp_dir, "checkpoints", name)), name
        losses = read_jsonl(os.path.join(temp_dir, "losses.jsonl"))
        assert [r["step"] for r in losses] == [0, 1, 2, 3]
        assert losses[0]["lr"] == 0.0
        assert {"L_S", "L_FD", "L_T", "q"} <= set(losses[0])
        metrics = read_jsonl(os.path.join(temp_dir, "metrics.jsonl"))
        assert [m["step"] for m in metrics] == [2, 4]
        assert result.checkpoint.iteration == 4
        assert 0.0 <= result.final_report.miou <= 1.0
        assert read_json(os.path.join(temp_dir, "config.json"))["mode"] == "uda"

    def test_same_seed_same_run(self, tiny_cfg, temp_dir):
        a_dir, b_dir = os.path.join(temp_dir, "a"), os.path.join(temp_dir, "b")
        a = _run(tiny_cfg, a_dir)
        b = _run(tiny_cfg, b_dir)
        assert read_jsonl(os.path.join(a_dir, "losses.jsonl")) == \
            read_jsonl(os.path.join(b_dir, "losses.jsonl"))
        for name, value in a.checkpoint.student.items():
            assert torch.equal(value, b.checkpoint.student[name]), name

    def test_resume_matches_uninterrupted(self, tiny_cfg, temp_dir):
        """Parar en la iteración 2 y reanudar da el mismo resultado que no parar."""
        straight_dir, split_dir = os.path.join(temp_dir, "seguido"), os.path.join(temp_dir, "partido")
        straight = _run(tiny_cfg, straight_dir)

        first = _run(tiny_cfg, split_dir, stop_at=2)
        assert first.checkpoint.iteration == 2
        resumed = _run(tiny_cfg, split_dir,
                       resume_from=os.path.join(split_dir, "checkpoints", "last.pt"))

        assert read_jsonl(os.path.join(straight_dir, "losses.jsonl")) == \
            read_jsonl(os.path.join(split_dir, "losses.jsonl"))
        assert read_jsonl(os.path.join(straight_dir, "metrics.jsonl")) == \
            read_jsonl(os.path.join(split_dir, "metrics.jsonl"))
        for part in ("student", "teacher"):
            a, b = getattr(straight.checkpoint, part), getattr(resumed.checkpoint, part)
            for name in a:
                assert torch.equal(a[name], b[name]), f"{part}.{name}"

    @pytest.mark.parametrize("mode", ["source_only", "dg", "oracle"])
    def test_other_modes(self, tiny_cfg, temp_dir, mode):
        cfg = dataclasses.replace(tiny_cfg, mode=mode, total_iters=2)
        result = _run(cfg, temp_dir)
        losses = read_jsonl(os.path.join(temp_dir, "losses.jsonl"))
        assert len(losses) == 2
        assert "L_T" not in losses[0]
        if mode == "dg":
            assert "L_consistency" in losses[0]
        assert result.final_report is not None

    def test_on_step_callback(self, tiny_cfg, temp_dir):
        seen = []
        _run(dataclasses.replace(tiny_cfg, mode="source_only", total_iters=2), temp_dir,
             on_step=lambda t, losses: seen.append(t))
        assert seen == [0, 1]

    def test_failure_reports_step(self, tiny_cfg, temp_dir, monkeypatch):
        def broken(*args, **kwargs):
            raise RuntimeError("pérdida no finita")

        monkeypatch.setattr(training_module, "uda_step", broken)
        with pytest.raises(TrainingError) as info:
            _run(tiny_cfg, temp_dir)
        assert info.value.step == 0
        assert "no finita" in str(info.value)

    def test_reference_from_checkpoint(self, tiny_cfg, tiny_bundle, temp_dir):
        path = os.path.join(temp_dir, "ref.pt")
        with torch.no_grad():
            for p in tiny_bundle.student.parameters():
                p.add_(1.0)
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        cfg = dataclasses.replace(tiny_cfg, data=dataclasses.replace(
            tiny_cfg.data, reference_checkpoint=path))
        bundle = TrainingService(cfg, temp_dir)._build_bundle()
        for a, b in zip(bundle.reference.state_dict().values(),
                        tiny_bundle.student.encoder.state_dict().values()):
            assert torch.equal(a, b)

    def test_architecture_mismatch_on_resume(self, tiny_cfg, tiny_bundle, temp_dir):
        path = os.path.join(temp_dir, "ckpt.pt")
        other = dataclasses.replace(tiny_cfg, decoder=dataclasses.replace(
            tiny_cfg.decoder, variant="segformer_mlp"))
        save_checkpoint(path, _checkpoint_from(other, tiny_bundle))
        with pytest.raises(ValueError, match="arquitectura"):
            _run(tiny_cfg, os.path.join(temp_dir, "run"), resume_from=path)


@pytest.fixture
def val_dir(tiny_cfg, temp_dir):
    toy = validation_config(toy_domain_config(tiny_cfg.toy, "target"))
    path = os.path.join(temp_dir, "val")
    save_dataset(path, toy_dataset_meta(toy), generate_toy_dataset(toy))
    return path


class TestEvaluationService:
    """Tests de EvaluationService."""

    def test_evaluate_checkpoint(self, tiny_cfg, tiny_bundle, temp_dir, val_dir):
        path = os.path.join(temp_dir, "ckpt.pt")
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        report, meta = EvaluationService().evaluate(path, val_dir)
        assert len(report.iou) == 7 and meta.num_classes == 7
        assert sum(report.tp) + sum(report.fn) == 2 * 64 * 64
        assert 0.0 <= report.miou <= 1.0

    def test_slide_and_whole_image_agree_on_window(self, tiny_cfg, tiny_bundle, temp_dir,
                                                    val_dir):
        """Con imágenes del tamaño de la ventana ambos caminos coinciden."""
        path = os.path.join(temp_dir, "ckpt.pt")
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        slide, _ = EvaluationService().evaluate(path, val_dir, use_slide=True)
        whole, _ = EvaluationService().evaluate(path, val_dir, use_slide=False)
        assert slide.tp == whole.tp

    def test_class_count_mismatch(self, tiny_cfg, tiny_bundle, temp_dir):
        path = os.path.join(temp_dir, "ckpt.pt")
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        data = os.path.join(temp_dir, "dos_clases")
        meta = DatasetMeta(class_names=["a", "b"], thing_flags=[False, True],
                           palette=[(0, 0, 0), (255, 255, 255)])
        save_dataset(data, meta, [Sample(image=torch.zeros(3, 64, 64),
                                         label=torch.zeros(64, 64, dtype=torch.int64),
                                         domain=Domain.TARGET, id="x")])
        with pytest.raises(ValueError, match="clases"):
            EvaluationService().evaluate(path, data)

    def test_infer_writes_palette_png(self, tiny_cfg, tiny_bundle, temp_dir, val_dir):
        path = os.path.join(temp_dir, "ckpt.pt")
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        image_path = os.path.join(val_dir, "images", sorted(os.listdir(
            os.path.join(val_dir, "images")))[0])
        out = os.path.join(temp_dir, "pred.png")
        prediction = EvaluationService().infer(path, image_path, out)
        with Image.open(out) as img:
            assert img.mode == "P" and img.size == (64, 64)
        assert int(prediction.max()) < 7


class TestCli:
    """Tests de los subcomandos de main."""

    def test_generate_and_stats(self, temp_dir):
        out = os.path.join(temp_dir, "fuente")
        code = main(["--work-dir", temp_dir, "generate", "--output", out,
                     "--set", "toy.height=64", "toy.width=64", "toy.num_samples=3"])
        assert code == 0
        meta, samples = load_dataset(out)
        assert len(samples) == 3 and meta.num_classes == 7
        assert main(["--work-dir", temp_dir, "stats", "--data", out,
                     "--sweep", "0.01", "1.0"]) == 0
        assert os.path.isfile(os.path.join(out, "class_stats.json"))

    def test_unknown_key_exit_code(self, temp_dir):
        code = main(["--work-dir", temp_dir, "generate", "--output", temp_dir,
                     "--set", "toy.altura=64"])
        assert code == 2

    def test_missing_dataset_exit_code(self, temp_dir):
        assert main(["--work-dir", temp_dir, "stats", "--data",
                     os.path.join(temp_dir, "nada")]) == 2

    def test_train_command(self, temp_dir, capsys):
        run_dir = os.path.join(temp_dir, "run")
        code = main(["--work-dir", temp_dir, "train", "--run-dir", run_dir, "--set",
                     "mode=source_only", "total_iters=2", "eval_interval=2",
                     "checkpoint_interval=2", "optimizer.t_warm=1", "toy.height=64",
                     "toy.width=64", "toy.num_samples=4", "toy.val_samples=1"])
        assert code == 0
        assert os.path.isfile(os.path.join(run_dir, "checkpoints", "last.pt"))
        assert "mIoU" in capsys.readouterr().out

    def test_documented_command_lines_parse(self):
        parser = build_parser()
        args = parser.parse_args(["train", "--config", "c.json", "--mode", "dg", "--seed", "3"])
        assert (args.config, args.mode, args.seed) == ("c.json", "dg", 3)
        args = parser.parse_args(["eval", "--checkpoint", "m.pt", "--dataset", "val", "--slide"])
        assert (args.checkpoint, args.dataset, args.slide) == ("m.pt", "val", True)
        args = parser.parse_args(["infer", "--checkpoint", "m.pt", "--input", "a.png",
                                  "--output", "b.png"])
        assert (args.input, args.output) == ("a.png", "b.png")
        args = parser.parse_args(["stats", "--dataset", "src", "--out", "cache.json"])
        assert (args.dataset, args.out) == ("src", "cache.json")

    def test_train_config_file_mode_and_seed(self, temp_dir):
        """--mode y --seed prevalecen sobre el fichero de configuración."""
        config_path = os.path.join(temp_dir, "tiny.json")
        atomic_write_json(config_path, {
            "mode": "uda", "seed": 0, "total_iters": 1, "eval_interval": 1,
            "checkpoint_interval": 1, "optimizer.t_warm": 1, "toy.height": 64,
            "toy.width": 64, "toy.num_samples": 2, "toy.val_samples": 1})
        run_dir = os.path.join(temp_dir, "run")
        code = main(["--work-dir", temp_dir, "train", "--config", config_path,
                     "--mode", "source_only", "--seed", "3", "--run-dir", run_dir])
        assert code == 0
        saved = read_json(os.path.join(run_dir, "config.json"))
        assert saved["mode"] == "source_only" and saved["seed"] == 3

    def test_eval_command_slide_flags(self, tiny_cfg, tiny_bundle, temp_dir, val_dir, capsys):
        path = os.path.join(temp_dir, "ckpt.pt")
        save_checkpoint(path, _checkpoint_from(tiny_cfg, tiny_bundle))
        assert main(["--work-dir", temp_dir, "eval", "--checkpoint", path,
                     "--dataset", val_dir, "--slide"]) == 0
        assert "mIoU" in capsys.readouterr().out
        assert main(["--work-dir", temp_dir, "eval", "--checkpoint", path,
                     "--dataset", val_dir, "--slide", "--no-slide"]) == 2

    def test_stats_out_file(self, temp_dir):
        data = os.path.join(temp_dir, "fuente")
        toy = ToyDomainConfig(height=64, width=64, num_samples=2)
        save_dataset(data, toy_dataset_meta(toy), generate_toy_dataset(toy))
        out = os.path.join(temp_dir, "cache", "stats.json")
        assert main(["--work-dir", temp_dir, "stats", "--dataset", data, "--out", out]) == 0
        assert load_stats(out, 7) is not None
        assert not os.path.exists(os.path.join(data, "class_stats.json"))

    def test_stats_empty_dataset_exit_code(self, temp_dir):
        """Un dataset con meta.json pero sin muestras termina con código 2."""
        data = os.path.join(temp_dir, "vacio")
        save_dataset(data, toy_dataset_meta(ToyDomainConfig(height=64, width=64)), [])
        assert main(["--work-dir", temp_dir, "stats", "--dataset", data]) == 2
