"""
Tests de la generalización de dominio (estilizado y consistencia).
"""

import dataclasses

import numpy as np
import pytest
import torch

from src.core.dg import dg_objective, dg_step, stylize
from src.core.network.ema import build_model_bundle
from src.core.schedule import build_optimizer
from src.core.toy_domain import generate_toy_dataset
from src.models.config import DgConfig
from src.models.sample import Domain, Sample

FLAGS = [False] * 4 + [True] * 3


def _dg_cfg(cfg, **dg_changes):
    return dataclasses.replace(cfg, mode="dg", dg=dataclasses.replace(cfg.dg, **dg_changes))


class TestStylize:
    """Tests de stylize."""

    def test_zero_ranges_identity(self, rng):
        image = torch.rand(3, 16, 16)
        cfg = DgConfig(brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0)
        assert torch.equal(stylize(image, cfg, rng), image)

    def test_changes_image(self):
        image = torch.rand(3, 16, 16)
        out = stylize(image, DgConfig(), np.random.default_rng(0))
        assert out.shape == image.shape
        assert not torch.equal(out, image)
        assert float(out.min()) >= 0.0 and float(out.max()) <= 1.0

    def test_reproducible(self):
        image = torch.rand(3, 16, 16)
        a = stylize(image, DgConfig(), np.random.default_rng(9))
        b = stylize(image, DgConfig(), np.random.default_rng(9))
        assert torch.equal(a, b)


class TestDgObjective:
    def test_weighted_sum(self, tiny_cfg):
        cfg = _dg_cfg(tiny_cfg, consistency_weight=10.0)
        total = dg_objective(torch.tensor(1.0), torch.tensor(2.0), torch.tensor(0.5),
                             torch.tensor(4.0), cfg)
        assert float(total) == pytest.approx(1.0 + 2.0 + 10.0 * 0.5 + 0.005 * 4.0)

    def test_without_feature_distance(self, tiny_cfg):
        cfg = _dg_cfg(tiny_cfg, consistency_weight=1.0)
        cfg = dataclasses.replace(cfg, fd=dataclasses.replace(cfg.fd, enabled=False))
        total = dg_objective(torch.tensor(1.0), torch.tensor(2.0), torch.tensor(0.5),
                             torch.tensor(4.0), cfg)
        assert float(total) == pytest.approx(3.5)


class TestDgStep:
    """Tests de dg_step."""

    def _run(self, cfg, sources, seed=0):
        bundle = build_model_bundle(cfg.encoder, cfg.decoder, 7, seed=0)
        optimizer = build_optimizer(bundle.student, cfg.optimizer)
        losses = dg_step(bundle, optimizer, sources, cfg, FLAGS, np.random.default_rng(seed))
        return bundle, losses

    def test_losses_reported(self, tiny_cfg, toy_source):
        bundle, losses = self._run(_dg_cfg(tiny_cfg), toy_source[:2])
        assert set(losses) == {"L_S", "L_S_stylized", "L_consistency", "L_FD"}
        assert all(np.isfinite(v) for v in losses.values())
        assert losses["L_consistency"] >= -1e-7
        assert bundle.step == 1

    def test_zero_ranges_consistent(self, tiny_cfg, toy_source):
        """Sin estilizado las dos vistas coinciden: consistencia nula y misma pérdida."""
        cfg = _dg_cfg(tiny_cfg, brightness=0.0, contrast=0.0, saturation=0.0, hue=0.0)
        _, losses = self._run(cfg, toy_source[:2])
        assert losses["L_consistency"] == pytest.approx(0.0, abs=1e-6)
        assert losses["L_S_stylized"] == pytest.approx(losses["L_S"], rel=1e-5)

    def test_reproducible(self, tiny_cfg):
        cfg = _dg_cfg(tiny_cfg)
        sources = generate_toy_dataset(cfg.toy, count=2)
        _, a = self._run(cfg, sources, seed=4)
        _, b = self._run(cfg, sources, seed=4)
        assert a == b

    def test_teacher_untouched(self, tiny_cfg, toy_source):
        cfg = _dg_cfg(tiny_cfg)
        bundle = build_model_bundle(cfg.encoder, cfg.decoder, 7, seed=0)
        before = {k: v.clone() for k, v in bundle.teacher.state_dict().items()}
        optimizer = build_optimizer(bundle.student, cfg.optimizer)
        dg_step(bundle, optimizer, toy_source[:2], cfg, FLAGS, np.random.default_rng(0))
        for k, v in bundle.teacher.state_dict().items():
            assert torch.equal(v, before[k])

    def test_feature_distance_on_thing_dominated_source(self, tiny_cfg):
        cfg = _dg_cfg(tiny_cfg)
        bundle = build_model_bundle(cfg.encoder, cfg.decoder, 7, seed=0)
        with torch.no_grad():
            for p in bundle.student.encoder.parameters():
                p.add_(0.05)
        optimizer = build_optimizer(bundle.student, cfg.optimizer)
        sources = [Sample(image=torch.rand(3, 64, 64), label=torch.full((64, 64), 5),
                          domain=Domain.SOURCE, id=f"p{i}") for i in range(2)]
        losses = dg_step(bundle, optimizer, sources, cfg, FLAGS, np.random.default_rng(0))
        assert losses["L_FD"] > 0.0
