"""
Tests de la red de segmentación y del profesor EMA.

Cubren:
- Contrato de formas de la pirámide y de las cabezas
- Atención de escala en (0, 1)
- Gradientes frente a diferencias finitas (float64)
- Actualización EMA y su forma cerrada
"""

import copy

import pytest
import torch
import torch.nn as nn

from src.core.network import build_model_bundle, build_segmentor, ema_update
from src.core.network.decoders import DilatedFusion
from src.models.config import DecoderConfig, EncoderConfig


def _n_params(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters())


class TestEncoder:
    """Tests del contrato de formas del encoder."""

    def test_desk_pyramid_shapes(self, desk_encoder, desk_decoder):
        """Entrada 64×64 con canales de escritorio."""
        model = build_segmentor(desk_encoder, desk_decoder, 7)
        feats = model.encode(torch.rand(1, 3, 64, 64))
        assert [tuple(f.shape[1:]) for f in feats] == [
            (8, 16, 16), (16, 8, 8), (32, 4, 4), (64, 2, 2)]

    def test_full_scale_bottleneck(self):
        """Entrada 512×512 con canales de escala completa: F_4 de 512×16×16."""
        model = build_segmentor(EncoderConfig(), DecoderConfig(), 19)
        with torch.no_grad():
            feats = model.encode(torch.rand(1, 3, 512, 512))
        assert tuple(feats[-1].shape) == (1, 512, 16, 16)

    def test_conv_baseline_shapes(self, desk_decoder):
        enc = EncoderConfig(variant="conv_baseline", channels=[8, 16, 32, 64],
                            num_heads=[1, 1, 2, 2])
        feats = build_segmentor(enc, desk_decoder, 3).encode(torch.rand(2, 3, 64, 96))
        assert [tuple(f.shape[-2:]) for f in feats] == [(16, 24), (8, 12), (4, 6), (2, 3)]

    def test_deterministic(self, desk_encoder, desk_decoder):
        model = build_segmentor(desk_encoder, desk_decoder, 7)
        x = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            a = model(x)[0]
            b = model(x)[0]
        assert torch.equal(a, b)

    def test_same_seed_same_weights(self, desk_encoder, desk_decoder):
        a = build_segmentor(desk_encoder, desk_decoder, 7, seed=3)
        b = build_segmentor(desk_encoder, desk_decoder, 7, seed=3)
        c = build_segmentor(desk_encoder, desk_decoder, 7, seed=4)
        for (name, pa), pb, pc in zip(a.state_dict().items(), b.state_dict().values(),
                                      c.state_dict().values()):
            assert torch.equal(pa, pb), name
        assert any(not torch.equal(pa, pc) for pa, pc in
                   zip(a.state_dict().values(), c.state_dict().values()))

    def test_indivisible_input_rejected(self, desk_encoder, desk_decoder):
        model = build_segmentor(desk_encoder, desk_decoder, 7)
        with pytest.raises(ValueError):
            model.encode(torch.rand(1, 3, 48, 32))


class TestDecoders:
    """Tests de las cabezas de segmentación y de atención."""

    @pytest.mark.parametrize("variant", ["daformer", "segformer_mlp", "context_f4"])
    def test_logits_stride_four(self, desk_encoder, variant):
        dec = DecoderConfig(variant=variant, embed_channels=32, attention_channels=32)
        logits, att, _ = build_segmentor(desk_encoder, dec, 5)(torch.rand(2, 3, 64, 64))
        assert tuple(logits.shape) == (2, 5, 16, 16)
        assert tuple(att.shape) == (2, 1, 16, 16)

    def test_single_class(self, desk_encoder, desk_decoder):
        """K=1: la softmax es 1 en todos los píxeles."""
        logits, _, _ = build_segmentor(desk_encoder, desk_decoder, 1)(torch.rand(1, 3, 32, 32))
        assert logits.shape[1] == 1
        assert torch.equal(logits.softmax(dim=1), torch.ones_like(logits))

    def test_separable_fusion_smaller(self):
        """La fusión depthwise-separable tiene menos parámetros que la densa."""
        rates = [1, 6, 12, 18]
        sep = DilatedFusion(4 * 32, 32, rates, depthwise_separable=True)
        dense = DilatedFusion(4 * 32, 32, rates, depthwise_separable=False)
        assert _n_params(sep) < _n_params(dense)
        # Ramas dilatadas: 3·(128·9 + 128·32 + 32) frente a 3·(128·32·9 + 32)
        assert _n_params(dense) - _n_params(sep) == 3 * (128 * 32 * 9 - 128 * 9 - 128 * 32)

    def test_attention_range(self, desk_encoder, desk_decoder):
        _, att, _ = build_segmentor(desk_encoder, desk_decoder, 7)(torch.rand(2, 3, 32, 64) * 5)
        assert float(att.min()) > 0.0 and float(att.max()) < 1.0

    def test_zero_attention_layer_gives_half(self, desk_encoder, desk_decoder):
        model = build_segmentor(desk_encoder, desk_decoder, 7)
        nn.init.zeros_(model.attention_head.classifier.weight)
        nn.init.zeros_(model.attention_head.classifier.bias)
        _, att, _ = model(torch.rand(1, 3, 32, 32))
        assert torch.equal(att, torch.full_like(att, 0.5))

    def test_mismatched_pyramid_rejected(self, desk_encoder, desk_decoder):
        model = build_segmentor(desk_encoder, desk_decoder, 7)
        feats = model.encode(torch.rand(1, 3, 64, 64))
        with pytest.raises(ValueError):
            model.decode_segmentation(feats[:3])
        with pytest.raises(ValueError):
            model.decode_attention([feats[0], feats[2], feats[2], feats[3]])

    def test_gradients_match_finite_differences(self, desk_encoder, desk_decoder):
        """Derivadas direccionales analíticas frente a diferencias centrales (float64)."""
        model = build_segmentor(desk_encoder, desk_decoder, 3).double()
        gen = torch.Generator().manual_seed(5)
        x = torch.rand(1, 3, 32, 32, dtype=torch.float64, generator=gen)
        w_logits = torch.randn(1, 3, 8, 8, dtype=torch.float64, generator=gen)
        w_att = torch.randn(1, 1, 8, 8, dtype=torch.float64, generator=gen)

        def loss_fn(inp):
            logits, att, _ = model(inp)
            return (logits * w_logits).sum() + (att * w_att).sum()

        params = [p for p in model.parameters()]
        x_req = x.clone().requires_grad_(True)
        loss = loss_fn(x_req)
        grads = torch.autograd.grad(loss, [x_req] + params)

        eps = 1e-6
        for _ in range(3):
            v_x = torch.randn(x.shape, dtype=torch.float64, generator=gen)
            v_p = [torch.randn(p.shape, dtype=torch.float64, generator=gen) for p in params]
            analytic = float((grads[0] * v_x).sum()
                             + sum((g * v).sum() for g, v in zip(grads[1:], v_p)))
            with torch.no_grad():
                for p, v in zip(params, v_p):
                    p.add_(v, alpha=eps)
                plus = float(loss_fn(x + eps * v_x))
                for p, v in zip(params, v_p):
                    p.add_(v, alpha=-2 * eps)
                minus = float(loss_fn(x - eps * v_x))
                for p, v in zip(params, v_p):
                    p.add_(v, alpha=eps)
            numeric = (plus - minus) / (2 * eps)
            assert abs(analytic - numeric) <= 1e-3 * max(abs(numeric), 1.0)


class TestEmaUpdate:
    """Tests de ema_update."""

    @staticmethod
    def _pair(phi: float, theta: float):
        teacher = nn.Linear(2, 2)
        student = nn.Linear(2, 2)
        with torch.no_grad():
            for p in teacher.parameters():
                p.fill_(phi)
            for p in student.parameters():
                p.fill_(theta)
        return teacher, student

    def test_alpha_zero_copies_student(self):
        teacher, student = self._pair(2.0, 4.0)
        ema_update(teacher, student, 0.0)
        assert all(torch.equal(t, s) for t, s in zip(teacher.parameters(), student.parameters()))

    def test_alpha_one_keeps_teacher(self):
        teacher, student = self._pair(2.0, 4.0)
        ema_update(teacher, student, 1.0)
        assert all(torch.all(p == 2.0) for p in teacher.parameters())

    def test_half(self):
        teacher, student = self._pair(2.0, 4.0)
        ema_update(teacher, student, 0.5)
        assert all(torch.all(p == 3.0) for p in teacher.parameters())

    @pytest.mark.parametrize("alpha", [0.0, 0.5, 0.9, 0.999, 1.0])
    def test_closed_form(self, alpha):
        """Tras t pasos con θ constante: φ_t = α^t·φ_0 + (1 − α^t)·θ."""
        teacher, student = self._pair(2.0, 4.0)
        teacher.double()
        student.double()
        steps = 25
        for _ in range(steps):
            ema_update(teacher, student, alpha)
        expected = alpha ** steps * 2.0 + (1 - alpha ** steps) * 4.0
        for p in teacher.parameters():
            assert torch.allclose(p, torch.full_like(p, expected), atol=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            ema_update(nn.Linear(2, 2), nn.Linear(2, 3), 0.5)

    def test_alpha_out_of_range(self):
        teacher, student = self._pair(0.0, 1.0)
        with pytest.raises(ValueError):
            ema_update(teacher, student, 1.5)


class TestModelBundle:
    def test_teacher_starts_as_student(self, tiny_bundle):
        for (name, s), t in zip(tiny_bundle.student.state_dict().items(),
                                tiny_bundle.teacher.state_dict().values()):
            assert torch.equal(s, t), name

    def test_teacher_and_reference_frozen(self, tiny_bundle):
        assert not any(p.requires_grad for p in tiny_bundle.teacher.parameters())
        assert not any(p.requires_grad for p in tiny_bundle.reference.parameters())
        assert all(p.requires_grad for p in tiny_bundle.student.parameters())

    def test_reference_from_state(self, tiny_cfg):
        other = build_segmentor(tiny_cfg.encoder, tiny_cfg.decoder, 7, seed=9)
        bundle = build_model_bundle(tiny_cfg.encoder, tiny_cfg.decoder, 7, seed=0,
                                    reference_state=copy.deepcopy(other.state_dict()))
        for a, b in zip(bundle.reference.state_dict().values(),
                        other.encoder.state_dict().values()):
            assert torch.equal(a, b)
