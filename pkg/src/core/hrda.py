"""
Entrenamiento e inferencia multi-resolución.

Un recorte de contexto grande se procesa reducido por ``s`` y un recorte de
detalle, tomado dentro del contexto, a resolución completa. Ambas
predicciones se combinan con una atención de escala aprendida::

    fused = ζ((1 − a') · y_c, s) + ζ(a', s) · y'_d

donde ``a'`` es la atención anulada fuera de la caja de detalle e ``y'_d`` la
predicción de detalle rellenada con ceros. La fusión trabaja siempre sobre
probabilidades softmax.

Convenciones de coordenadas: las cajas son ``(y1, y2, x1, x2)``; la caja de
contexto está en píxeles de la imagen completa y la de detalle en píxeles del
recorte de contexto a alta resolución. Todas son múltiplos de ``u = s · o``.
"""

import logging
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from src.core.losses import LossValue, weighted_cross_entropy
from src.core.pseudo_label import make_pseudo_label
from src.core.resize import resize_bilinear, resize_to
from src.models.config import HrdaConfig, SelfTrainConfig
from src.models.crop import Box, CropPair, CropSpec
from src.models.pseudo_label import PseudoLabel

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Geometría de ventanas y recortes
# ---------------------------------------------------------------------------

def window_origins(length: int, window: int, stride: int) -> List[int]:
    """Orígenes de ventanas deslizantes sobre un eje.

    La última ventana se ajusta al borde (``length − window``) si el stride no
    cubre el eje exactamente.
    """
    if window > length:
        raise ValueError(f"La ventana {window} es mayor que la imagen {length}")
    if stride <= 0:
        raise ValueError(f"El stride debe ser positivo (stride={stride})")
    origins = list(range(0, length - window + 1, stride))
    if origins[-1] + window < length:
        origins.append(length - window)
    return origins


def coverage_counts(size: Tuple[int, int], window: Tuple[int, int],
                    stride: Tuple[int, int]) -> torch.Tensor:
    """Número de ventanas que cubren cada píxel."""
    counts = torch.zeros(size, dtype=torch.int64)
    for y in window_origins(size[0], window[0], stride[0]):
        for x in window_origins(size[1], window[1], stride[1]):
            counts[y:y + window[0], x:x + window[1]] += 1
    return counts


def sample_detail_box(spec: CropSpec, rng: np.random.Generator) -> Box:
    """Caja de detalle aleatoria dentro del contexto HR, alineada a ``u``."""
    hr_h, hr_w = spec.context_hr_size
    u = spec.u
    y1 = int(rng.integers(0, (hr_h - spec.h_d) // u + 1)) * u
    x1 = int(rng.integers(0, (hr_w - spec.w_d) // u + 1)) * u
    return y1, y1 + spec.h_d, x1, x1 + spec.w_d


def crop_pair_from_context(context_hr: torch.Tensor, box_context: Box, box_detail: Box,
                           spec: CropSpec, label_context_hr: Optional[torch.Tensor] = None,
                           mode: str = "bilinear") -> CropPair:
    """Construye el par de recortes a partir de un contexto HR ya recortado."""
    y1, y2, x1, x2 = box_detail
    return CropPair(
        box_context=box_context,
        context_hr=context_hr,
        context=resize_bilinear(context_hr, Fraction(1, spec.s), mode),
        box_detail=box_detail,
        detail=context_hr[..., y1:y2, x1:x2].clone(),
        label_context_hr=label_context_hr,
        label_detail=None if label_context_hr is None
        else label_context_hr[..., y1:y2, x1:x2].clone(),
    )


def sample_crops(image: torch.Tensor, spec: CropSpec, rng: np.random.Generator,
                 label: Optional[torch.Tensor] = None, mode: str = "bilinear") -> CropPair:
    """Muestrea un recorte de contexto y uno de detalle de una imagen HR ``(3, H, W)``.

    Raises:
        ValueError: Si la imagen es menor que el recorte de contexto HR.
    """
    spec.validate()
    h, w = image.shape[-2:]
    hr_h, hr_w = spec.context_hr_size
    if h < hr_h or w < hr_w:
        raise ValueError(
            f"La imagen {h}x{w} es menor que el recorte de contexto {hr_h}x{hr_w}"
        )
    u = spec.u
    cy = int(rng.integers(0, (h - hr_h) // u + 1)) * u
    cx = int(rng.integers(0, (w - hr_w) // u + 1)) * u
    box_context = (cy, cy + hr_h, cx, cx + hr_w)
    context_hr = image[..., cy:cy + hr_h, cx:cx + hr_w].clone()
    label_hr = None if label is None else label[..., cy:cy + hr_h, cx:cx + hr_w].clone()
    return crop_pair_from_context(context_hr, box_context, sample_detail_box(spec, rng),
                                  spec, label_hr, mode)


# ---------------------------------------------------------------------------
# Fusión y pérdidas
# ---------------------------------------------------------------------------

def fuse_predictions(y_c: torch.Tensor, y_d: torch.Tensor, attention: torch.Tensor,
                     box_detail: Box, spec: CropSpec, mode: str = "bilinear") -> torch.Tensor:
    """Fusiona contexto ``(K, h_c/o, w_c/o)`` y detalle ``(K, h_d/o, w_d/o)``.

    Args:
        attention: Atención ``(h_c/o, w_c/o)`` en [0, 1] sobre la rejilla del contexto.
        box_detail: Caja del detalle en píxeles del contexto HR, múltiplos de ``u``.

    Returns:
        Predicción fusionada ``(K, s·h_c/o, s·w_c/o)``.
    """
    s, o, u = spec.s, spec.o, spec.u
    hc, wc = y_c.shape[-2:]
    if tuple(attention.shape[-2:]) != (hc, wc):
        raise ValueError(
            f"Atención {tuple(attention.shape)} incompatible con el contexto {(hc, wc)}"
        )
    if tuple(y_d.shape[-2:]) != (spec.h_d // o, spec.w_d // o):
        raise ValueError(
            f"Detalle {tuple(y_d.shape)} incompatible con h_d/o x w_d/o "
            f"= {spec.h_d // o}x{spec.w_d // o}"
        )
    y1, y2, x1, x2 = box_detail
    if any(v % u for v in box_detail):
        raise ValueError(f"La caja de detalle {box_detail} no está alineada a u={u}")
    out_h, out_w = s * hc, s * wc
    if y2 // o > out_h or x2 // o > out_w:
        raise ValueError(f"La caja de detalle {box_detail} sale del contexto")

    detail_mask = torch.zeros((hc, wc), dtype=attention.dtype, device=attention.device)
    detail_mask[y1 // u:y2 // u, x1 // u:x2 // u] = 1.0
    a_masked = attention * detail_mask

    y_d_pad = F.pad(y_d, (x1 // o, out_w - x2 // o, y1 // o, out_h - y2 // o))
    context_term = resize_bilinear((1.0 - a_masked) * y_c, s, mode)
    return context_term + resize_bilinear(a_masked, s, mode) * y_d_pad


def hrda_loss(fused: torch.Tensor, y_d_pred: Optional[torch.Tensor], labels_hr: torch.Tensor,
              labels_detail: Optional[torch.Tensor], detail_weight: float,
              quality=1.0, quality_detail=1.0, mode: str = "bilinear") -> LossValue:
    """``(1 − λ_d)·CE(fused, y_HR, q) + λ_d·CE(y_d, y_detail, q_d)`` sobre probabilidades.

    Las predicciones se suben al tamaño de su etiqueta antes de la entropía
    cruzada. Sin predicción de detalle (modo solo contexto) se usa únicamente el
    primer término.
    """
    fused_up = resize_to(fused, tuple(labels_hr.shape[-2:]), mode)
    main = weighted_cross_entropy(fused_up, labels_hr, quality, probabilities=True)
    if y_d_pred is None or detail_weight == 0.0:
        return main
    detail_up = resize_to(y_d_pred, tuple(labels_detail.shape[-2:]), mode)
    detail = weighted_cross_entropy(detail_up, labels_detail, quality_detail,
                                    probabilities=True)
    if detail_weight == 1.0:
        return detail
    value = (1.0 - detail_weight) * main.value + detail_weight * detail.value
    return LossValue(value, main.is_empty and detail.is_empty)


def hrda_source_loss(fused: torch.Tensor, y_d_pred: Optional[torch.Tensor],
                     labels_hr: torch.Tensor, labels_detail: Optional[torch.Tensor],
                     detail_weight: float, mode: str = "bilinear") -> LossValue:
    """Pérdida supervisada del dominio fuente (calidad 1 en todos los píxeles)."""
    return hrda_loss(fused, y_d_pred, labels_hr, labels_detail, detail_weight, mode=mode)


# ---------------------------------------------------------------------------
# Pasadas hacia delante
# ---------------------------------------------------------------------------

def scale_attention(raw: torch.Tensor, hrda: HrdaConfig) -> torch.Tensor:
    """Atención aprendida o fija a 0.5 (promedio simple de escalas)."""
    if hrda.attention_mode == "average":
        return torch.full_like(raw, 0.5)
    return raw


def forward_crops(model: nn.Module, pairs: List[CropPair], spec: CropSpec,
                  hrda: HrdaConfig):
    """Pasada del alumno sobre un lote de pares de recortes.

    Returns:
        Tupla ``(fused, y_d, features)``: probabilidades fusionadas
        ``(N, K, s·h_c/o, s·w_c/o)``, probabilidades de detalle
        ``(N, K, h_d/o, w_d/o)`` (None sin HRDA) y la pirámide del contexto.
    """
    contexts = torch.stack([p.context for p in pairs])
    logits_c, att_c, features = model(contexts)
    y_c = logits_c.softmax(dim=1)
    if not hrda.enabled:
        return resize_bilinear(y_c, spec.s, hrda.interpolation), None, features

    details = torch.stack([p.detail for p in pairs])
    logits_d, _, _ = model(details)
    y_d = logits_d.softmax(dim=1)
    att = scale_attention(att_c[:, 0], hrda)
    fused = torch.stack([
        fuse_predictions(y_c[n], y_d[n], att[n], p.box_detail, spec, hrda.interpolation)
        for n, p in enumerate(pairs)
    ])
    return fused, y_d, features


def _hr_window_prediction(model: nn.Module, context_hr: torch.Tensor, spec: CropSpec,
                          hrda: HrdaConfig) -> torch.Tensor:
    """Predicción HR del contexto con ventanas de detalle, promediando solapes."""
    o = spec.o
    hr_h, hr_w = context_hr.shape[-2:]
    if hrda.overlap_pseudo_labels:
        stride = (spec.h_d // 2, spec.w_d // 2)
    else:
        stride = (spec.h_d, spec.w_d)
    ys = window_origins(hr_h, spec.h_d, stride[0])
    xs = window_origins(hr_w, spec.w_d, stride[1])
    if any(v % o for v in ys + xs):
        raise ValueError(f"Los orígenes de ventana deben ser múltiplos de o={o}")

    windows = torch.stack([context_hr[:, y:y + spec.h_d, x:x + spec.w_d]
                           for y in ys for x in xs])
    logits, _, _ = model(windows)
    probs = logits.softmax(dim=1)

    acc = torch.zeros((probs.shape[1], hr_h // o, hr_w // o), dtype=probs.dtype,
                      device=probs.device)
    count = torch.zeros((1, hr_h // o, hr_w // o), dtype=probs.dtype, device=probs.device)
    i = 0
    for y in ys:
        for x in xs:
            acc[:, y // o:(y + spec.h_d) // o, x // o:(x + spec.w_d) // o] += probs[i]
            count[:, y // o:(y + spec.h_d) // o, x // o:(x + spec.w_d) // o] += 1.0
            i += 1
    return acc / count


@torch.no_grad()
def predict_context(model: nn.Module, context_hr: torch.Tensor, spec: CropSpec,
                    hrda: HrdaConfig) -> torch.Tensor:
    """Probabilidades fusionadas ``(K, s·h_c/o, s·w_c/o)`` de un contexto HR.

    Sin HRDA es la predicción del contexto reducido subida ``×s``; con HRDA se
    fusiona con la predicción por ventanas usando la atención completa, sin
    enmascarar fuera de ninguna caja de detalle.
    """
    mode = hrda.interpolation
    context = resize_bilinear(context_hr, Fraction(1, spec.s), mode)
    logits_c, att_c, _ = model(context.unsqueeze(0))
    y_c = logits_c[0].softmax(dim=0)
    if not hrda.enabled:
        return resize_bilinear(y_c, spec.s, mode)
    a = scale_attention(att_c[0], hrda)
    y_hr = _hr_window_prediction(model, context_hr, spec, hrda)
    return resize_bilinear((1.0 - a) * y_c, spec.s, mode) + resize_bilinear(a, spec.s, mode) * y_hr


def pseudo_label_context(model: nn.Module, context_hr: torch.Tensor, spec: CropSpec,
                         hrda: HrdaConfig, selftrain: SelfTrainConfig,
                         box_context: Optional[Box] = None,
                         canvas_height: Optional[int] = None) -> Tuple[torch.Tensor, PseudoLabel]:
    """Probabilidades fusionadas del profesor y pseudo-etiqueta a resolución de píxel.

    Con *box_context* y *canvas_height* las bandas de borde se aplican a las
    filas del recorte que caen en los bordes de la imagen completa.
    """
    fused = predict_context(model, context_hr, spec, hrda)
    probs = resize_bilinear(fused, spec.o, hrda.interpolation)
    row_offset = box_context[0] if box_context is not None else 0
    return fused, make_pseudo_label(probs, selftrain.tau, selftrain, canvas_height, row_offset)


@torch.no_grad()
def slide_inference(model: nn.Module, image: torch.Tensor, spec: CropSpec,
                    hrda: HrdaConfig) -> torch.Tensor:
    """Probabilidades ``(K, H, W)`` de una imagen completa con ventanas ``s·h_c × s·w_c``.

    Las ventanas avanzan la mitad de su tamaño y se ajustan al borde; los
    solapes se promedian en orden fijo.

    Raises:
        ValueError: Si la imagen es menor que la ventana.
    """
    o = spec.o
    h, w = image.shape[-2:]
    win_h, win_w = spec.context_hr_size
    if h < win_h or w < win_w:
        raise ValueError(f"La imagen {h}x{w} es menor que la ventana {win_h}x{win_w}")
    if h % o or w % o:
        raise ValueError(f"El tamaño {h}x{w} debe ser múltiplo de o={o}")
    ys = window_origins(h, win_h, win_h // 2)
    xs = window_origins(w, win_w, win_w // 2)

    acc = None
    count = torch.zeros((1, h // o, w // o), dtype=image.dtype, device=image.device)
    for y in ys:
        for x in xs:
            fused = predict_context(model, image[:, y:y + win_h, x:x + win_w], spec, hrda)
            if acc is None:
                acc = torch.zeros((fused.shape[0], h // o, w // o), dtype=fused.dtype,
                                  device=fused.device)
            acc[:, y // o:(y + win_h) // o, x // o:(x + win_w) // o] += fused
            count[:, y // o:(y + win_h) // o, x // o:(x + win_w) // o] += 1.0
    return resize_bilinear(acc / count, o, hrda.interpolation)
