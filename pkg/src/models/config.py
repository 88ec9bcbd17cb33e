"""
Modelos de configuración del entrenamiento.

Todas las clases son dataclasses con ``from_dict`` / ``to_dict``. Los valores
por defecto de los campos son los de escala completa; los valores de
escritorio viven en ``src/data/default_config.json``.
"""

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from src.models.crop import CropSpec


class ConfigError(ValueError):
    """Configuración inválida o con claves desconocidas."""


def _build(cls, d: dict):
    """Construye la dataclass *cls* desde *d*, recursivamente para los campos anidados."""
    if not isinstance(d, dict):
        raise ConfigError(f"Se esperaba un diccionario para {cls.__name__}, recibido {d!r}")
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(d) - set(known))
    if unknown:
        raise ConfigError(f"Claves desconocidas en {cls.__name__}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in d.items():
        default = getattr(cls(), name) if _has_default(known[name]) else None
        if hasattr(default, "from_dict"):
            kwargs[name] = type(default).from_dict(value)
        elif isinstance(default, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def _has_default(f: dataclasses.Field) -> bool:
    return (f.default is not dataclasses.MISSING
            or f.default_factory is not dataclasses.MISSING)


def _to_dict(obj) -> dict:
    out = {}
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if hasattr(value, "to_dict"):
            out[f.name] = value.to_dict()
        elif isinstance(value, tuple):
            out[f.name] = list(value)
        else:
            out[f.name] = value
    return out


class _ConfigMixin:
    @classmethod
    def from_dict(cls, d: dict):
        """Crea una instancia desde un diccionario (claves faltantes usan valores por defecto)."""
        return _build(cls, d)

    def to_dict(self) -> dict:
        """Convierte la instancia a diccionario."""
        return _to_dict(self)


# ── Dominio sintético ────────────────────────────────────────────────


@dataclass
class ShiftConfig(_ConfigMixin):
    """Cambio de apariencia fuente → objetivo (solo afecta a la imagen)."""

    hue_rotation: float = 0.0  # grados
    noise_std: float = 0.0
    texture_frequency: float = 0.0  # ciclos por píxel
    texture_amplitude: float = 0.15

    def is_identity(self) -> bool:
        return (self.hue_rotation % 360.0 == 0.0 and self.noise_std == 0.0
                and self.texture_frequency == 0.0)


@dataclass
class ToyDomainConfig(_ConfigMixin):
    """Generador procedural de escenas: bandas *stuff* + formas *thing*."""

    height: int = 128
    width: int = 128
    num_classes: int = 7
    num_stuff: int = 4
    shape_count: Tuple[int, int] = (1, 4)
    thing_size: Tuple[float, float] = (0.12, 0.36)  # lado de cada forma como fracción del lienzo
    band_jitter: float = 0.08
    thing_rarity: float = 0.45  # cada clase thing es esta fracción de probable que la anterior
    num_samples: int = 200
    val_samples: int = 40
    seed: int = 0
    domain: str = "source"
    shift: ShiftConfig = field(default_factory=ShiftConfig)

    def validate(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ConfigError(
                f"Lienzo inválido {self.height}x{self.width}: las dimensiones deben ser positivas"
            )
        if self.num_classes < 1 or not 1 <= self.num_stuff <= self.num_classes:
            raise ConfigError(
                f"num_stuff={self.num_stuff} debe estar entre 1 y num_classes={self.num_classes}"
            )
        lo, hi = self.shape_count
        if lo < 0 or hi < lo:
            raise ConfigError(f"Rango shape_count inválido: {self.shape_count}")
        lo_s, hi_s = self.thing_size
        if not 0 < lo_s <= hi_s <= 1:
            raise ConfigError(f"Rango thing_size inválido: {self.thing_size}")
        if self.domain not in ("source", "target"):
            raise ConfigError(f"Dominio desconocido: {self.domain}")


# ── Muestreo ─────────────────────────────────────────────────────────


@dataclass
class RcsConfig(_ConfigMixin):
    """Rare Class Sampling. ``temperature=inf`` equivale a muestreo balanceado por clase."""

    temperature: float = 0.01
    enabled: bool = True

    def validate(self) -> None:
        if not self.temperature > 0:
            raise ConfigError(f"La temperatura RCS debe ser > 0 (T={self.temperature})")


# ── Red ──────────────────────────────────────────────────────────────


@dataclass
class EncoderConfig(_ConfigMixin):
    variant: str = "mix_transformer_tiny"
    channels: List[int] = field(default_factory=lambda: [64, 128, 320, 512])
    patch_size: int = 4
    strides: List[int] = field(default_factory=lambda: [4, 8, 16, 32])
    sr_ratios: List[int] = field(default_factory=lambda: [8, 4, 2, 1])
    num_heads: List[int] = field(default_factory=lambda: [1, 2, 5, 8])
    depths: List[int] = field(default_factory=lambda: [1, 1, 1, 1])
    mlp_ratio: int = 4

    def validate(self) -> None:
        if self.variant not in ("mix_transformer_tiny", "conv_baseline"):
            raise ConfigError(f"Variante de encoder desconocida: {self.variant}")
        if len(self.channels) != 4 or any(
            b <= a for a, b in zip(self.channels, self.channels[1:])
        ):
            raise ConfigError(
                f"channels debe tener 4 valores estrictamente crecientes: {self.channels}"
            )
        if list(self.strides) != [2 ** (i + 2) for i in range(4)]:
            raise ConfigError(f"Los strides deben ser [4, 8, 16, 32]: {self.strides}")
        if self.patch_size != self.strides[0]:
            raise ConfigError("patch_size debe coincidir con el stride de la primera etapa")
        for c, heads in zip(self.channels, self.num_heads):
            if c % heads:
                raise ConfigError(f"{c} canales no son divisibles entre {heads} cabezas")


@dataclass
class DecoderConfig(_ConfigMixin):
    variant: str = "daformer"
    embed_channels: int = 256
    dilation_rates: List[int] = field(default_factory=lambda: [1, 6, 12, 18])
    use_depthwise_separable: bool = True
    attention_channels: int = 256

    def validate(self) -> None:
        if self.variant not in ("daformer", "segformer_mlp", "context_f4"):
            raise ConfigError(f"Variante de decoder desconocida: {self.variant}")
        if len(self.dilation_rates) < 2:
            raise ConfigError("Se necesitan al menos dos tasas de dilatación")
        if self.embed_channels <= 0 or self.attention_channels <= 0:
            raise ConfigError("embed_channels y attention_channels deben ser > 0")


# ── Pérdidas y auto-entrenamiento ────────────────────────────────────


@dataclass
class FdConfig(_ConfigMixin):
    """Distancia de características en clases *thing*."""

    r: float = 0.75
    lambda_fd: float = 0.005
    enabled: bool = True
    things_only: bool = True

    def validate(self) -> None:
        if not 0 < self.r <= 1:
            raise ConfigError(f"r debe estar en (0, 1] (r={self.r})")
        if self.lambda_fd < 0:
            raise ConfigError(f"lambda_fd debe ser >= 0 ({self.lambda_fd})")


@dataclass
class SelfTrainConfig(_ConfigMixin):
    alpha: float = 0.999
    tau: float = 0.968
    edge_ignore_top: int = 15
    edge_ignore_bottom: int = 120
    edge_reference_height: int = 1024
    color_jitter_strength: float = 0.2
    color_jitter_probability: float = 0.2
    blur: bool = True
    blur_probability: float = 0.5
    blur_sigma: Tuple[float, float] = (0.15, 1.15)

    def validate(self) -> None:
        if not 0 <= self.alpha <= 1:
            raise ConfigError(f"alpha debe estar en [0, 1] ({self.alpha})")
        if not 0 < self.tau < 1:
            raise ConfigError(f"tau debe estar en (0, 1) ({self.tau})")
        if self.edge_ignore_top + self.edge_ignore_bottom >= self.edge_reference_height:
            raise ConfigError("Las bandas de borde ignoradas cubren toda la imagen")

    def edge_bands(self, height: int) -> Tuple[int, int]:
        """Bandas (superior, inferior) escaladas a la altura real: ``round(band · H / H_ref)``."""
        scale = height / self.edge_reference_height
        return round(self.edge_ignore_top * scale), round(self.edge_ignore_bottom * scale)


@dataclass
class DgConfig(_ConfigMixin):
    brightness: float = 0.3
    contrast: float = 0.3
    saturation: float = 0.3
    hue: float = 0.1
    consistency_weight: float = 10.0
    enabled: bool = True

    def validate(self) -> None:
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ConfigError(f"El rango {name} debe ser >= 0")
        if self.hue > 0.5:
            raise ConfigError(f"El rango de tono debe ser <= 0.5 ({self.hue})")


@dataclass
class HrdaConfig(_ConfigMixin):
    enabled: bool = True
    attention_mode: str = "learned"  # learned | average
    overlap_pseudo_labels: bool = True
    detail_loss_weight: float = 0.1
    interpolation: str = "bilinear"  # bilinear | nearest
    crop: CropSpec = field(default_factory=lambda: CropSpec(512, 512, 512, 512, 2, 4))

    def validate(self) -> None:
        if self.attention_mode not in ("learned", "average"):
            raise ConfigError(f"attention_mode desconocido: {self.attention_mode}")
        if self.interpolation not in ("bilinear", "nearest"):
            raise ConfigError(f"interpolation desconocida: {self.interpolation}")
        if not 0 <= self.detail_loss_weight <= 1:
            raise ConfigError("detail_loss_weight debe estar en [0, 1]")
        try:
            self.crop.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


# ── Optimización y entrenamiento ─────────────────────────────────────


@dataclass
class OptimizerConfig(_ConfigMixin):
    lr: float = 6e-5
    decoder_lr_mult: float = 10.0
    weight_decay: float = 0.01
    betas: Tuple[float, float] = (0.9, 0.999)
    warmup: bool = True
    t_warm: int = 1500


@dataclass
class DataConfig(_ConfigMixin):
    """Rutas de datos; vacías ⇒ se genera el par sintético desde ``toy``."""

    source_dir: str = ""
    target_dir: str = ""
    val_dir: str = ""
    reference_checkpoint: str = ""  # segmentador del que se toma el encoder de referencia


TRAIN_MODES = ("uda", "dg", "source_only", "oracle")


@dataclass
class TrainConfig(_ConfigMixin):
    mode: str = "uda"
    total_iters: int = 40000
    batch_size: int = 2
    seed: int = 0
    deterministic: bool = True
    eval_interval: int = 4000
    checkpoint_interval: int = 4000
    log_interval: int = 50
    run_dir: str = ""
    data: DataConfig = field(default_factory=DataConfig)
    toy: ToyDomainConfig = field(default_factory=ToyDomainConfig)
    rcs: RcsConfig = field(default_factory=RcsConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    fd: FdConfig = field(default_factory=FdConfig)
    selftrain: SelfTrainConfig = field(default_factory=SelfTrainConfig)
    dg: DgConfig = field(default_factory=DgConfig)
    hrda: HrdaConfig = field(default_factory=HrdaConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def validate(self) -> None:
        """Valida la configuración completa; lanza ConfigError con el primer problema."""
        if self.mode not in TRAIN_MODES:
            raise ConfigError(f"Modo desconocido '{self.mode}'; use uno de {TRAIN_MODES}")
        if self.total_iters <= 0 or self.batch_size <= 0:
            raise ConfigError("total_iters y batch_size deben ser positivos")
        if self.optimizer.lr <= 0 or self.optimizer.decoder_lr_mult <= 0:
            raise ConfigError("Las tasas de aprendizaje deben ser positivas")
        if self.optimizer.warmup and not 0 < self.optimizer.t_warm < self.total_iters:
            raise ConfigError(
                f"t_warm={self.optimizer.t_warm} debe ser > 0 y < total_iters={self.total_iters}"
            )
        for sub in (self.toy, self.rcs, self.encoder, self.decoder, self.fd,
                    self.selftrain, self.dg, self.hrda):
            sub.validate()
        if self.hrda.crop.h_c % 32 or self.hrda.crop.w_c % 32 or \
                self.hrda.crop.h_d % 32 or self.hrda.crop.w_d % 32:
            raise ConfigError("Los tamaños de recorte deben ser múltiplos de 32 (stride del encoder)")
        if self.hrda.crop.o != 4:
            raise ConfigError("El stride de salida del segmentador es 4")


def flatten(d: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    """Aplana un diccionario anidado a claves con puntos (``"rcs.temperature"``)."""
    flat: Dict[str, Any] = {}
    for key, value in d.items():
        full = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten(value, full + "."))
        else:
            flat[full] = value
    return flat


def unflatten(flat: Dict[str, Any]) -> Dict[str, Any]:
    """Operación inversa de :func:`flatten`."""
    nested: Dict[str, Any] = {}
    for key, value in flat.items():
        node = nested
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"La clave '{key}' choca con un valor escalar")
        node[parts[-1]] = value
    return nested
