"""Model and training hyperparameters, presets, and key=value parsing."""

from __future__ import annotations

import dataclasses
import logging
import re
from dataclasses import dataclass, field, fields, replace
from typing import Any

log = logging.getLogger(__name__)

DECODER_MODES = ("three", "single")
FUSION_MODES = ("dpm", "add")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64
    channels: tuple[int, ...] = (8, 16, 32, 64, 128)
    ct: int = 16
    embed_dim: int = 32
    layers: int = 2
    heads: int = 4
    k: int = 3
    decoder: str = "three"
    fusion: str = "dpm"
    ttem: bool = True
    reduction: int = 4
    mlp_ratio: int = 4

    @property
    def lowest_level(self) -> int:
        """Index (1..5) of the finest level fed to the transformer."""
        return 5 - self.k + 1

    @property
    def aligned_size(self) -> int:
        return self.input_size // 2 ** self.lowest_level

    @property
    def tokens(self) -> int:
        return self.aligned_size ** 2

    def validate(self) -> "ModelConfig":
        if self.input_size <= 0 or self.input_size % 32:
            raise ConfigError(f"input_size must be a positive multiple of 32, got {self.input_size}")
        if len(self.channels) != 5:
            raise ConfigError(f"channels needs 5 entries, got {len(self.channels)}")
        if self.k not in (2, 3, 4):
            raise ConfigError(f"k must be 2, 3 or 4, got {self.k}")
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.decoder not in DECODER_MODES:
            raise ConfigError(f"decoder must be one of {DECODER_MODES}, got {self.decoder!r}")
        if self.fusion not in FUSION_MODES:
            raise ConfigError(f"fusion must be one of {FUSION_MODES}, got {self.fusion!r}")
        if self.fusion == "dpm" and min(self.channels) < self.reduction:
            raise ConfigError(f"every channel width must be >= reduction {self.reduction}: {self.channels}")
        if self.layers < 0 or self.ct <= 0 or self.embed_dim <= 0:
            raise ConfigError("layers, ct and embed_dim must be non-negative/positive")
        if self.k == 4 and self.tokens > 2048:
            log.warning("k=4 gives %d tokens per stream; attention memory grows as N^2", self.tokens)
        return self


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    batch: int = 4
    epochs: int = 150
    lr_decay_every: int = 60
    lr_decay_factor: float = 0.1
    seed: int = 0
    augment: bool = True
    ckpt_every: int = 1
    max_steps: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    loss_window: int = 31
    loss_gain: float = 5.0
    loss_smooth: float = 1.0
    model: ModelConfig = field(default_factory=ModelConfig)

    def lr_at(self, epoch: int) -> float:
        return self.lr * self.lr_decay_factor ** (epoch // self.lr_decay_every)

    def validate(self) -> "TrainConfig":
        self.model.validate()
        if self.batch < 1 or self.epochs < 0 or self.lr_decay_every < 1:
            raise ConfigError("batch >= 1, epochs >= 0 and lr_decay_every >= 1 required")
        if self.loss_window % 2 == 0:
            raise ConfigError(f"loss_window must be odd, got {self.loss_window}")
        return self


PRESETS: dict[str, TrainConfig] = {
    "paper": TrainConfig(
        lr=1e-5, batch=3, epochs=150, lr_decay_every=60,
        model=ModelConfig(input_size=256, channels=(64, 256, 512, 1024, 2048), ct=64,
                          embed_dim=768, layers=12, heads=12, k=3),
    ),
    "desk": TrainConfig(
        lr=2e-3, batch=4, epochs=150, lr_decay_every=60,
        model=ModelConfig(),
    ),
}


def preset(name: str) -> TrainConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


MODEL_KEYS = tuple(f.name for f in fields(ModelConfig))
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "model")


def _coerce(name: str, raw: Any, current: Any) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if isinstance(current, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(current, int):
            return int(text)
        if isinstance(current, float):
            return float(text)
        if isinstance(current, tuple):
            return tuple(int(v) for v in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return text


def apply_overrides(cfg: TrainConfig, values: dict[str, Any]) -> TrainConfig:
    """Return ``cfg`` with flat ``key -> value`` overrides applied.

    Keys come from both TrainConfig and ModelConfig; unknown keys raise.
    """
    model_kw, train_kw = {}, {}
    for key, raw in values.items():
        if key in MODEL_KEYS:
            model_kw[key] = _coerce(key, raw, getattr(cfg.model, key))
        elif key in TRAIN_KEYS:
            train_kw[key] = _coerce(key, raw, getattr(cfg, key))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return replace(cfg, model=replace(cfg.model, **model_kw), **train_kw)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        out[key] = val
    return out


def to_dict(cfg: TrainConfig) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def from_dict(d: dict[str, Any]) -> TrainConfig:
    d = dict(d)
    m = dict(d.pop("model"))
    m["channels"] = tuple(m["channels"])
    return TrainConfig(model=ModelConfig(**m), **d)


def _num(x: float) -> str:
    """``1e-05`` -> ``1e-5``."""
    return re.sub(r"e([+-])0+(\d)", r"e\1\2", f"{x:g}")


def describe(cfg: TrainConfig) -> str:
    m = cfg.model
    return (f"L={m.layers} D={m.embed_dim} N={m.tokens} heads={m.heads} k={m.k} "
            f"C_t={m.ct} channels={','.join(map(str, m.channels))} input={m.input_size} "
            f"decoder={m.decoder} fusion={m.fusion} ttem={'on' if m.ttem else 'off'} "
            f"lr {_num(cfg.lr)} batch {cfg.batch} epochs {cfg.epochs} "
            f"decay x{cfg.lr_decay_factor:g} every {cfg.lr_decay_every} epochs")
