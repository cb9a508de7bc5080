"""Configuration dataclasses and the JSON run-config schema."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

EMOTION_MODES = ("encoded", "sampled", "onehot")


@dataclass
class ModelConfig:
    n_joints: int = 16
    n_emotions: int = 4
    vocab_size: int = 64
    d_model: int = 64
    heads: int = 4
    depth: int = 3
    ff_width: int = 128
    dropout: float = 0.0
    n_frames: int = 60
    n_init: int = 10
    chunk: int = 10
    audio_channels: tuple = (8, 16, 32)
    prompt_mode: str = "stp"  # stp | duplicate | zero
    spatial_prompt: bool = True
    temporal_prompt: bool = True
    emotion_input: str = "ebm"  # ebm | onehot (concatenate one-hot label with audio features)
    disc_input: str = "offsets"  # offsets | poses
    disc_channels: int = 64

    @property
    def pose_dim(self) -> int:
        return self.n_joints * 6

    def validate(self):
        if self.d_model % self.heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by heads={self.heads}")
        if self.prompt_mode not in ("stp", "duplicate", "zero"):
            raise ConfigError(f"unknown prompt_mode {self.prompt_mode!r}")
        if self.emotion_input not in ("ebm", "onehot"):
            raise ConfigError(f"unknown emotion_input {self.emotion_input!r}")
        if self.disc_input not in ("offsets", "poses"):
            raise ConfigError(f"unknown disc_input {self.disc_input!r}")
        if not 0 < self.n_init < self.n_frames:
            raise ConfigError("need 0 < n_init < n_frames")
        return self


@dataclass
class LossWeights:
    rec: float = 100.0
    beat: float = 0.05
    emo: float = 0.1
    smooth: float = 0.5
    smooth_temperature: float = 10.0
    tau: float = 0.1

    def validate(self):
        for name in ("smooth_temperature", "tau"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("rec", "beat", "emo", "smooth"):
            if getattr(self, name) < 0:
                raise ConfigError(f"loss weight {name} must be >= 0")
        return self


@dataclass
class VAEConfig:
    latent: int = 32
    hidden: int = 256
    beta: float = 1.0
    epochs: int = 30
    lr: float = 1e-3
    batch_size: int = 64


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    lr: float = 2e-4
    betas: tuple = (0.5, 0.999)
    seed: int = 0
    d_steps: int = 1
    contrastive: str = "printed"  # printed | infonce
    adversarial: str = "nonsaturating"  # nonsaturating | minimax
    model: ModelConfig = field(default_factory=ModelConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    vae: VAEConfig = field(default_factory=VAEConfig)

    def validate(self):
        self.model.validate()
        self.weights.validate()
        if self.contrastive not in ("printed", "infonce"):
            raise ConfigError(f"unknown contrastive variant {self.contrastive!r}")
        if self.adversarial not in ("nonsaturating", "minimax"):
            raise ConfigError(f"unknown adversarial variant {self.adversarial!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.d_steps < 1:
            raise ConfigError("epochs, batch_size, d_steps must be >= 1 and lr > 0")
        return self


def paper_profile() -> TrainConfig:
    """Paper-scale sizes: D=512, 47 joints, 8 emotions, 100 epochs, batch 128."""
    return TrainConfig(
        model=ModelConfig(n_joints=47, n_emotions=8, d_model=512, heads=8, ff_width=1024,
                          audio_channels=(32, 64, 128)),
    )


def desk_profile(**overrides) -> TrainConfig:
    """CPU-minutes profile that keeps every shape relationship of the paper setup."""
    cfg = TrainConfig(epochs=30, batch_size=16, lr=1e-3,
                      model=ModelConfig(d_model=64, heads=4, depth=3))
    return merge(cfg, overrides)


# -- dict <-> dataclass ------------------------------------------------------


def to_dict(cfg) -> dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def _merge_into(obj, values: dict, path=""):
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in values.items():
        if key not in names:
            raise ConfigError(f"unknown config key '{path}{key}'")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            if not isinstance(value, dict):
                raise ConfigError(f"config key '{path}{key}' must be an object")
            _merge_into(current, value, f"{path}{key}.")
        else:
            if isinstance(current, tuple):
                value = tuple(value)
            elif isinstance(current, bool):
                if not isinstance(value, bool):
                    raise ConfigError(f"config key '{path}{key}' must be a boolean")
            elif isinstance(current, (int, float)) and not isinstance(value, (int, float)):
                raise ConfigError(f"config key '{path}{key}' must be numeric")
            elif isinstance(current, int) and isinstance(value, float):
                if not value.is_integer():
                    raise ConfigError(f"config key '{path}{key}' must be an integer")
                value = int(value)
            setattr(obj, key, value)


def merge(cfg, overrides: dict | None):
    cfg = dataclasses.replace(cfg)
    cfg.model = dataclasses.replace(cfg.model)
    cfg.weights = dataclasses.replace(cfg.weights)
    cfg.vae = dataclasses.replace(cfg.vae)
    if overrides:
        _merge_into(cfg, overrides)
    return cfg


def from_dict(values: dict, base: TrainConfig | None = None) -> TrainConfig:
    return merge(base or TrainConfig(), values).validate()


def load_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} does not exist") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data
