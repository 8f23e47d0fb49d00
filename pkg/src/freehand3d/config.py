"""Configuration records and the INI-style config file reader.

Config files are ``key = value`` lines grouped under ``[section]`` headers.
Every key must belong to a known field; unknown sections or keys are errors.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class NetConfig:
    image_size: tuple[int, int] = (32, 32)
    stem_channels: int = 8
    channels: tuple[int, ...] = (16, 32, 64)
    feature_dim: int = 64
    coarse_dim: int = 64
    d_state: int = 16
    expand: int = 2
    conv_kernel: int = 4
    heads: int = 4
    num_imus: int = 4
    use_imu: bool = True
    share_fine_directions: bool = False
    share_imu_embeddings: bool = True
    attn_positional: bool = True
    angle_input_scale: float = 1.0
    char_init_gain: float = 16.0

    @property
    def num_stages(self) -> int:
        return len(self.channels)

    def validate(self) -> None:
        h, w = self.image_size
        if h % 4 or w % 4:
            raise ConfigError(f"image size {self.image_size} must be divisible by the stem stride 4")
        div = 2**self.num_stages
        if (h // 4) % div or (w // 4) % div:
            raise ConfigError(f"post-stem size {(h // 4, w // 4)} not divisible by 2^{self.num_stages}")
        prev = self.stem_channels
        for c in self.channels:
            if c <= prev:
                raise ConfigError(f"channels must strictly increase, got stem {self.stem_channels} then {self.channels}")
            prev = c
        if self.feature_dim % self.heads:
            raise ConfigError(f"feature_dim {self.feature_dim} not divisible by heads {self.heads}")
        if self.num_imus < 1:
            raise ConfigError("num_imus must be >= 1")
        if self.angle_input_scale <= 0 or self.char_init_gain <= 0:
            raise ConfigError("angle_input_scale and char_init_gain must be positive")


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 1
    lr: float = 2e-4
    lr_halving_interval: int = 30
    seed: int = 0
    grad_clip: float = 1.0
    all_losses: bool = False
    tau: float = 0.1
    per_axis_pearson: bool = False
    normalize_align: bool = False
    augment: bool = True
    crop_min: int = 16
    reverse_prob: float = 0.0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0 or self.lr_halving_interval < 1:
            raise ConfigError("training values must be positive")
        if self.batch_size != 1:
            raise ConfigError("only batch_size = 1 is supported (scans have different lengths)")


@dataclass
class AdaptConfig:
    iterations: int = 60
    lr: float = 2e-6
    tau: float = 0.1
    normalize_align: bool = False

    def validate(self) -> None:
        if self.iterations < 0 or self.lr <= 0 or self.tau <= 0:
            raise ConfigError("adaptation values must be positive")


@dataclass
class DataConfig:
    num_scans: int = 40
    split: tuple[float, float, float] = (0.6, 0.2, 0.2)
    n_frames_min: int = 16
    n_frames_max: int = 48
    image_size: tuple[int, int] = (32, 32)
    spacing: tuple[float, float] = (0.15, 0.15)
    num_imus: int = 4
    tactics: tuple[str, ...] = ("linear", "curved", "loop", "sector")
    step_mm: float = 0.25
    phantom_size_mm: float = 24.0
    voxel_mm: float = 0.3
    angle_sigma: float = 0.3
    angle_bias: float = 0.05
    accel_sigma: float = 0.02
    noise_spread: float = 2.0
    train_corrupt_prob: float = 0.5
    corrupt_factor: float = 10.0
    raw_rate: int = 4

    def validate(self) -> None:
        if self.num_scans < 1 or self.n_frames_min < 2 or self.n_frames_max < self.n_frames_min:
            raise ConfigError("invalid scan counts or lengths")
        if abs(sum(self.split) - 1.0) > 1e-9 or any(s < 0 for s in self.split):
            raise ConfigError(f"split {self.split} must be non-negative and sum to 1")
        if self.step_mm <= 0 or self.voxel_mm <= 0 or min(self.spacing) <= 0:
            raise ConfigError("geometry values must be positive")


@dataclass
class PipelineConfig:
    data: DataConfig = field(default_factory=DataConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    adapt: AdaptConfig = field(default_factory=AdaptConfig)

    def validate(self) -> None:
        for part in (self.data, self.net, self.train, self.adapt):
            part.validate()


_SECTIONS = {"data": DataConfig, "net": NetConfig, "train": TrainConfig, "adapt": AdaptConfig}


def _coerce(raw: str, default: Any, key: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [s.strip() for s in raw.split(",") if s.strip()]
            if default and isinstance(default[0], str):
                return tuple(items)
            if default and isinstance(default[0], float):
                return tuple(float(s) for s in items)
            return tuple(int(s) for s in items)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {type(default).__name__}") from None


def _format(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value).lower() if isinstance(value, bool) else str(value)


def parse_config(text: str) -> PipelineConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = PipelineConfig()
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        target = getattr(cfg, section)
        known = {f.name: f for f in fields(target)}
        for key, raw in parser.items(section):
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(target, key, _coerce(raw, getattr(target, key), f"{section}.{key}"))
    cfg.validate()
    return cfg


def load_config(path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def format_config(cfg: PipelineConfig, sections=tuple(_SECTIONS)) -> str:
    lines = []
    for section in sections:
        lines.append(f"[{section}]")
        for f in fields(getattr(cfg, section)):
            lines.append(f"{f.name} = {_format(getattr(getattr(cfg, section), f.name))}")
        lines.append("")
    return "\n".join(lines)


def net_config_text(net: NetConfig) -> str:
    return format_config(PipelineConfig(net=net), sections=("net",))


def replace(obj, **changes):
    return dataclasses.replace(obj, **changes)
