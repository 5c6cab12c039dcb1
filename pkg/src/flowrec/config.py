"""YAML pipeline configuration with strict key validation.

Unknown keys are rejected so typos fail fast (exit code 2 at the CLI). The
full schema with defaults is documented in the README; `paths` carries the
file locations the subcommands need.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import yaml

from .errors import ConfigError
from .flow import MODALITIES
from .model import EncoderConfig
from .sampling import SCHEMES


@dataclass(frozen=True)
class PathsConfig:
    manifest: str | None = None
    flow_cache: str | None = None
    checkpoint: str | None = None
    out_dir: str | None = None
    text_embeddings: str | None = None

    def require(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigError(f"config is missing paths.{name}")
        return Path(value)


@dataclass(frozen=True)
class PipelineConfig:
    scheme: str = "sparse"
    classifiers: int = 4  # M
    frame_budget: int = 8  # frames per classifier
    patch_size: int = 8
    embed_dim: int = 64
    heads: int = 4
    frame_layers: int = 1
    temporal_layers: int = 1
    text_layers: int = 1
    max_text_len: int = 16
    threshold: float = 0.5
    temperature: float = 0.07
    max_displacement: float = 4.0
    seed: int = 0
    learning_rate: float = 0.1
    steps: int = 500
    batch_size: int = 8
    optimizer: str = "sgd"
    modality: str = "rgb+flow"
    use_temporal_positions: bool = True
    paths: PathsConfig = field(default_factory=PathsConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.modality not in MODALITIES:
            raise ConfigError(
                f"modality must be one of {MODALITIES}, got {self.modality!r}"
            )
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        for name in ("classifiers", "frame_budget", "steps", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError(f"threshold must lie in [0, 1], got {self.threshold}")
        if self.temperature <= 0 or self.max_displacement <= 0:
            raise ConfigError("temperature and max_displacement must be positive")
        if self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(
            patch_size=self.patch_size,
            embed_dim=self.embed_dim,
            heads=self.heads,
            frame_layers=self.frame_layers,
            temporal_layers=self.temporal_layers,
            text_layers=self.text_layers,
            max_text_len=self.max_text_len,
        )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config root must be a mapping")
    return config_from_dict(raw, where=str(path))


def config_from_dict(raw: dict, where: str = "config") -> PipelineConfig:
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{where}: unknown config keys {sorted(unknown)}")
    kwargs = dict(raw)
    paths_raw = kwargs.pop("paths", {}) or {}
    if not isinstance(paths_raw, dict):
        raise ConfigError(f"{where}: paths must be a mapping")
    path_known = {f.name for f in fields(PathsConfig)}
    path_unknown = set(paths_raw) - path_known
    if path_unknown:
        raise ConfigError(f"{where}: unknown paths keys {sorted(path_unknown)}")
    try:
        return PipelineConfig(paths=PathsConfig(**paths_raw), **kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
