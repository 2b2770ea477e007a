"""Run configuration: one human-readable JSON file drives the whole
pipeline. Constants keep their conventional symbol names (tau_alpha,
lambda_tv, rho, ...) so configs read like the math.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .errors import DataError
from .looping import PatchConfig
from .metrics import MetricPatchConfig, SearchSpec
from .stage1 import Stage1Config
from .stage2 import PyramidSchedule, Stage2Config

CONFIG_FORMAT = "mtvloop-config/1"


@dataclass
class CullingConfig:
    tau_alpha: float = 0.05
    tau_loopable: float = 0.5
    tile_size: int = 16
    num_frames: int = 50
    noise_amp: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.tau_alpha < 1.0):
            raise ValueError("tau_alpha must be in [0, 1)")
        if not (0.0 < self.tau_loopable < 1.0):
            raise ValueError("tau_loopable must be in (0, 1)")
        if self.tile_size < 2:
            raise ValueError("tile size too small")
        if self.num_frames < 2:
            raise ValueError("need at least 2 output frames")

    @classmethod
    def desk(cls, **overrides) -> "CullingConfig":
        args = dict(num_frames=12)
        args.update(overrides)
        return cls(**args)


@dataclass
class MetricsConfig:
    spatial_sizes: tuple[int, ...] = (7, 11)
    temporal_size: int = 3
    temporal_stride: int = 1
    spatial_stride: int = 4
    search_radius: int = 8
    full_frame: bool = False

    def patch_configs(self) -> list[MetricPatchConfig]:
        return [MetricPatchConfig(spatial=k, temporal_size=self.temporal_size,
                                  temporal_stride=self.temporal_stride,
                                  spatial_stride=self.spatial_stride)
                for k in self.spatial_sizes]

    def search(self) -> SearchSpec:
        return SearchSpec(spatial_radius=self.search_radius,
                          full_frame=self.full_frame)

    @classmethod
    def desk(cls, **overrides) -> "MetricsConfig":
        args = dict(spatial_sizes=(5, 7), spatial_stride=6, search_radius=4)
        args.update(overrides)
        return cls(**args)


@dataclass
class RunConfig:
    stage1: Stage1Config = field(default_factory=Stage1Config)
    culling: CullingConfig = field(default_factory=CullingConfig)
    patch: PatchConfig = field(default_factory=PatchConfig)
    pyramid: PyramidSchedule = field(default_factory=PyramidSchedule)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    seed: int = 0
    holdout_view: Optional[str] = None   # None = last view by name

    def reseeded(self) -> "RunConfig":
        """Propagate the top-level seed into every stage."""
        cfg = dataclasses.replace(self)
        cfg.stage1 = dataclasses.replace(cfg.stage1, seed=self.seed)
        cfg.culling = dataclasses.replace(cfg.culling, seed=self.seed + 1)
        cfg.stage2 = dataclasses.replace(cfg.stage2, seed=self.seed + 2)
        return cfg


def paper_config() -> RunConfig:
    """Full-scale defaults (expect long CPU runs)."""
    return RunConfig()


def desk_config() -> RunConfig:
    """Laptop-scale preset used by the test-suite scenes."""
    return RunConfig(
        stage1=Stage1Config.desk(),
        culling=CullingConfig.desk(),
        patch=PatchConfig.desk(),
        pyramid=PyramidSchedule.desk(),
        stage2=Stage2Config.desk(),
        metrics=MetricsConfig.desk(),
    )


PRESETS = {"paper": paper_config, "desk": desk_config}


def _to_dict(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_dict(getattr(obj, f.name))
                for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_dict(v) for v in obj]
    return obj


def config_to_json(cfg: RunConfig) -> dict:
    out = {"format": CONFIG_FORMAT}
    out.update(_to_dict(cfg))
    return out


def _build(cls, obj: dict):
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in obj:
            continue
        value = obj[f.name]
        if isinstance(value, list):
            value = tuple(value)
        kwargs[f.name] = value
    return cls(**kwargs)


def config_from_json(obj: dict) -> RunConfig:
    if obj.get("format") != CONFIG_FORMAT:
        raise DataError(f"unsupported config format {obj.get('format')!r}")
    return RunConfig(
        stage1=_build(Stage1Config, obj.get("stage1", {})),
        culling=_build(CullingConfig, obj.get("culling", {})),
        patch=_build(PatchConfig, obj.get("patch", {})),
        pyramid=_build(PyramidSchedule, obj.get("pyramid", {})),
        stage2=_build(Stage2Config, obj.get("stage2", {})),
        metrics=_build(MetricsConfig, obj.get("metrics", {})),
        seed=int(obj.get("seed", 0)),
        holdout_view=obj.get("holdout_view"),
    )


def save_config(cfg: RunConfig, path) -> None:
    Path(path).write_text(json.dumps(config_to_json(cfg), indent=2))


def load_config(path) -> RunConfig:
    try:
        obj = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    try:
        return config_from_json(obj)
    except (TypeError, ValueError) as exc:
        raise DataError(f"invalid config {path}: {exc}") from exc
