"""Engine-wide tunables with config-file overrides."""

from __future__ import annotations

from dataclasses import dataclass, replace

import yaml


@dataclass(frozen=True)
class EngineConfig:
    cloud_n: int = 2048
    candidates_k: int = 64
    backend: str = "annotated"
    rollouts_per_task: int = 30
    workers: int = 1
    pose_jitter_radius: float = 0.02
    pose_jitter_yaw: float = 0.2617993877991494  # 15 degrees
    depth_enabled: bool = False
    pour_rate: int = 5


def load_config(path: str | None = None, **overrides) -> EngineConfig:
    cfg = EngineConfig()
    if path:
        with open(path) as fh:
            raw = yaml.safe_load(fh) or {}
        known = {k: v for k, v in raw.items() if hasattr(cfg, k)}
        unknown = set(raw) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = replace(cfg, **known)
    if overrides:
        cfg = replace(cfg, **{k: v for k, v in overrides.items() if v is not None})
    return cfg
