"""Run configuration: everything besides the inputs that a run depends on."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, is_dataclass
from pathlib import Path
from typing import Any

from .placement import OffsetRules
from .tlo.refine import RefineConfig
from .tlo.synth import SynthSpec
from .tlo.train import TrainConfig


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    offsets: OffsetRules = field(default_factory=OffsetRules)
    refine: RefineConfig = field(default_factory=RefineConfig)
    tlo: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    ori_threshold_deg: float = 15.0

    @property
    def ori_threshold(self) -> float:
        return math.radians(self.ori_threshold_deg)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _build(cls, data: Any, path: str):
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected an object")
    known = {f.name: f for f in fields(cls)}
    extra = set(data) - set(known)
    if extra:
        raise ValueError(f"{path}: unknown field(s) {sorted(extra)}")
    kwargs = {}
    defaults = cls()
    for name, value in data.items():
        current = getattr(defaults, name)
        if is_dataclass(current):
            kwargs[name] = _build(type(current), value, f"{path}.{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def config_from_dict(data: dict) -> RunConfig:
    return _build(RunConfig, data, "config")
