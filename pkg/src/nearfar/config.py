"""Pipeline configuration: a flat JSON object of dotted keys.

Every key has a default; unknown keys and out-of-range values raise
:class:`~nearfar.errors.ConfigError` before any work starts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .assoc import AssocConfig
from .detect import NoiseConfig
from .errors import ConfigError
from .kalman import KalmanConfig
from .labeler import LabelerConfig
from .sampler import SamplerConfig

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "scene.width": 1280.0,
    "scene.height": 384.0,
    "scene.frames": 100,
    "scene.objects": 8,
    "scene.sequences": 4,
    "scene.keyframe_interval": 10,
    "scene.min_visible_area": 16.0,
    "kalman.p0_diag": list(KalmanConfig().p0_diag),
    "kalman.q_diag": list(KalmanConfig().q_diag),
    "kalman.r_diag": list(KalmanConfig().r_diag),
    "kalman.s_min": 1.0,
    "assoc.iou_min": 0.3,
    "detect.kind": "synthetic",
    "detect.hit_min": 0.2,
    "detect.sigma_reg": 0.02,
    "detect.beta": 0.5,
    "detect.a0": 2500.0,
    "detect.path": None,
    "labeler.max_misses": 3,
    "labeler.loss_threshold": 0.0,
    "labeler.allow_unseeded_tracks": True,
    "labeler.near_to_far": True,
    "sampler.weighting": "raw",
    "sampler.aggregate": "sum",
    "sampler.mode": "bernoulli",
    "eval.iou": 0.5,
}


def _typed(key: str, value: Any) -> Any:
    default = DEFAULTS[key]
    if key == "detect.path":
        if value is not None and not isinstance(value, str):
            raise ConfigError(f"{key} must be a string path or null")
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be a boolean, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ConfigError(f"{key} must be a finite number, got {value!r}")
        return float(value)
    if isinstance(default, list):
        if not isinstance(value, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ConfigError(f"{key} must be a list of numbers")
        return [float(v) for v in value]
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}")
        return value
    raise AssertionError(key)


@dataclass(frozen=True)
class SceneConfig:
    width: float = 1280.0
    height: float = 384.0
    frames: int = 100
    objects: int = 8
    sequences: int = 4
    keyframe_interval: int = 10
    min_visible_area: float = 16.0

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigError("scene.width and scene.height must be > 0")
        if self.frames < 1:
            raise ConfigError("scene.frames must be >= 1")
        if self.objects < 0:
            raise ConfigError("scene.objects must be >= 0")
        if self.sequences < 1:
            raise ConfigError("scene.sequences must be >= 1")
        if self.keyframe_interval < 1:
            raise ConfigError("scene.keyframe_interval must be >= 1")
        if self.min_visible_area < 0:
            raise ConfigError("scene.min_visible_area must be >= 0")


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    scene: SceneConfig = field(default_factory=SceneConfig)
    labeler: LabelerConfig = field(default_factory=LabelerConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    detect_kind: str = "synthetic"
    detect_path: str | None = None
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    eval_iou: float = 0.5
    flat: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    @classmethod
    def from_flat(cls, overrides: Mapping[str, Any] | None = None) -> "PipelineConfig":
        overrides = dict(overrides or {})
        unknown = sorted(set(overrides) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        flat = dict(DEFAULTS)
        for k, v in overrides.items():
            flat[k] = _typed(k, v)

        sub = lambda prefix: {k.split(".", 1)[1]: v for k, v in flat.items() if k.startswith(prefix + ".")}  # noqa: E731
        kal = sub("kalman")
        kalman = KalmanConfig(tuple(kal["p0_diag"]), tuple(kal["q_diag"]), tuple(kal["r_diag"]), kal["s_min"])
        assoc = AssocConfig(**sub("assoc"))
        lab = sub("labeler")
        labeler = LabelerConfig(kalman=kalman, assoc=assoc, **lab)
        det = sub("detect")
        if det["kind"] not in ("synthetic", "file"):
            raise ConfigError(f"detect.kind must be synthetic|file, got {det['kind']!r}")
        noise = NoiseConfig(det["hit_min"], det["sigma_reg"], det["beta"], det["a0"])
        eval_iou = flat["eval.iou"]
        if not 0.0 < eval_iou < 1.0:
            raise ConfigError("eval.iou must be in (0, 1)")
        if flat["seed"] < 0:
            raise ConfigError("seed must be >= 0")
        return cls(
            seed=flat["seed"],
            scene=SceneConfig(**sub("scene")),
            labeler=labeler,
            noise=noise,
            detect_kind=det["kind"],
            detect_path=det["path"],
            sampler=SamplerConfig(**sub("sampler")),
            eval_iou=eval_iou,
            flat=flat,
        )

    def to_flat(self) -> dict[str, Any]:
        return dict(sorted(self.flat.items()))

    def with_overrides(self, overrides: Mapping[str, Any]) -> "PipelineConfig":
        merged = dict(self.flat)
        merged.update(overrides)
        return PipelineConfig.from_flat(merged)


def load_config(path: str | Path | None, seed: int | None = None) -> PipelineConfig:
    overrides: dict[str, Any] = {}
    if path is not None:
        try:
            overrides = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from exc
        if not isinstance(overrides, dict):
            raise ConfigError(f"config {path} must be a JSON object of dotted keys")
    if seed is not None:
        overrides["seed"] = seed
    return PipelineConfig.from_flat(overrides)
