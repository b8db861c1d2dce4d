"""Generation configuration document.

The on-disk form is JSON.  Every key carries its unit in the name
(``_deg``, ``_m``, ``_mm``, ``_px``) and the document has a ``version``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .augment import AugmentationConfig
from .errors import ConfigurationError

CONFIG_VERSION = 1


def _check_range(name, value, lo_bound=-math.inf, hi_bound=math.inf):
    if len(value) != 2:
        raise ConfigurationError(f"{name}: expected [low, high], got {value!r}")
    lo, hi = (float(v) for v in value)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigurationError(f"{name}: range must be finite")
    if lo > hi:
        raise ConfigurationError(f"{name}: empty range [{lo}, {hi}]")
    if lo < lo_bound or hi > hi_bound:
        raise ConfigurationError(f"{name}: range must lie within [{lo_bound}, {hi_bound}]")
    return (lo, hi)


@dataclass(frozen=True)
class CameraConfig:
    azimuth_deg: tuple = (-60.0, 60.0)
    elevation_deg: tuple = (-25.0, 25.0)
    distance_m: tuple = (0.35, 1.2)
    focal_mm: tuple = (35.0, 120.0)
    aperture_f: tuple = (1.8, 16.0)
    lookat_jitter: float = 0.25  # fraction of the head half-extents
    # "fill": distance follows from a sampled head-height fraction of the frame;
    # "shell": distance is volume-uniform in distance_m.
    framing: str = "fill"
    fill_fraction: tuple = (0.45, 0.75)

    def validate(self):
        _check_range("camera.azimuth_deg", self.azimuth_deg, -180, 180)
        _check_range("camera.elevation_deg", self.elevation_deg, -89, 89)
        _check_range("camera.distance_m", self.distance_m, 1e-3)
        _check_range("camera.focal_mm", self.focal_mm, 1e-3)
        _check_range("camera.aperture_f", self.aperture_f, 1e-3)
        _check_range("camera.fill_fraction", self.fill_fraction, 1e-3, 10)
        if self.framing not in ("fill", "shell"):
            raise ConfigurationError(f"camera.framing must be 'fill' or 'shell', got {self.framing!r}")
        if not 0 <= self.lookat_jitter <= 1:
            raise ConfigurationError("camera.lookat_jitter must lie in [0, 1]")


@dataclass(frozen=True)
class PoseConfig:
    # (pitch, yaw, roll) half-ranges
    neck_deg: tuple = (8.0, 15.0, 5.0)
    head_deg: tuple = (15.0, 25.0, 10.0)

    def validate(self):
        for name in ("neck_deg", "head_deg"):
            value = getattr(self, name)
            if len(value) != 3 or any(not math.isfinite(v) or v < 0 for v in value):
                raise ConfigurationError(f"pose.{name}: expected three non-negative half-ranges")


@dataclass(frozen=True)
class GazeConfig:
    yaw_deg: tuple = (-25.0, 25.0)
    pitch_deg: tuple = (-20.0, 20.0)

    def validate(self):
        _check_range("gaze.yaw_deg", self.yaw_deg, -45, 45)
        _check_range("gaze.pitch_deg", self.pitch_deg, -45, 45)


@dataclass(frozen=True)
class ExpressionConfig:
    sequence_probability: float = 0.25
    value_range: tuple = (-1.0, 1.0)

    def validate(self):
        if not 0 <= self.sequence_probability <= 1:
            raise ConfigurationError("expression.sequence_probability must lie in [0, 1]")
        _check_range("expression.value_range", self.value_range)


@dataclass(frozen=True)
class EnvironmentConfig:
    count: int = 448
    intensity: tuple = (0.6, 1.4)

    def validate(self):
        if self.count < 1:
            raise ConfigurationError("environment.count must be >= 1")
        _check_range("environment.intensity", self.intensity, 0)


@dataclass(frozen=True)
class CollectionConfig:
    """Collection sizes and the probability that an optional slot is filled."""

    hair_styles: int = 512
    eyebrows: int = 162
    beards: int = 142
    eyelashes: int = 42
    outfits: int = 30
    headwear: int = 36
    facewear: int = 7
    eyewear: int = 11
    p_hair: float = 0.85
    p_beard: float = 0.3
    p_outfit: float = 0.9
    p_headwear: float = 0.15
    p_facewear: float = 0.05
    p_eyewear: float = 0.15

    def validate(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name.startswith("p_"):
                if not 0 <= value <= 1:
                    raise ConfigurationError(f"collections.{f.name} must lie in [0, 1]")
            elif value < 1:
                raise ConfigurationError(f"collections.{f.name} must be >= 1")


@dataclass(frozen=True)
class RenderConfig:
    resolution_px: int = 256
    supersample_color: bool = False
    landmark_tolerance_m: float = 0.01
    dense_landmarks: bool = False

    def validate(self):
        if self.resolution_px < 16:
            raise ConfigurationError("render.resolution_px must be >= 16")
        if not self.landmark_tolerance_m >= 0:
            raise ConfigurationError("render.landmark_tolerance_m must be >= 0")


@dataclass(frozen=True)
class GenerationConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    pose: PoseConfig = field(default_factory=PoseConfig)
    gaze: GazeConfig = field(default_factory=GazeConfig)
    expression: ExpressionConfig = field(default_factory=ExpressionConfig)
    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    collections: CollectionConfig = field(default_factory=CollectionConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    augmentation: AugmentationConfig = field(default_factory=AugmentationConfig)
    identity_truncation: float | None = 3.0
    hair_enabled: bool = True
    clothing_enabled: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self):
        for section in (self.camera, self.pose, self.gaze, self.expression,
                        self.environment, self.collections, self.render, self.augmentation):
            section.validate()
        if self.identity_truncation is not None and not self.identity_truncation > 0:
            raise ConfigurationError("identity_truncation must be positive or null")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        doc = {"version": CONFIG_VERSION}
        doc.update(_to_jsonable(dataclasses.asdict(self)))
        return doc

    @classmethod
    def from_dict(cls, doc):
        doc = dict(doc)
        version = doc.pop("version", None)
        if version != CONFIG_VERSION:
            raise ConfigurationError(f"unsupported config version {version!r}")
        sections = {
            "camera": CameraConfig, "pose": PoseConfig, "gaze": GazeConfig,
            "expression": ExpressionConfig, "environment": EnvironmentConfig,
            "collections": CollectionConfig, "render": RenderConfig,
            "augmentation": AugmentationConfig,
        }
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value, key)
            elif key in ("identity_truncation", "hair_enabled", "clothing_enabled"):
                kwargs[key] = value
            else:
                raise ConfigurationError(f"unknown config key {key!r}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigurationError(str(exc)) from None

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def hash(self):
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def _to_jsonable(value):
    if isinstance(value, dict):
        return {k: _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    return value


def _build(cls, value, section):
    if not isinstance(value, dict):
        raise ConfigurationError(f"{section}: expected an object")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(value) - names
    if unknown:
        raise ConfigurationError(f"{section}: unknown keys {sorted(unknown)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in value.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{section}: {exc}") from None


def load_config(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"{path}: cannot read config ({exc})") from None
    return GenerationConfig.from_dict(doc)


def save_config(path, config):
    Path(path).write_text(config.to_json() + "\n")
