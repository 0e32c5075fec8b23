"""Job configuration: one TOML file plus dotted CLI overrides.

Every stage reads from the same JobConfig; unknown keys anywhere in the file
are rejected so typos fail loudly. The seed fixes all stochastic choices.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .camera import Camera, DisplayGeometry
from .foveation import FoveationConfig
from .hvs import HvsConfig
from .projection import RenderConfig
from .pruning import TrainConfig
from .simulator import CostModel


class ConfigError(ValueError):
    """Bad configuration file or override."""


@dataclass
class CameraSettings:
    azimuth: float = 30.0
    tilt: float = 20.0
    radius: float = 2.6
    target: tuple[float, float, float] = (0.0, 0.0, 0.0)
    fov_deg: float = 50.0
    width: int = 96
    height: int = 96
    near: float = 0.05
    far: float = 100.0

    def build(self) -> Camera:
        return Camera.orbit(
            self.azimuth,
            self.tilt,
            self.radius,
            self.target,
            fov_deg=self.fov_deg,
            width=self.width,
            height=self.height,
            near=self.near,
            far=self.far,
        )


@dataclass
class DisplaySettings:
    pixels_per_degree: float = 20.0
    gaze: tuple[float, float] | None = None

    def build(self, width: int, height: int) -> DisplayGeometry:
        return DisplayGeometry(width, height, self.pixels_per_degree, self.gaze)


@dataclass
class ServeSettings:
    host: str = "127.0.0.1"
    port: int = 8765
    width: int = 640
    height: int = 360
    foveation: bool = True


@dataclass
class JobConfig:
    seed: int = 0
    camera: CameraSettings = field(default_factory=CameraSettings)
    display: DisplaySettings = field(default_factory=DisplaySettings)
    render: RenderConfig = field(default_factory=RenderConfig)
    foveation: FoveationConfig = field(default_factory=FoveationConfig)
    hvs: HvsConfig = field(default_factory=HvsConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sim: CostModel = field(default_factory=CostModel)
    serve: ServeSettings = field(default_factory=ServeSettings)


_TUPLE_FIELDS = {"target", "gaze", "background", "region_starts", "feature_scales", "param_groups"}


def _coerce(name: str, value):
    if isinstance(value, list):
        return tuple(value)
    return value


def _build_dataclass(cls, data: dict, path: str):
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"unknown key {path}{key!r}")
        if isinstance(value, dict):
            factory = known[key].default_factory
            sub = factory() if factory is not dataclasses.MISSING else None
            if sub is None or not dataclasses.is_dataclass(sub):
                raise ConfigError(f"key {path}{key!r} does not accept a table")
            kwargs[key] = _build_dataclass(type(sub), value, f"{path}{key}.")
        else:
            kwargs[key] = _coerce(key, value)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value under {path or 'top level'}: {exc}") from exc


def load_config(path=None) -> JobConfig:
    if path is None:
        return JobConfig()
    raw = Path(path).read_bytes()
    try:
        data = tomllib.loads(raw.decode("utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return _build_dataclass(JobConfig, data, "")


def apply_overrides(config: JobConfig, overrides: list[str]) -> JobConfig:
    """Apply ``section.key=value`` strings; values parse as TOML literals."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        dotted, literal = item.split("=", 1)
        keys = dotted.strip().split(".")
        try:
            value = tomllib.loads(f"v = {literal.strip()}")["v"]
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse override value {literal!r}: {exc}") from exc
        value = _coerce(keys[-1], value)
        target = config
        for key in keys[:-1]:
            if not hasattr(target, key):
                raise ConfigError(f"unknown config section {key!r} in {dotted!r}")
            target = getattr(target, key)
        leaf = keys[-1]
        if not dataclasses.is_dataclass(target) or leaf not in {f.name for f in fields(target)}:
            raise ConfigError(f"unknown config key {dotted!r}")
        if dataclasses.is_dataclass(getattr(target, leaf)):
            raise ConfigError(f"{dotted!r} is a section, not a value")
        # frozen dataclasses are replaced along the path
        _set_path(config, keys, value)
    return config


def _set_path(config, keys: list[str], value):
    node = config
    parents = []
    for key in keys[:-1]:
        parents.append((node, key))
        node = getattr(node, key)
    try:
        updated = dataclasses.replace(node, **{keys[-1]: value}) if dataclasses.is_dataclass(node) and _is_frozen(node) else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid value for {'.'.join(keys)}: {exc}") from exc
    if updated is None:
        try:
            setattr(node, keys[-1], value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid value for {'.'.join(keys)}: {exc}") from exc
        return
    for parent, key in reversed(parents):
        if dataclasses.is_dataclass(parent) and _is_frozen(parent):
            updated = dataclasses.replace(parent, **{key: updated})
        else:
            setattr(parent, key, updated)
            return
    # only reachable if the root itself were frozen, which JobConfig is not


def _is_frozen(obj) -> bool:
    return getattr(type(obj), "__dataclass_params__").frozen
