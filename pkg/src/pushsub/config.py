"""Workbench configuration: one YAML file, validated on load, unknown keys rejected.

Every section maps onto a dataclass whose defaults are the reference setup, so
an empty file is a complete config.  ``configs/default.yaml`` spells the same
values out with comments.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .cpm.training import TrainConfig
from .descriptor import RoiConfig
from .geometry import Transform3
from .rps import RpsParams
from .sensors import CameraConfig, LidarConfig, look_at
from .world import ObjectSpec, RobotSpec, box, cylinder


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectEntry:
    shape: str  # box | cylinder | polygon
    mass: float
    length: float | None = None
    width: float | None = None
    radius: float | None = None
    vertices: tuple | None = None
    height: float = 0.8
    cop_offset: tuple = (0.0, 0.0)
    support_radius: float | None = None  # derived from the footprint when omitted

    def build(self, name: str, ground: float, robot: float) -> ObjectSpec:
        kw = dict(mu_ground=ground, mu_robot=robot, cop_offset=tuple(self.cop_offset))
        if self.support_radius is not None:
            kw["support_radius"] = self.support_radius
        if self.shape == "box":
            if self.length is None or self.width is None:
                raise ConfigError(f"object {name!r}: box needs length and width")
            return box(name, self.length, self.width, self.mass, height=self.height, **kw)
        if self.shape == "cylinder":
            if self.radius is None:
                raise ConfigError(f"object {name!r}: cylinder needs radius")
            return cylinder(name, self.radius, self.mass, height=self.height, **kw)
        if self.shape == "polygon":
            if self.vertices is None or self.support_radius is None:
                raise ConfigError(f"object {name!r}: polygon needs vertices and support_radius")
            return ObjectSpec(name=name, shape="polygon", mass=self.mass, vertices=tuple(map(tuple, self.vertices)),
                              height=self.height, **kw)
        raise ConfigError(f"object {name!r}: unknown shape {self.shape!r}")


@dataclass(frozen=True)
class FrictionEntry:
    ground: float
    robot: float


@dataclass(frozen=True)
class LidarSection:
    mount_xyz: tuple = (0.0, 0.0, 0.3)
    mount_rpy: tuple = (0.0, 0.0, 0.0)
    beams_per_scan: int = 128
    fov_deg: float = 90.0
    range_max: float = 10.0
    noise_sigma: float = 0.005
    rate: float = 10.0

    def build(self) -> LidarConfig:
        return LidarConfig(Transform3.from_rpy(self.mount_xyz, *self.mount_rpy), self.beams_per_scan,
                           math.radians(self.fov_deg), self.range_max, self.noise_sigma, self.rate)


@dataclass(frozen=True)
class CameraSection:
    eye: tuple = (0.1, 0.0, 1.1)
    target: tuple = (0.5, 0.0, 0.0)
    fx: float = 150.0
    fy: float = 150.0
    cx: float = 79.5
    cy: float = 59.5
    width: int = 160
    height: int = 120
    depth_noise_sigma: float = 0.01
    rate: float = 10.0

    def build(self) -> CameraConfig:
        return CameraConfig(look_at(self.eye, self.target), self.fx, self.fy, self.cx, self.cy,
                            self.width, self.height, self.depth_noise_sigma, self.rate)


@dataclass(frozen=True)
class ProtocolConfig:
    d_succ: float = 0.05
    t_max: float = 300.0
    contact_loss_max: float = 150.0
    control_period: float = 0.1
    physics_dt: float = 0.01
    objects: tuple = ("box", "cylinder", "nonuniform_box")
    friction_sets: tuple = ("S_mu1", "S_mu2")
    no_contact_trials: int = 12
    no_contact_duration: float = 20.0
    initial_gap: float = 0.0  # object face distance ahead of the pushing face at t = 0
    jitter_y: float = 0.02
    jitter_deg: float = 3.0

    def __post_init__(self):
        if not (self.d_succ > 0 and self.t_max > 0 and self.contact_loss_max > 0):
            raise ConfigError("d_succ, t_max and contact_loss_max must be positive")
        if not (0 < self.physics_dt <= 0.1 and self.control_period >= self.physics_dt):
            raise ConfigError("need 0 < physics_dt <= 0.1 and control_period >= physics_dt")
        ratio = self.control_period / self.physics_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("control_period must be a whole number of physics steps")
        if self.no_contact_trials < 0 or self.initial_gap < 0:
            raise ConfigError("no_contact_trials and initial_gap must be non-negative")

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.physics_dt))


def _default_objects() -> dict:
    return {
        "box": ObjectEntry("box", 20.0, length=0.4, width=0.4, height=0.8),
        "cylinder": ObjectEntry("cylinder", 25.0, radius=0.25, height=0.7),
        "nonuniform_box": ObjectEntry("box", 15.0, length=0.45, width=0.45, height=0.6, cop_offset=(0.08, 0.08)),
    }


def _default_frictions() -> dict:
    return {"S_mu1": FrictionEntry(0.3, 0.35), "S_mu2": FrictionEntry(0.2, 0.5)}


@dataclass(frozen=True)
class WorkbenchConfig:
    seed: int = 0
    output_dir: str = "runs"
    robot: RobotSpec = field(default_factory=RobotSpec)
    objects: dict = field(default_factory=_default_objects)
    friction_sets: dict = field(default_factory=_default_frictions)
    lidar: LidarSection = field(default_factory=LidarSection)
    camera: CameraSection = field(default_factory=CameraSection)
    roi: RoiConfig = field(default_factory=RoiConfig)
    rps: RpsParams = field(default_factory=RpsParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)

    def __post_init__(self):
        for name in self.protocol.objects:
            if name not in self.objects:
                raise ConfigError(f"protocol object {name!r} is not defined under objects")
        for name in self.protocol.friction_sets:
            if name not in self.friction_sets:
                raise ConfigError(f"protocol friction set {name!r} is not defined under friction_sets")
        # build once so geometry errors surface at load time
        for oname, entry in self.objects.items():
            for fr in self.friction_sets.values():
                try:
                    entry.build(oname, fr.ground, fr.robot)
                except ValueError as e:
                    raise ConfigError(f"object {oname!r}: {e}") from e

    def object_spec(self, name: str, friction_set: str) -> ObjectSpec:
        fr = self.friction_sets[friction_set]
        return self.objects[name].build(name, fr.ground, fr.robot)

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    def hash(self) -> str:
        """SHA-256 over every setting that influences results (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


_SECTIONS = {
    "robot": RobotSpec, "lidar": LidarSection, "camera": CameraSection, "roi": RoiConfig,
    "rps": RpsParams, "train": TrainConfig, "protocol": ProtocolConfig,
}
_TUPLE_FIELDS = {"mount_xyz", "mount_rpy", "eye", "target", "objects", "friction_sets", "cop_offset", "vertices"}


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _tupled(v):
    return tuple(_tupled(e) for e in v) if isinstance(v, (list, tuple)) else v


def _make(cls, data: Any, where: str):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {', '.join(unknown)}")
    kw = {k: _tupled(v) if k in _TUPLE_FIELDS else v for k, v in data.items()}
    try:
        return cls(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"{where}: {e}") from e


def from_dict(data: dict | None) -> WorkbenchConfig:
    data = dict(data or {})
    names = {f.name for f in dataclasses.fields(WorkbenchConfig)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {', '.join(unknown)}")
    kw: dict = {}
    for key, cls in _SECTIONS.items():
        if key in data:
            kw[key] = _make(cls, data[key], key)
    if "objects" in data:
        kw["objects"] = {n: _make(ObjectEntry, v, f"objects.{n}") for n, v in (data["objects"] or {}).items()}
    if "friction_sets" in data:
        kw["friction_sets"] = {n: _make(FrictionEntry, v, f"friction_sets.{n}")
                               for n, v in (data["friction_sets"] or {}).items()}
    for key in ("seed", "output_dir"):
        if key in data:
            kw[key] = data[key]
    if not isinstance(kw.get("seed", 0), int):
        raise ConfigError("seed must be an integer")
    try:
        return WorkbenchConfig(**kw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (values parsed as YAML) to a raw config dict."""
    data = json.loads(json.dumps(data or {}))
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node = data
        for k in keys[:-1]:
            node = node.setdefault(k, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {k} is not a section")
        node[keys[-1]] = yaml.safe_load(raw)
    return data


def load_config(path=None, overrides=()) -> WorkbenchConfig:
    data = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    return from_dict(apply_overrides(data, overrides))
