"""Deterministic synthetic LiDAR sequences with complete ground truth.

Scenes are built from labeled surfaces: a ground rectangle, vertical walls,
and boxes (optionally moving at constant velocity). Points are sampled
uniformly on the surfaces with seed-deterministic jitter, not raycast, so
there is no occlusion. A piecewise-linear sensor path supplies per-frame
poses; only points within ``sensor_range`` of the sensor survive.

Coordinates are quantized to float32 at generation time so that the in-memory
dataset and its on-disk export agree bit for bit.

The fixed class palette is 1 = ground, 9 = wall, 10 = moving vehicle,
30 = moving pedestrian; any id >= 1 is accepted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import geometry, lidar_io
from .errors import ConfigError, IoError
from .geometry import RigidTransform
from .lidar_io import LabelMap, PointCloud

SAMPLING_MODES = ("per-frame", "fixed")
_BODY_STREAM = 0
_POSE_STREAM = 1


@dataclass(frozen=True)
class Ground:
    """Horizontal rectangle at height z spanning [x_min,x_max] x [y_min,y_max]."""

    class_id: int
    x_min: float
    x_max: float
    y_min: float
    y_max: float
    z: float = 0.0

    def values(self) -> list:
        return [self.class_id, self.x_min, self.x_max, self.y_min, self.y_max, self.z]


@dataclass(frozen=True)
class Wall:
    """Vertical rectangle from (x0,y0) to (x1,y1), z_base to z_base+height."""

    class_id: int
    x0: float
    y0: float
    x1: float
    y1: float
    height: float
    z_base: float = 0.0

    def values(self) -> list:
        return [self.class_id, self.x0, self.y0, self.x1, self.y1, self.height, self.z_base]


@dataclass(frozen=True)
class Box:
    """Axis-aligned cuboid; sampled on all faces except the bottom.

    A nonzero velocity (m/s) makes the body dynamic: its center at frame t is
    center + velocity * t / frequency.
    """

    class_id: int
    center: tuple
    size: tuple
    velocity: tuple = (0.0, 0.0, 0.0)

    def moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def values(self) -> list:
        return [self.class_id, *self.center, *self.size, *self.velocity]


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    frames: int = 2
    frequency: float = 10.0
    sensor_range: float = 70.0
    points_per_surface: float = 2.0
    sampling: str = "per-frame"
    pose_noise_translation: float = 0.0
    pose_noise_rotation: float = 0.0
    path: tuple = ((0.0, 0.0, 1.5),)
    headings: tuple = ()
    bodies: tuple = field(default_factory=tuple)

    def validate(self) -> None:
        if self.frames < 2:
            raise ConfigError(f"frames must be >= 2, got {self.frames}")
        if self.frequency <= 0:
            raise ConfigError(f"frequency must be positive, got {self.frequency}")
        if self.sensor_range <= 0:
            raise ConfigError(f"sensor_range must be positive, got {self.sensor_range}")
        if self.points_per_surface <= 0:
            raise ConfigError("points_per_surface must be positive")
        if self.sampling not in SAMPLING_MODES:
            raise ConfigError(f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}")
        if self.pose_noise_translation < 0 or self.pose_noise_rotation < 0:
            raise ConfigError("pose noise levels cannot be negative")
        if not self.path:
            raise ConfigError("sensor path needs at least one waypoint")
        if self.headings and len(self.headings) != len(self.path):
            raise ConfigError(
                f"{len(self.headings)} headings for {len(self.path)} waypoints"
            )
        if not self.bodies:
            raise ConfigError("scene has no bodies")
        for body in self.bodies:
            if body.class_id < 1:
                raise ConfigError(f"class ids must be >= 1, got {body.class_id}")


@dataclass(frozen=True, eq=False)
class SynthDataset:
    """One generated sequence: clouds, ground-truth labels, and poses.

    `poses` are the reported (possibly noise-perturbed) world-from-sensor
    transforms; `true_poses` are the exact ones the geometry was built with.
    """

    config: SynthConfig
    clouds: tuple
    labels: tuple
    poses: tuple
    true_poses: tuple

    @property
    def frequency(self) -> float:
        return self.config.frequency

    def __len__(self) -> int:
        return len(self.clouds)


def _rng(seed: int, stream: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, *key)))


def _surface_count(area: float, density: float) -> int:
    return max(1, math.ceil(area * density))


def _sample_ground(body: Ground, density: float, rng) -> np.ndarray:
    area = (body.x_max - body.x_min) * (body.y_max - body.y_min)
    n = _surface_count(area, density)
    pts = np.empty((n, 3))
    pts[:, 0] = rng.uniform(body.x_min, body.x_max, n)
    pts[:, 1] = rng.uniform(body.y_min, body.y_max, n)
    pts[:, 2] = body.z
    return pts


def _sample_wall(body: Wall, density: float, rng) -> np.ndarray:
    length = math.hypot(body.x1 - body.x0, body.y1 - body.y0)
    n = _surface_count(length * body.height, density)
    s = rng.uniform(0.0, 1.0, n)
    pts = np.empty((n, 3))
    pts[:, 0] = body.x0 + s * (body.x1 - body.x0)
    pts[:, 1] = body.y0 + s * (body.y1 - body.y0)
    pts[:, 2] = body.z_base + rng.uniform(0.0, body.height, n)
    return pts


def _sample_box_local(body: Box, density: float, rng) -> np.ndarray:
    sx, sy, sz = body.size
    faces = []
    # Four side faces then the top; the bottom face is never sampled.
    for sign in (-1.0, 1.0):
        n = _surface_count(sy * sz, density)
        face = np.empty((n, 3))
        face[:, 0] = sign * sx / 2.0
        face[:, 1] = rng.uniform(-sy / 2.0, sy / 2.0, n)
        face[:, 2] = rng.uniform(-sz / 2.0, sz / 2.0, n)
        faces.append(face)
    for sign in (-1.0, 1.0):
        n = _surface_count(sx * sz, density)
        face = np.empty((n, 3))
        face[:, 0] = rng.uniform(-sx / 2.0, sx / 2.0, n)
        face[:, 1] = sign * sy / 2.0
        face[:, 2] = rng.uniform(-sz / 2.0, sz / 2.0, n)
        faces.append(face)
    n = _surface_count(sx * sy, density)
    top = np.empty((n, 3))
    top[:, 0] = rng.uniform(-sx / 2.0, sx / 2.0, n)
    top[:, 1] = rng.uniform(-sy / 2.0, sy / 2.0, n)
    top[:, 2] = sz / 2.0
    faces.append(top)
    return np.concatenate(faces, axis=0)


def _sample_body_local(body, density: float, rng) -> np.ndarray:
    if isinstance(body, Ground):
        return _sample_ground(body, density, rng)
    if isinstance(body, Wall):
        return _sample_wall(body, density, rng)
    if isinstance(body, Box):
        return _sample_box_local(body, density, rng)
    raise ConfigError(f"unknown body type {type(body).__name__}")


def _body_world_points(body, local: np.ndarray, t: int, frequency: float) -> np.ndarray:
    if isinstance(body, Box):
        offset = np.asarray(body.center, dtype=np.float64)
        if body.moving():
            offset = offset + np.asarray(body.velocity) * (t / frequency)
        return local + offset
    return local


def _interpolated_poses(cfg: SynthConfig) -> list:
    waypoints = np.asarray(cfg.path, dtype=np.float64).reshape(-1, 3)
    headings = (
        np.asarray(cfg.headings, dtype=np.float64)
        if cfg.headings
        else np.zeros(len(waypoints))
    )
    poses = []
    for t in range(cfg.frames):
        if len(waypoints) == 1:
            pos, yaw = waypoints[0], headings[0]
        else:
            u = t * (len(waypoints) - 1) / (cfg.frames - 1)
            seg = min(int(math.floor(u)), len(waypoints) - 2)
            frac = u - seg
            pos = (1.0 - frac) * waypoints[seg] + frac * waypoints[seg + 1]
            yaw = (1.0 - frac) * headings[seg] + frac * headings[seg + 1]
        poses.append(RigidTransform(geometry.yaw_rotation(yaw), pos))
    return poses


def _perturbed(pose: RigidTransform, cfg: SynthConfig, t: int) -> RigidTransform:
    if cfg.pose_noise_translation == 0.0 and cfg.pose_noise_rotation == 0.0:
        return pose
    rng = _rng(cfg.seed, _POSE_STREAM, t)
    d_rot = geometry.axis_angle_rotation(rng.normal(0.0, 1.0, 3) * cfg.pose_noise_rotation)
    d_trans = rng.normal(0.0, 1.0, 3) * cfg.pose_noise_translation
    return RigidTransform(d_rot @ pose.rotation, pose.translation + d_trans)


def generate(cfg: SynthConfig) -> SynthDataset:
    """Build the full sequence; a pure function of the config."""
    cfg.validate()
    true_poses = _interpolated_poses(cfg)
    density = cfg.points_per_surface
    fixed_local = None
    if cfg.sampling == "fixed":
        fixed_local = [
            _sample_body_local(body, density, _rng(cfg.seed, _BODY_STREAM, b))
            for b, body in enumerate(cfg.bodies)
        ]

    instance_ids = {}
    next_instance = 1
    for b, body in enumerate(cfg.bodies):
        if isinstance(body, Box) and body.moving():
            instance_ids[b] = next_instance
            next_instance += 1

    clouds, labels = [], []
    for t in range(cfg.frames):
        chunks, sems, insts = [], [], []
        for b, body in enumerate(cfg.bodies):
            if fixed_local is not None:
                local = fixed_local[b]
            else:
                local = _sample_body_local(body, density, _rng(cfg.seed, _BODY_STREAM, b, t))
            world = _body_world_points(body, local, t, cfg.frequency)
            chunks.append(world)
            sems.append(np.full(len(world), body.class_id, dtype=np.int32))
            insts.append(np.full(len(world), instance_ids.get(b, 0), dtype=np.int32))
        points = np.concatenate(chunks, axis=0)
        semantic = np.concatenate(sems)
        instance = np.concatenate(insts)
        keep = (
            np.linalg.norm(points - true_poses[t].translation, axis=1) <= cfg.sensor_range
        )
        # scans are stored in the sensor frame, like real recordings
        local = geometry.apply_points(geometry.invert(true_poses[t]), points[keep])
        points = local.astype(np.float32).astype(np.float64)
        clouds.append(
            PointCloud(points, np.zeros(len(points)), frame_id=t, sequence_id="00")
        )
        labels.append(
            LabelMap(semantic[keep], instance[keep], frame_id=t, sequence_id="00")
        )

    poses = [_perturbed(p, cfg, t) for t, p in enumerate(true_poses)]
    return SynthDataset(cfg, tuple(clouds), tuple(labels), tuple(poses), tuple(true_poses))


def export(dataset: SynthDataset, root_path) -> None:
    """Write the dataset in the standard sequence layout under root_path."""
    from pathlib import Path

    seq_dir = Path(root_path) / "sequences" / "00"
    try:
        (seq_dir / "velodyne").mkdir(parents=True, exist_ok=True)
        (seq_dir / "labels").mkdir(parents=True, exist_ok=True)
        for t, (cloud, label) in enumerate(zip(dataset.clouds, dataset.labels)):
            lidar_io.write_scan(cloud, seq_dir / "velodyne" / f"{t:06d}.bin")
            lidar_io.write_labels(label, seq_dir / "labels" / f"{t:06d}.label")
        lidar_io.write_poses(dataset.poses, seq_dir / "poses.txt")
        lidar_io.write_calibration(seq_dir / "calib.txt", geometry.identity())
    except OSError as exc:
        raise IoError(f"cannot export dataset to {root_path}: {exc}") from exc


_SCALAR_KEYS = {
    "seed": int,
    "frames": int,
    "frequency": float,
    "sensor_range": float,
    "points_per_surface": float,
    "sampling": str,
    "pose_noise_translation": float,
    "pose_noise_rotation": float,
}
_BODY_ARITY = {"ground": 6, "wall": 7, "box": 10}


def _parse_list(value: str, key: str, lineno: int) -> list:
    raw = value.strip()
    if not (raw.startswith("[") and raw.endswith("]")):
        raise ConfigError(f"line {lineno}: {key} expects a bracketed list")
    inner = raw[1:-1].strip()
    if not inner:
        return []
    try:
        return [float(p) for p in inner.split(",")]
    except ValueError:
        raise ConfigError(f"line {lineno}: non-numeric entry in {key}") from None


def _body_from_values(kind: str, vals: list, lineno: int):
    if len(vals) != _BODY_ARITY[kind]:
        raise ConfigError(
            f"line {lineno}: {kind} expects {_BODY_ARITY[kind]} values, got {len(vals)}"
        )
    class_id = int(vals[0])
    if vals[0] != class_id:
        raise ConfigError(f"line {lineno}: class id must be an integer")
    if kind == "ground":
        return Ground(class_id, *vals[1:])
    if kind == "wall":
        return Wall(class_id, *vals[1:])
    return Box(class_id, tuple(vals[1:4]), tuple(vals[4:7]), tuple(vals[7:10]))


def parse_config(text: str) -> SynthConfig:
    """Parse the flat key = value scene description (see config_to_text)."""
    scalars: dict = {}
    path: list = []
    headings: list = []
    bodies: list = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = stripped.partition("=")
        key, value = key.strip(), value.strip()
        if key in _SCALAR_KEYS:
            caster = _SCALAR_KEYS[key]
            try:
                scalars[key] = caster(value)
            except ValueError:
                raise ConfigError(f"line {lineno}: bad value for {key}: {value!r}") from None
        elif key == "path":
            vals = _parse_list(value, key, lineno)
            if len(vals) % 3 != 0 or not vals:
                raise ConfigError(f"line {lineno}: path needs 3 values per waypoint")
            path = [tuple(vals[i : i + 3]) for i in range(0, len(vals), 3)]
        elif key == "headings":
            headings = _parse_list(value, key, lineno)
        elif key in _BODY_ARITY:
            bodies.append(_body_from_values(key, _parse_list(value, key, lineno), lineno))
        else:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
    kwargs = dict(scalars)
    if path:
        kwargs["path"] = tuple(path)
    if headings:
        kwargs["headings"] = tuple(headings)
    kwargs["bodies"] = tuple(bodies)
    cfg = SynthConfig(**kwargs)
    cfg.validate()
    return cfg


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def config_to_text(cfg: SynthConfig) -> str:
    """Serialize a config with every field materialized; parse round-trips."""
    lines = [
        f"seed = {cfg.seed}",
        f"frames = {cfg.frames}",
        f"frequency = {_fmt(cfg.frequency)}",
        f"sensor_range = {_fmt(cfg.sensor_range)}",
        f"points_per_surface = {_fmt(cfg.points_per_surface)}",
        f"sampling = {cfg.sampling}",
        f"pose_noise_translation = {_fmt(cfg.pose_noise_translation)}",
        f"pose_noise_rotation = {_fmt(cfg.pose_noise_rotation)}",
        "path = [" + ", ".join(_fmt(v) for wp in cfg.path for v in wp) + "]",
    ]
    if cfg.headings:
        lines.append("headings = [" + ", ".join(_fmt(h) for h in cfg.headings) + "]")
    for body in cfg.bodies:
        kind = type(body).__name__.lower()
        vals = body.values()
        rendered = [str(int(vals[0]))] + [_fmt(v) for v in vals[1:]]
        lines.append(f"{kind} = [" + ", ".join(rendered) + "]")
    return "\n".join(lines) + "\n"
