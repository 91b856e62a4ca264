"""Readers and writers for sequence datasets in the SemanticKITTI on-disk layout.

A dataset root holds one directory per sequence (optionally under a
``sequences/`` directory):

    <root>/sequences/<seq>/velodyne/<frame:06>.bin   float32 x,y,z,intensity quads
    <root>/sequences/<seq>/labels/<frame:06>.label   uint32: semantic | instance << 16
    <root>/sequences/<seq>/poses.txt                 one 3x4 row-major pose per line
    <root>/sequences/<seq>/calib.txt                 line "Tr: <12 decimals>"

All binary values are little-endian. Poses on disk are expressed in the
calibration reference frame; readers fold the ``Tr`` extrinsic in so that
every pose handed out is world-from-LiDAR.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import geometry
from .errors import DataError, FormatError, MissingDataError
from .geometry import RigidTransform

SCAN_SUFFIX = ".bin"
LABEL_SUFFIX = ".label"
_POSE_ORTHO_TOL = 1e-4


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One LiDAR scan: (N, 3) float64 coordinates in meters plus intensities."""

    points: np.ndarray
    intensities: np.ndarray
    frame_id: int = 0
    sequence_id: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        inten = np.asarray(self.intensities, dtype=np.float64).reshape(-1)
        if len(pts) != len(inten):
            raise DataError(
                f"point/intensity count mismatch: {len(pts)} vs {len(inten)}"
            )
        pts.setflags(write=False)
        inten.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "intensities", inten)

    def __len__(self) -> int:
        return len(self.points)

    def with_points(self, points: np.ndarray) -> "PointCloud":
        """Copy of this cloud with replaced coordinates (same intensities/ids)."""
        return PointCloud(points, self.intensities, self.frame_id, self.sequence_id)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """Per-point semantic and instance ids, aligned index-for-index with a scan."""

    semantic: np.ndarray
    instance: np.ndarray
    frame_id: int = 0
    sequence_id: str = ""

    def __post_init__(self):
        sem = np.asarray(self.semantic, dtype=np.int32).reshape(-1)
        inst = np.asarray(self.instance, dtype=np.int32).reshape(-1)
        if len(sem) != len(inst):
            raise DataError(f"semantic/instance count mismatch: {len(sem)} vs {len(inst)}")
        for name, arr in (("semantic", sem), ("instance", inst)):
            if len(arr) and (arr.min() < 0 or arr.max() > 0xFFFF):
                raise DataError(f"{name} ids must fit in 16 bits")
        sem.setflags(write=False)
        inst.setflags(write=False)
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "instance", inst)

    def __len__(self) -> int:
        return len(self.semantic)


@dataclass(frozen=True, eq=False)
class SequenceInfo:
    sequence_id: str
    frame_count: int
    scan_frequency: float
    scan_paths: tuple
    label_paths: tuple | None
    poses: tuple
    calibration: RigidTransform | None


@dataclass(frozen=True, eq=False)
class SequenceManifest:
    sequences: tuple

    def total_frames(self) -> int:
        return sum(s.frame_count for s in self.sequences)

    def frames(self):
        """Yield (sequence_id, frame_id) over the whole manifest, in order."""
        for seq in self.sequences:
            for f in range(seq.frame_count):
                yield seq.sequence_id, f

    def sequence(self, sequence_id: str) -> SequenceInfo:
        for seq in self.sequences:
            if seq.sequence_id == sequence_id:
                return seq
        raise MissingDataError(f"unknown sequence {sequence_id!r}")


def read_scan(path, frame_id: int = 0, sequence_id: str = "") -> PointCloud:
    """Decode a .bin scan file: consecutive little-endian float32 (x, y, z, i)."""
    raw = Path(path).read_bytes()
    if len(raw) % 16 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 16 bytes")
    data = np.frombuffer(raw, dtype="<f4").reshape(-1, 4).astype(np.float64)
    bad = ~np.isfinite(data[:, :3]).all(axis=1)
    if bad.any():
        raise DataError(f"{path}: non-finite coordinate at point {int(np.argmax(bad))}")
    return PointCloud(data[:, :3], data[:, 3], frame_id, sequence_id)


def write_scan(cloud: PointCloud, path) -> None:
    data = np.empty((len(cloud), 4), dtype="<f4")
    data[:, :3] = cloud.points
    data[:, 3] = cloud.intensities
    Path(path).write_bytes(data.tobytes())


def read_labels(path, expected_count: int, frame_id: int = 0, sequence_id: str = "") -> LabelMap:
    """Decode a .label file: one uint32 per point, semantic in the low 16 bits."""
    raw = Path(path).read_bytes()
    if len(raw) != 4 * expected_count:
        raise FormatError(
            f"{path}: expected {expected_count} labels, file holds {len(raw) // 4}"
        )
    words = np.frombuffer(raw, dtype="<u4")
    return LabelMap(
        (words & 0xFFFF).astype(np.int32),
        (words >> 16).astype(np.int32),
        frame_id,
        sequence_id,
    )


def write_labels(labels: LabelMap, path) -> None:
    words = (
        labels.semantic.astype(np.uint32) | (labels.instance.astype(np.uint32) << 16)
    ).astype("<u4")
    Path(path).write_bytes(words.tobytes())


def _parse_matrix_line(line: str, lineno: int, path) -> np.ndarray:
    parts = line.split()
    if len(parts) != 12:
        raise FormatError(f"{path}:{lineno}: expected 12 values, got {len(parts)}")
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise FormatError(f"{path}:{lineno}: non-numeric pose entry") from None
    return np.array(values, dtype=np.float64).reshape(3, 4)


def _checked_transform(mat34: np.ndarray, context: str) -> RigidTransform:
    defect = geometry.rotation_defect(mat34[:, :3])
    if defect > _POSE_ORTHO_TOL:
        raise DataError(f"{context}: rotation defect {defect:.3e} exceeds {_POSE_ORTHO_TOL}")
    return RigidTransform(geometry.orthonormalize(mat34[:, :3]), mat34[:, 3])


def read_calibration(path) -> RigidTransform:
    """Extract the Tr extrinsic (sensor-to-reference) from a calib.txt file."""
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if line.startswith("Tr:") or line.startswith("Tr "):
            return _checked_transform(
                _parse_matrix_line(line.split(":", 1)[-1], lineno, path), f"{path}:{lineno}"
            )
    raise FormatError(f"{path}: no line starting with 'Tr:'")


def read_poses(pose_path, calib_path=None) -> list:
    """Read per-frame poses, normalized to world-from-LiDAR.

    File poses are expressed in the calibration reference frame; each is
    conjugated with ``Tr`` (``Tr^-1 . P . Tr``). Without a calibration file
    ``Tr`` is the identity. Rotations are re-orthonormalized to absorb the
    file's limited precision; a defect beyond 1e-4 is rejected.
    """
    tr = read_calibration(calib_path) if calib_path is not None else geometry.identity()
    tr_inv = geometry.invert(tr)
    poses = []
    for lineno, line in enumerate(Path(pose_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        pose = _checked_transform(
            _parse_matrix_line(line, lineno, pose_path), f"{pose_path}:{lineno}"
        )
        poses.append(geometry.compose(tr_inv, geometry.compose(pose, tr)))
    return poses


def write_poses(poses, pose_path, calibration: RigidTransform | None = None) -> None:
    """Write world-from-LiDAR poses, re-expressed in the calibration frame."""
    lines = []
    for pose in poses:
        if calibration is not None:
            pose = geometry.compose(
                calibration, geometry.compose(pose, geometry.invert(calibration))
            )
        mat = pose.as_matrix()[:3, :]
        lines.append(" ".join(f"{v:.17g}" for v in mat.reshape(-1)))
    Path(pose_path).write_text("\n".join(lines) + "\n")


def write_calibration(path, tr: RigidTransform) -> None:
    mat = tr.as_matrix()[:3, :]
    Path(path).write_text("Tr: " + " ".join(f"{v:.17g}" for v in mat.reshape(-1)) + "\n")


def _sequence_dirs(root: Path) -> list:
    base = root / "sequences" if (root / "sequences").is_dir() else root
    dirs = sorted(p for p in base.iterdir() if p.is_dir())
    return [d for d in dirs if (d / "velodyne").is_dir()]


def _frame_files(directory: Path, suffix: str, seq_id: str) -> tuple:
    files = sorted(directory.glob(f"*{suffix}"))
    for index, f in enumerate(files):
        try:
            stem_id = int(f.stem)
        except ValueError:
            raise DataError(f"{f}: scan file name is not a frame number") from None
        if stem_id != index:
            raise DataError(
                f"sequence {seq_id}: frame ids not contiguous, expected {index} got {stem_id}"
            )
    return tuple(files)


def build_manifest(dataset_root, scan_frequency_hz: float = 10.0) -> SequenceManifest:
    """Enumerate every sequence and frame under a dataset root, with validation."""
    root = Path(dataset_root)
    if not root.is_dir():
        raise MissingDataError(f"dataset root {root} does not exist")
    sequences = []
    for seq_dir in _sequence_dirs(root):
        seq_id = seq_dir.name
        scan_paths = _frame_files(seq_dir / "velodyne", SCAN_SUFFIX, seq_id)
        pose_path = seq_dir / "poses.txt"
        if not pose_path.is_file():
            raise MissingDataError(f"sequence {seq_id}: missing {pose_path}")
        calib_path = seq_dir / "calib.txt"
        calibration = read_calibration(calib_path) if calib_path.is_file() else None
        poses = read_poses(pose_path, calib_path if calib_path.is_file() else None)
        if len(poses) != len(scan_paths):
            raise DataError(
                f"sequence {seq_id}: {len(scan_paths)} scans but {len(poses)} poses"
            )
        label_paths = None
        if (seq_dir / "labels").is_dir():
            label_paths = _frame_files(seq_dir / "labels", LABEL_SUFFIX, seq_id)
            if len(label_paths) != len(scan_paths):
                raise DataError(
                    f"sequence {seq_id}: {len(scan_paths)} scans but "
                    f"{len(label_paths)} label files"
                )
        sequences.append(
            SequenceInfo(
                sequence_id=seq_id,
                frame_count=len(scan_paths),
                scan_frequency=float(scan_frequency_hz),
                scan_paths=scan_paths,
                label_paths=label_paths,
                poses=tuple(poses),
                calibration=calibration,
            )
        )
    return SequenceManifest(tuple(sequences))
