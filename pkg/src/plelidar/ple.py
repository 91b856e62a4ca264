"""Proximity-based label propagation between pose-aligned scans.

A scan without annotations borrows labels from nearby labeled scans: the
labeled points are transformed into the target's sensor frame with the pose
difference, pooled into one KD-tree, and every target point takes the class
of its globally nearest pooled point.

Two drivers exist. ``run_naive`` references ground-truth frames only, within
a temporal window around each unlabeled frame. ``run_progressive`` moves
outward from the labeled frames in rounds of growing temporal offset, letting
earlier-round outputs serve as references for later rounds; every frame
belongs to exactly one chain, rooted at its temporally nearest ground-truth
frame (ties to the earlier frame id), and its references always stay within
the window of that root.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import geometry, lidar_io
from .errors import ConfigError, DataError, EmptyIndexError, FormatError
from .lidar_io import LabelMap, PointCloud, SequenceManifest
from .spatial_index import KdTree
from .split import round_half_up

IGNORE_CLASS = 0
ORIGIN_GROUND_TRUTH = 0
ORIGIN_PLE = 1

PLE_SUFFIX = ".ple"
META_SUFFIX = ".meta"
_SEMANTIC_MASK = 0xFFFF
_ORIGIN_BIT = 1 << 16
_VALID_BIT = 1 << 17


@dataclass(frozen=True)
class PleConfig:
    window_seconds: float = 1.0
    max_references: int = 4
    max_distance: float | None = None
    progressive: bool = False

    def __post_init__(self):
        if self.window_seconds <= 0:
            raise ConfigError(f"window_seconds must be positive, got {self.window_seconds}")
        if self.max_references < 1:
            raise ConfigError(f"max_references must be >= 1, got {self.max_references}")
        if self.max_distance is not None and self.max_distance <= 0:
            raise ConfigError(f"max_distance must be positive, got {self.max_distance}")

    def window_frames(self, frequency: float) -> int:
        return round_half_up(self.window_seconds * frequency)


@dataclass(frozen=True, eq=False)
class PseudoLabelMap:
    """Estimated labels for one scan plus their provenance.

    ``origin_kind`` records whether each label was copied from a ground-truth
    reference (0) or from an earlier estimate (1). Points with valid=False
    exceeded ``max_distance`` and carry the ignore class.
    """

    semantic: np.ndarray
    source_frame: np.ndarray
    source_distance: np.ndarray
    valid: np.ndarray
    origin_kind: np.ndarray
    frame_id: int = 0
    sequence_id: str = ""
    references: tuple = ()

    def __post_init__(self):
        sem = np.asarray(self.semantic, dtype=np.int32).reshape(-1)
        src = np.asarray(self.source_frame, dtype=np.int32).reshape(-1)
        dist = np.asarray(self.source_distance, dtype=np.float64).reshape(-1)
        valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        origin = np.asarray(self.origin_kind, dtype=np.uint8).reshape(-1)
        n = len(sem)
        for name, arr in (("source_frame", src), ("source_distance", dist),
                          ("valid", valid), ("origin_kind", origin)):
            if len(arr) != n:
                raise DataError(f"{name} length {len(arr)} does not match {n} points")
        if (sem[~valid] != IGNORE_CLASS).any():
            raise DataError("invalid points must carry the ignore class")
        if len(dist) and valid.any() and dist[valid].min() < 0:
            raise DataError("negative source distance")
        for arr in (sem, src, dist, valid, origin):
            arr.setflags(write=False)
        object.__setattr__(self, "semantic", sem)
        object.__setattr__(self, "source_frame", src)
        object.__setattr__(self, "source_distance", dist)
        object.__setattr__(self, "valid", valid)
        object.__setattr__(self, "origin_kind", origin)
        object.__setattr__(self, "references", tuple(int(r) for r in self.references))

    def __len__(self) -> int:
        return len(self.semantic)

    def mean_distance(self) -> float:
        if not self.valid.any():
            return 0.0
        return float(self.source_distance[self.valid].mean())


def select_references(labeled: set, target: int, cfg: PleConfig, frequency: float) -> list:
    """Labeled frames usable for `target`: in-window, nearest first.

    Ordered by ascending |frame offset|, ties broken by the earlier frame id,
    truncated to cfg.max_references. Empty when nothing is in range.
    """
    window = cfg.window_frames(frequency)
    in_range = [f for f in labeled if f != target and abs(f - target) <= window]
    in_range.sort(key=lambda f: (abs(f - target), f))
    return in_range[: cfg.max_references]


def _reference_pool(references):
    points, semantics, frames, origins = [], [], [], []
    for cloud, labels, transform in references:
        if len(cloud) != len(labels):
            raise DataError(
                f"reference frame {labels.frame_id}: {len(cloud)} points "
                f"but {len(labels)} labels"
            )
        if isinstance(labels, PseudoLabelMap):
            mask = labels.valid
            pts = cloud.points[mask]
            sem = labels.semantic[mask]
            origin = ORIGIN_PLE
        else:
            pts = cloud.points
            sem = labels.semantic
            origin = ORIGIN_GROUND_TRUTH
        if len(pts) == 0:
            continue
        points.append(geometry.apply_points(transform, pts))
        semantics.append(sem)
        frames.append(np.full(len(pts), labels.frame_id, dtype=np.int32))
        origins.append(np.full(len(pts), origin, dtype=np.uint8))
    if not points:
        raise EmptyIndexError("no labeled points available in any reference")
    return (
        np.concatenate(points, axis=0),
        np.concatenate(semantics),
        np.concatenate(frames),
        np.concatenate(origins),
    )


def estimate_labels(target_cloud: PointCloud, references, cfg: PleConfig) -> PseudoLabelMap:
    """Label every target point from its nearest pooled reference point.

    `references` is a sequence of (cloud, labels, transform) triples where
    the transform maps that reference's sensor frame into the target's frame
    and labels is a LabelMap or an earlier PseudoLabelMap (only its valid
    points contribute).
    """
    if not references:
        raise EmptyIndexError("no reference frames given")
    pool_pts, pool_sem, pool_frame, pool_origin = _reference_pool(references)
    tree = KdTree(pool_pts)
    idx, dist = tree.nearest(target_cloud.points)
    semantic = pool_sem[idx].astype(np.int32)
    valid = np.ones(len(idx), dtype=bool)
    if cfg.max_distance is not None:
        valid = dist <= cfg.max_distance
        semantic = np.where(valid, semantic, IGNORE_CLASS).astype(np.int32)
    return PseudoLabelMap(
        semantic=semantic,
        source_frame=pool_frame[idx],
        source_distance=dist,
        valid=valid,
        origin_kind=pool_origin[idx],
        frame_id=target_cloud.frame_id,
        sequence_id=target_cloud.sequence_id,
        references=tuple(labels.frame_id for _, labels, _ in references),
    )


class DatasetSource:
    """Frame access over an in-memory generated dataset (single sequence)."""

    def __init__(self, dataset):
        self._data = dataset

    def sequence_ids(self) -> tuple:
        return ("00",)

    def frame_count(self, seq: str) -> int:
        return len(self._data)

    def frequency(self, seq: str) -> float:
        return self._data.frequency

    def cloud(self, seq: str, frame: int) -> PointCloud:
        return self._data.clouds[frame]

    def gt_labels(self, seq: str, frame: int) -> LabelMap:
        return self._data.labels[frame]

    def pose(self, seq: str, frame: int) -> geometry.RigidTransform:
        return self._data.poses[frame]


class ManifestSource:
    """Frame access over an on-disk dataset, with a small read cache."""

    def __init__(self, manifest: SequenceManifest, cache_frames: int = 128):
        self._manifest = manifest
        self._by_id = {s.sequence_id: s for s in manifest.sequences}
        self._read = lru_cache(maxsize=cache_frames)(self._read_frame)

    def _read_frame(self, seq: str, frame: int):
        info = self._by_id[seq]
        cloud = lidar_io.read_scan(info.scan_paths[frame], frame, seq)
        labels = None
        if info.label_paths is not None:
            labels = lidar_io.read_labels(info.label_paths[frame], len(cloud), frame, seq)
        return cloud, labels

    def sequence_ids(self) -> tuple:
        return tuple(s.sequence_id for s in self._manifest.sequences)

    def frame_count(self, seq: str) -> int:
        return self._by_id[seq].frame_count

    def frequency(self, seq: str) -> float:
        return self._by_id[seq].scan_frequency

    def cloud(self, seq: str, frame: int) -> PointCloud:
        return self._read(seq, frame)[0]

    def gt_labels(self, seq: str, frame: int) -> LabelMap:
        labels = self._read(seq, frame)[1]
        if labels is None:
            raise DataError(f"sequence {seq} has no label files")
        return labels

    def pose(self, seq: str, frame: int) -> geometry.RigidTransform:
        return self._by_id[seq].poses[frame]


def _estimate_for(source, seq: str, target: int, refs, labels_of, cfg: PleConfig) -> PseudoLabelMap:
    target_pose = source.pose(seq, target)
    references = [
        (
            source.cloud(seq, g),
            labels_of(g),
            geometry.relative_transform(source.pose(seq, g), target_pose),
        )
        for g in refs
    ]
    return estimate_labels(source.cloud(seq, target), references, cfg)


def _run_jobs(jobs, workers: int):
    """Evaluate callables preserving order; thread count never affects output."""
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(job) for job in jobs]
        return [f.result() for f in futures]


def run_naive(source, split: dict, cfg: PleConfig, workers: int = 1) -> dict:
    """Estimate labels for every unlabeled frame with a ground-truth frame in window.

    Returns {(sequence_id, frame_id): PseudoLabelMap}. Frames with no
    in-window ground-truth reference are left out.
    """
    if cfg.progressive:
        raise ConfigError("run_naive requires cfg.progressive = False")
    results: dict = {}
    for seq in source.sequence_ids():
        labeled = set(split.get(seq, ()))
        if not labeled:
            continue
        freq = source.frequency(seq)
        plan = []
        for f in range(source.frame_count(seq)):
            if f in labeled:
                continue
            refs = select_references(labeled, f, cfg, freq)
            if refs:
                plan.append((f, refs))
        jobs = [
            (lambda f=f, refs=refs: _estimate_for(
                source, seq, f, refs, lambda g: source.gt_labels(seq, g), cfg
            ))
            for f, refs in plan
        ]
        for (f, _), pmap in zip(plan, _run_jobs(jobs, workers)):
            results[(seq, f)] = pmap
    return results


def chain_root(labeled: set, target: int) -> int:
    """The ground-truth frame whose chain owns `target` (earlier id on ties)."""
    return min(labeled, key=lambda g: (abs(g - target), g))


def schedule_progressive(labeled: set, length: int, cfg: PleConfig, frequency: float) -> list:
    """Round-by-round plan for one sequence.

    Returns a list of rounds; round k-1 holds (target, references) pairs for
    all frames at offset k from their chain root. References are selected
    from frames already labeled before the round starts (ground truth plus
    all earlier rounds), restricted to the window of the target's root.
    """
    window = cfg.window_frames(frequency)
    roots = {}
    for f in range(length):
        if f in labeled or not labeled:
            continue
        root = chain_root(labeled, f)
        if abs(f - root) <= window:
            roots[f] = root
    rounds = []
    grown = set(labeled)
    for k in range(1, window + 1):
        targets = sorted(f for f, root in roots.items() if abs(f - root) == k)
        if not targets:
            continue
        entries = []
        for f in targets:
            candidates = {g for g in grown if abs(g - roots[f]) <= window}
            refs = select_references(candidates, f, cfg, frequency)
            entries.append((f, tuple(refs)))
        rounds.append(entries)
        grown.update(targets)
    return rounds


def run_progressive(source, split: dict, cfg: PleConfig, workers: int = 1) -> dict:
    """Estimate labels outward from the ground-truth frames, round by round.

    Covers exactly the frames run_naive covers; within each round the
    reference store is frozen, so results are independent of worker count.
    """
    if not cfg.progressive:
        raise ConfigError("run_progressive requires cfg.progressive = True")
    results: dict = {}
    for seq in source.sequence_ids():
        labeled = set(split.get(seq, ()))
        if not labeled:
            continue
        freq = source.frequency(seq)
        plan = schedule_progressive(labeled, source.frame_count(seq), cfg, freq)
        store: dict = {}

        def labels_of(g, seq=seq, store=store):
            if g in store:
                return store[g]
            return source.gt_labels(seq, g)

        for entries in plan:
            jobs = [
                (lambda f=f, refs=refs: _estimate_for(source, seq, f, refs, labels_of, cfg))
                for f, refs in entries
            ]
            outputs = _run_jobs(jobs, workers)
            for (f, _), pmap in zip(entries, outputs):
                store[f] = pmap
                results[(seq, f)] = pmap
    return results


def write_ple(pmap: PseudoLabelMap, path) -> None:
    """Persist a label estimate as packed words plus a text sidecar.

    Word layout per point: class id in bits 0..15, origin kind in bit 16,
    validity in bit 17. The sidecar (same name, .meta) records the reference
    frames and the mean source distance; per-point distances and source
    frames are not persisted.
    """
    words = (
        pmap.semantic.astype(np.uint32)
        | (pmap.origin_kind.astype(np.uint32) << 16)
        | (pmap.valid.astype(np.uint32) << 17)
    ).astype("<u4")
    path = Path(path)
    path.write_bytes(words.tobytes())
    meta = [
        f"sequence = {pmap.sequence_id}",
        f"frame = {pmap.frame_id}",
        "references = " + ", ".join(str(r) for r in pmap.references),
        f"mean_distance = {pmap.mean_distance():.17g}",
    ]
    path.with_suffix(META_SUFFIX).write_text("\n".join(meta) + "\n")


def read_ple(path, frame_id: int = 0, sequence_id: str = "") -> PseudoLabelMap:
    """Load a persisted estimate. Source frames and distances are not stored;
    they come back as -1 and 0.0."""
    raw = Path(path).read_bytes()
    if len(raw) % 4 != 0:
        raise FormatError(f"{path}: length {len(raw)} is not a multiple of 4")
    words = np.frombuffer(raw, dtype="<u4")
    valid = (words & _VALID_BIT) != 0
    meta_path = Path(path).with_suffix(META_SUFFIX)
    references: tuple = ()
    if meta_path.is_file():
        meta = read_meta(meta_path)
        references = meta["references"]
        frame_id = meta["frame"]
        sequence_id = meta["sequence"]
    return PseudoLabelMap(
        semantic=(words & _SEMANTIC_MASK).astype(np.int32),
        source_frame=np.full(len(words), -1, dtype=np.int32),
        source_distance=np.zeros(len(words)),
        valid=valid,
        origin_kind=((words & _ORIGIN_BIT) != 0).astype(np.uint8),
        frame_id=frame_id,
        sequence_id=sequence_id,
        references=references,
    )


def read_meta(path) -> dict:
    fields: dict = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        fields[key.strip()] = value.strip()
    try:
        return {
            "sequence": fields["sequence"],
            "frame": int(fields["frame"]),
            "references": tuple(
                int(r) for r in fields["references"].split(",") if r.strip()
            ),
            "mean_distance": float(fields["mean_distance"]),
        }
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: missing or malformed field ({exc})") from None
