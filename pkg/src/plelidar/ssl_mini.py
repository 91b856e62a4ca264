"""Small-scale semi-supervised point classifier with student/teacher training.

The network is a two-layer fully-connected trunk with ReLU activations and
two parallel linear heads of identical shape. The clean head (`c`) trains on
trusted labels (ground truth and propagated estimates); the noisy head (`n`)
trains on pseudo-labels produced by the teacher's clean head, so noisy
self-training signals never reach the clean head's parameters directly (the
shared trunk still sees both). The teacher is an exponential moving average
of the student and also provides a consistency target.

Everything is plain numpy with hand-derived gradients; the finite-difference
oracle in the tests holds these to a relative 1e-4.

Losses per step over one batch:
  ce_clean      cross-entropy of student c-head on clean points
  lovasz        Lovasz-softmax of student c-head on clean points
  ce_pseudo     cross-entropy of student n-head on teacher pseudo-labels
                (confidence >= tau) over unlabeled points; routed through the
                c-head when single_branch is set
  consistency   mean squared difference between student and teacher c-head
                probabilities over the whole batch (reported unscaled; the
                total applies the lambda_mt coefficient)
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, ShapeError

IGNORE_LABEL = -1
KIND_NONE = 0
KIND_GROUND_TRUTH = 1
KIND_PLE = 2

PARAM_NAMES = ("w1", "b1", "w2", "b2", "wc", "bc", "wn", "bn")
MODEL_MAGIC = "dualheadnet 1"
HISTORY_COLUMNS = ("step", "ce_clean", "lovasz", "ce_pseudo", "consistency",
                   "pseudo_label_accuracy")


@dataclass(eq=False)
class DualHeadNet:
    params: dict

    @classmethod
    def init(cls, feature_dim: int, hidden: int, classes: int, seed: int = 0) -> "DualHeadNet":
        if feature_dim < 1 or hidden < 1 or classes < 2:
            raise ConfigError("need feature_dim >= 1, hidden >= 1, classes >= 2")
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
        params = {
            "w1": rng.standard_normal((feature_dim, hidden)) * np.sqrt(2.0 / feature_dim),
            "b1": np.zeros(hidden),
            "w2": rng.standard_normal((hidden, hidden)) * np.sqrt(2.0 / hidden),
            "b2": np.zeros(hidden),
            "wc": rng.standard_normal((hidden, classes)) * np.sqrt(1.0 / hidden),
            "bc": np.zeros(classes),
            "wn": rng.standard_normal((hidden, classes)) * np.sqrt(1.0 / hidden),
            "bn": np.zeros(classes),
        }
        return cls(params)

    @property
    def feature_dim(self) -> int:
        return self.params["w1"].shape[0]

    @property
    def classes(self) -> int:
        return self.params["wc"].shape[1]

    def copy(self) -> "DualHeadNet":
        return DualHeadNet({k: v.copy() for k, v in self.params.items()})

    def shapes(self) -> dict:
        return {k: v.shape for k, v in self.params.items()}


@dataclass(frozen=True)
class SSLConfig:
    lambda_mt: float = 250.0
    tau: float = 0.9
    alpha_ema: float = 0.99
    learning_rate: float = 0.02
    steps: int = 2000
    batch_size: int = 256
    hidden: int = 32
    seed: int = 0
    pseudo_lovasz: bool = False
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.lambda_mt < 0:
            raise ConfigError("lambda_mt cannot be negative")
        if not 0.0 <= self.tau <= 1.0:
            raise ConfigError("tau must lie in [0, 1]")
        if not 0.0 <= self.alpha_ema < 1.0:
            raise ConfigError("alpha_ema must lie in [0, 1)")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.steps < 0 or self.batch_size < 1 or self.hidden < 1:
            raise ConfigError("steps >= 0, batch_size >= 1, hidden >= 1 required")
        if self.checkpoint_every < 1:
            raise ConfigError("checkpoint_every must be >= 1")


@dataclass(frozen=True, eq=False)
class TrainBatch:
    """Per-point features with label routing.

    label_kind 1 and 2 mark trusted labels (the label array holds a class
    index); kind 0 marks unlabeled points, whose label must be the ignore
    marker -1.
    """

    features: np.ndarray
    labels: np.ndarray
    label_kind: np.ndarray

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        kind = np.asarray(self.label_kind, dtype=np.int8).reshape(-1)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {feats.shape}")
        if not (len(feats) == len(labels) == len(kind)):
            raise DataError("features, labels and label_kind lengths differ")
        if not np.isfinite(feats).all():
            raise DataError("non-finite feature value")
        if ((kind == KIND_NONE) != (labels == IGNORE_LABEL)).any():
            raise DataError("label_kind none must pair with the ignore marker")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_kind", kind)

    def __len__(self) -> int:
        return len(self.labels)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cache(net: DualHeadNet, features: np.ndarray) -> dict:
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.feature_dim:
        raise ShapeError(
            f"features of shape {x.shape} do not match input dimension {net.feature_dim}"
        )
    p = net.params
    z1 = x @ p["w1"] + p["b1"]
    a1 = np.maximum(z1, 0.0)
    z2 = a1 @ p["w2"] + p["b2"]
    a2 = np.maximum(z2, 0.0)
    return {
        "x": x,
        "z1": z1,
        "a1": a1,
        "z2": z2,
        "a2": a2,
        "c_logits": a2 @ p["wc"] + p["bc"],
        "n_logits": a2 @ p["wn"] + p["bn"],
    }


def forward(net: DualHeadNet, features: np.ndarray):
    """Logits of both heads plus the shared trunk activations."""
    cache = _forward_cache(net, features)
    return cache["c_logits"], cache["n_logits"], cache["a2"]


def cross_entropy(probs: np.ndarray, labels: np.ndarray, ignore: int = IGNORE_LABEL):
    """Mean negative log-probability of the true class over non-ignored points.

    Returns (loss, count); count 0 means nothing contributed and loss is 0.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    include = labels != ignore
    count = int(include.sum())
    if count == 0:
        return 0.0, 0
    rows = np.flatnonzero(include)
    picked = probs[rows, labels[rows]]
    return float(-np.log(picked).mean()), count


def _lovasz_weights(fg_sorted: np.ndarray) -> np.ndarray:
    gts = fg_sorted.sum()
    intersection = gts - np.cumsum(fg_sorted)
    union = gts + np.cumsum(~fg_sorted)
    jaccard = 1.0 - intersection / union
    weights = jaccard.copy()
    weights[1:] = jaccard[1:] - jaccard[:-1]
    return weights


def lovasz_softmax(probs: np.ndarray, labels: np.ndarray, ignore: int = IGNORE_LABEL) -> float:
    loss, _ = _lovasz_with_grad(probs, labels, ignore)
    return loss


def _lovasz_with_grad(probs: np.ndarray, labels: np.ndarray, ignore: int = IGNORE_LABEL):
    """Lovasz-softmax loss and its gradient with respect to `probs`.

    Per present class: errors are 1 - p(class) on its points and p(class)
    elsewhere; sorted descending, weighted by the discrete Jaccard-loss
    differences, summed, then averaged over the present classes. The sorting
    permutation is treated as locally constant for the gradient.
    """
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    include = labels != ignore
    grad = np.zeros_like(probs)
    if not include.any():
        return 0.0, grad
    rows = np.flatnonzero(include)
    p = probs[rows]
    y = labels[rows]
    present = np.unique(y)
    total = 0.0
    for c in present:
        fg = y == c
        m = np.where(fg, 1.0 - p[:, c], p[:, c])
        order = np.argsort(-m, kind="stable")
        weights = _lovasz_weights(fg[order])
        total += float(m[order] @ weights)
        dm = np.empty(len(m))
        dm[order] = weights
        grad[rows, c] += np.where(fg, -dm, dm)
    grad /= len(present)
    return total / len(present), grad


def mt_consistency(student_probs: np.ndarray, teacher_probs: np.ndarray) -> float:
    """Mean squared difference over every (point, class) entry."""
    s = np.asarray(student_probs, dtype=np.float64)
    t = np.asarray(teacher_probs, dtype=np.float64)
    if s.shape != t.shape:
        raise ShapeError(f"probability shapes differ: {s.shape} vs {t.shape}")
    if s.size == 0:
        return 0.0
    return float(np.mean((s - t) ** 2))


def pseudo_label(probs: np.ndarray, tau: float):
    """Argmax labels and a confidence mask (max probability >= tau)."""
    p = np.asarray(probs, dtype=np.float64)
    labels = np.argmax(p, axis=-1).astype(np.int64)
    mask = p.max(axis=-1) >= tau
    return labels, mask


def ema_update(teacher: DualHeadNet, student: DualHeadNet, alpha: float) -> DualHeadNet:
    """New teacher with every parameter at alpha*teacher + (1-alpha)*student."""
    if teacher.shapes() != student.shapes():
        raise ShapeError("teacher and student architectures differ")
    return DualHeadNet(
        {
            k: alpha * teacher.params[k] + (1.0 - alpha) * student.params[k]
            for k in teacher.params
        }
    )


def _softmax_backward(probs: np.ndarray, dprobs: np.ndarray) -> np.ndarray:
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def _zero_grads(net: DualHeadNet) -> dict:
    return {k: np.zeros_like(v) for k, v in net.params.items()}


def _backward(net: DualHeadNet, cache: dict, dzc: np.ndarray, dzn: np.ndarray) -> dict:
    p = net.params
    grads = {
        "wc": cache["a2"].T @ dzc,
        "bc": dzc.sum(axis=0),
        "wn": cache["a2"].T @ dzn,
        "bn": dzn.sum(axis=0),
    }
    da2 = dzc @ p["wc"].T + dzn @ p["wn"].T
    dz2 = da2 * (cache["z2"] > 0.0)
    grads["w2"] = cache["a1"].T @ dz2
    grads["b2"] = dz2.sum(axis=0)
    da1 = dz2 @ p["w2"].T
    dz1 = da1 * (cache["z1"] > 0.0)
    grads["w1"] = cache["x"].T @ dz1
    grads["b1"] = dz1.sum(axis=0)
    return grads


def _ce_logit_grad(probs: np.ndarray, rows: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """d(mean CE over rows)/d(logits), zero outside the given rows."""
    dz = np.zeros_like(probs)
    if len(rows) == 0:
        return dz
    dz[rows] = probs[rows]
    dz[rows, labels] -= 1.0
    dz[rows] /= len(rows)
    return dz


def loss_terms(student: DualHeadNet, teacher: DualHeadNet, batch: TrainBatch,
               cfg: SSLConfig, single_branch: bool = False):
    """Loss values and per-term parameter gradients for one batch.

    Returns (losses, grads) where losses maps term name to its value (the
    consistency entry is the raw mean squared error) and grads maps term name
    to a full parameter-gradient dict. The total objective is
    ce_clean + lovasz + ce_pseudo + lambda_mt * consistency.
    """
    cache = _forward_cache(student, batch.features)
    c_probs = softmax(cache["c_logits"])
    n_probs = softmax(cache["n_logits"])
    t_cache = _forward_cache(teacher, batch.features)
    t_probs = softmax(t_cache["c_logits"])

    clean = batch.label_kind != KIND_NONE
    clean_rows = np.flatnonzero(clean)
    unlabeled_rows = np.flatnonzero(~clean)
    zeros = np.zeros_like(c_probs)
    losses: dict = {}
    grads: dict = {}

    ce_val, _ = cross_entropy(c_probs[clean_rows], batch.labels[clean_rows])
    losses["ce_clean"] = ce_val
    dzc = _ce_logit_grad(c_probs, clean_rows, batch.labels[clean_rows])
    grads["ce_clean"] = _backward(student, cache, dzc, zeros)

    lov_val, dprob_sub = _lovasz_with_grad(c_probs[clean_rows], batch.labels[clean_rows])
    losses["lovasz"] = lov_val
    dprobs = np.zeros_like(c_probs)
    dprobs[clean_rows] = dprob_sub
    grads["lovasz"] = _backward(student, cache, _softmax_backward(c_probs, dprobs), zeros)

    t_labels, t_mask = pseudo_label(t_probs[unlabeled_rows], cfg.tau)
    taken = unlabeled_rows[t_mask]
    taken_labels = t_labels[t_mask]
    head_probs = c_probs if single_branch else n_probs
    pseudo_val, _ = cross_entropy(head_probs[taken], taken_labels)
    dz_pseudo = _ce_logit_grad(head_probs, taken, taken_labels)
    if cfg.pseudo_lovasz:
        extra, dprob_sub = _lovasz_with_grad(head_probs[taken], taken_labels)
        pseudo_val += extra
        dprobs = np.zeros_like(head_probs)
        dprobs[taken] = dprob_sub
        dz_pseudo = dz_pseudo + _softmax_backward(head_probs, dprobs)
    losses["ce_pseudo"] = pseudo_val
    if single_branch:
        grads["ce_pseudo"] = _backward(student, cache, dz_pseudo, zeros)
    else:
        grads["ce_pseudo"] = _backward(student, cache, zeros, dz_pseudo)

    losses["consistency"] = mt_consistency(c_probs, t_probs)
    dmse = 2.0 * (c_probs - t_probs) / c_probs.size
    grads["consistency"] = _backward(student, cache, _softmax_backward(c_probs, dmse), zeros)

    losses["total"] = (
        losses["ce_clean"] + losses["lovasz"] + losses["ce_pseudo"]
        + cfg.lambda_mt * losses["consistency"]
    )
    return losses, grads


def total_loss(student: DualHeadNet, teacher: DualHeadNet, batch: TrainBatch,
               cfg: SSLConfig, single_branch: bool = False) -> float:
    losses, _ = loss_terms(student, teacher, batch, cfg, single_branch)
    return losses["total"]


def total_gradient(grads: dict, cfg: SSLConfig) -> dict:
    out = {}
    for name in PARAM_NAMES:
        out[name] = (
            grads["ce_clean"][name]
            + grads["lovasz"][name]
            + grads["ce_pseudo"][name]
            + cfg.lambda_mt * grads["consistency"][name]
        )
    return out


def train_step(student: DualHeadNet, teacher: DualHeadNet, batch: TrainBatch,
               cfg: SSLConfig, single_branch: bool = False):
    """One gradient-descent step on the student followed by the teacher EMA.

    Returns (student, teacher, losses). An empty batch is a no-op with zero
    losses.
    """
    if len(batch) == 0:
        zero = {k: 0.0 for k in ("ce_clean", "lovasz", "ce_pseudo", "consistency", "total")}
        return student, teacher, zero
    losses, grads = loss_terms(student, teacher, batch, cfg, single_branch)
    total = total_gradient(grads, cfg)
    new_student = DualHeadNet(
        {k: student.params[k] - cfg.learning_rate * total[k] for k in PARAM_NAMES}
    )
    new_teacher = ema_update(teacher, new_student, cfg.alpha_ema)
    return new_student, new_teacher, losses


@dataclass(frozen=True, eq=False)
class TrainData:
    """A full training set with oracle labels for scoring pseudo-labels.

    `labels`/`label_kind` follow TrainBatch semantics; `oracle` holds the true
    class index of every point regardless of kind (available in synthetic
    datasets), used only for measuring pseudo-label accuracy.
    """

    features: np.ndarray
    labels: np.ndarray
    label_kind: np.ndarray
    oracle: np.ndarray
    num_classes: int

    def __post_init__(self):
        batch = TrainBatch(self.features, self.labels, self.label_kind)
        oracle = np.asarray(self.oracle, dtype=np.int64).reshape(-1)
        if len(oracle) != len(batch):
            raise DataError("oracle length mismatch")
        if self.num_classes < 2:
            raise ConfigError("need at least two classes")
        if len(oracle) and (oracle.min() < 0 or oracle.max() >= self.num_classes):
            raise DataError("oracle labels out of range")
        object.__setattr__(self, "features", batch.features)
        object.__setattr__(self, "labels", batch.labels)
        object.__setattr__(self, "label_kind", batch.label_kind)
        object.__setattr__(self, "oracle", oracle)

    def __len__(self) -> int:
        return len(self.labels)


def pseudo_label_accuracy(teacher: DualHeadNet, data: TrainData, tau: float) -> float:
    """Fraction of confident teacher pseudo-labels that match the oracle,
    over unlabeled points. 0.0 when nothing clears the threshold."""
    rows = np.flatnonzero(data.label_kind == KIND_NONE)
    if len(rows) == 0:
        return 0.0
    probs = softmax(forward(teacher, data.features[rows])[0])
    labels, mask = pseudo_label(probs, tau)
    if not mask.any():
        return 0.0
    return float(np.mean(labels[mask] == data.oracle[rows][mask]))


def train_loop(data: TrainData, cfg: SSLConfig, single_branch: bool = False):
    """Run cfg.steps training steps; returns (student, teacher, history).

    History rows follow HISTORY_COLUMNS, recorded every cfg.checkpoint_every
    steps and at the final step. With single_branch the n-head never receives
    gradients and pseudo-label cross-entropy flows through the c-head.
    """
    student = DualHeadNet.init(data.features.shape[1], cfg.hidden, data.num_classes, cfg.seed)
    teacher = student.copy()
    history: list = []
    if cfg.steps == 0:
        return student, teacher, history
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(1,)))
    n = len(data)
    for step in range(1, cfg.steps + 1):
        idx = rng.choice(n, size=min(cfg.batch_size, n), replace=False)
        batch = TrainBatch(data.features[idx], data.labels[idx], data.label_kind[idx])
        student, teacher, losses = train_step(student, teacher, batch, cfg, single_branch)
        if step % cfg.checkpoint_every == 0 or step == cfg.steps:
            acc = pseudo_label_accuracy(teacher, data, cfg.tau)
            history.append(
                (step, losses["ce_clean"], losses["lovasz"], losses["ce_pseudo"],
                 losses["consistency"], acc)
            )
    return student, teacher, history


def write_history(history, path) -> None:
    lines = [",".join(HISTORY_COLUMNS)]
    for row in history:
        step = int(row[0])
        lines.append(str(step) + "," + ",".join(f"{v:.17g}" for v in row[1:]))
    Path(path).write_text("\n".join(lines) + "\n")


def read_history(path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != ",".join(HISTORY_COLUMNS):
        raise FormatError(f"{path}: missing history header")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(HISTORY_COLUMNS):
            raise FormatError(f"{path}: expected {len(HISTORY_COLUMNS)} columns")
        out.append((int(parts[0]), *[float(v) for v in parts[1:]]))
    return out


def save_model(net: DualHeadNet, path) -> None:
    """Text header naming parameter shapes, then the flat little-endian
    float64 parameter data in header order."""
    header = [MODEL_MAGIC]
    for name in PARAM_NAMES:
        dims = " ".join(str(d) for d in net.params[name].shape)
        header.append(f"{name} {dims}")
    header.append("end")
    blob = b"".join(
        np.ascontiguousarray(net.params[name], dtype="<f8").tobytes()
        for name in PARAM_NAMES
    )
    Path(path).write_bytes(("\n".join(header) + "\n").encode("ascii") + blob)


def load_model(path) -> DualHeadNet:
    raw = Path(path).read_bytes()
    marker = b"\nend\n"
    cut = raw.find(marker)
    if cut < 0:
        raise FormatError(f"{path}: missing model header terminator")
    header_lines = raw[:cut].decode("ascii", errors="replace").splitlines()
    if not header_lines or header_lines[0] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model file")
    shapes = {}
    for line in header_lines[1:]:
        parts = line.split()
        if parts[0] not in PARAM_NAMES or len(parts) < 2:
            raise FormatError(f"{path}: unexpected header line {line!r}")
        shapes[parts[0]] = tuple(int(d) for d in parts[1:])
    if set(shapes) != set(PARAM_NAMES):
        raise FormatError(f"{path}: header does not name every parameter")
    blob = raw[cut + len(marker):]
    values = np.frombuffer(blob, dtype="<f8")
    params = {}
    offset = 0
    for name in PARAM_NAMES:
        size = int(np.prod(shapes[name]))
        chunk = values[offset : offset + size]
        if len(chunk) != size:
            raise FormatError(f"{path}: truncated parameter data")
        params[name] = chunk.reshape(shapes[name]).astype(np.float64)
        offset += size
    if offset != len(values):
        raise FormatError(f"{path}: trailing bytes after parameters")
    return DualHeadNet(params)


def build_features(points: np.ndarray, voxel_size: float = 1.0) -> np.ndarray:
    """Per-point feature rows: x, y, z, range, height above the cloud's
    minimum, and normalized voxel occupancy; standardized per column."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(pts)
    if n == 0:
        return np.zeros((0, 6))
    feats = np.empty((n, 6))
    feats[:, :3] = pts
    feats[:, 3] = np.linalg.norm(pts, axis=1)
    feats[:, 4] = pts[:, 2] - pts[:, 2].min()
    keys = np.floor(pts / voxel_size).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    feats[:, 5] = counts[inverse] / counts.max()
    mean = feats.mean(axis=0)
    std = feats.std(axis=0)
    std[std == 0.0] = 1.0
    return (feats - mean) / std


def assemble_training_data(source, split: dict, ple_maps: dict | None = None,
                           max_points: int | None = None, seed: int = 0) -> TrainData:
    """Flatten a dataset into TrainData.

    Points of split-labeled frames become ground-truth kind; points of frames
    with an estimate in `ple_maps` take its valid labels as ple kind; all
    other points are unlabeled. Ground truth is required on every frame to
    provide the oracle; ignore-class points are dropped.
    """
    ple_maps = ple_maps or {}
    class_ids: set = set()
    for seq in source.sequence_ids():
        for f in range(source.frame_count(seq)):
            class_ids.update(int(c) for c in np.unique(source.gt_labels(seq, f).semantic))
    class_ids.discard(0)
    classes = sorted(class_ids)
    if len(classes) < 2:
        raise DataError("dataset holds fewer than two classes")
    index_of = {c: i for i, c in enumerate(classes)}

    feats_parts, label_parts, kind_parts, oracle_parts = [], [], [], []
    for seq in source.sequence_ids():
        labeled = set(split.get(seq, ()))
        for f in range(source.frame_count(seq)):
            cloud = source.cloud(seq, f)
            gt = source.gt_labels(seq, f)
            keep = gt.semantic != 0
            feats = build_features(cloud.points)[keep]
            oracle = np.array([index_of[c] for c in gt.semantic[keep]], dtype=np.int64)
            n = len(oracle)
            labels = np.full(n, IGNORE_LABEL, dtype=np.int64)
            kind = np.full(n, KIND_NONE, dtype=np.int8)
            if f in labeled:
                labels = oracle.copy()
                kind[:] = KIND_GROUND_TRUTH
            elif (seq, f) in ple_maps:
                pmap = ple_maps[(seq, f)]
                if len(pmap) != len(gt):
                    raise DataError(f"frame {seq}/{f}: estimate and scan sizes differ")
                sem = pmap.semantic[keep]
                usable = pmap.valid[keep] & (sem != 0)
                for c in np.unique(sem[usable]):
                    if int(c) not in index_of:
                        raise DataError(f"frame {seq}/{f}: unknown class {int(c)}")
                labels[usable] = [index_of[int(c)] for c in sem[usable]]
                kind[usable] = KIND_PLE
            feats_parts.append(feats)
            label_parts.append(labels)
            kind_parts.append(kind)
            oracle_parts.append(oracle)
    features = np.concatenate(feats_parts, axis=0)
    labels = np.concatenate(label_parts)
    kind = np.concatenate(kind_parts)
    oracle = np.concatenate(oracle_parts)
    if max_points is not None and len(labels) > max_points:
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
        pick = np.sort(rng.choice(len(labels), size=max_points, replace=False))
        features, labels, kind, oracle = (
            features[pick], labels[pick], kind[pick], oracle[pick]
        )
    return TrainData(features, labels, kind, oracle, len(classes))
