"""Skeleton sequence data model, dataset I/O, splitting, sampling and masking.

A sample is a time-ordered array of 3D joint coordinates with an optional
action label. Datasets live on disk as JSON-lines files; one record per
sequence::

    {"id": "s00012", "label": 3, "frames": [[[x, y, z] * J] * T]}

The synthetic generator produces a desk-scale motion corpus in which each
class is a distinct family of per-joint sinusoidal trajectories, so that
class structure is recoverable but not trivial under per-sample rotation,
speed and noise augmentation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ContractError, DataFormatError, SplitError
from .seeding import derive_seed


@dataclass
class SkeletonSequence:
    """One motion sample: ``frames`` has shape (T_raw, J, 3)."""

    id: str
    frames: np.ndarray
    label: int | None = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise ContractError(
                f"sequence {self.id!r}: frames must have shape (T, J, 3), got {self.frames.shape}"
            )
        if self.frames.shape[0] < 2:
            raise ContractError(f"sequence {self.id!r}: need at least 2 frames")
        if self.frames.shape[1] < 1:
            raise ContractError(f"sequence {self.id!r}: need at least 1 joint")
        if not np.isfinite(self.frames).all():
            raise ContractError(f"sequence {self.id!r}: non-finite coordinates")
        if self.label is not None and (not isinstance(self.label, int) or self.label < 0):
            raise ContractError(f"sequence {self.id!r}: label must be a non-negative int or None")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def num_joints(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class MaskSpec:
    """A contiguous span of frames to blank out: [start, start + length)."""

    start: int
    length: int

    def validate(self, num_frames: int) -> None:
        if self.start < 0 or self.length < 1 or self.start + self.length > num_frames:
            raise ContractError(
                f"mask [{self.start}, {self.start + self.length}) invalid for {num_frames} frames"
            )


@dataclass(frozen=True)
class SyntheticConfig:
    classes: int = 6
    joints: int = 8
    frames: int = 60
    samples_per_class: int = 100
    noise_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ConfigError("need at least 2 classes")
        if min(self.joints, self.frames, self.samples_per_class) < 1:
            raise ConfigError("joints, frames and samples_per_class must be positive")
        if self.frames < 2:
            raise ConfigError("need at least 2 frames per sequence")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be non-negative")


@dataclass
class DatasetSplit:
    """Stratified partition of a corpus into labeled / unlabeled / test pools.

    Unlabeled sequences carry ``label=None``; their ground-truth labels are
    retained internally for evaluation-only diagnostics and are reachable
    solely through :meth:`evaluation_labels`. Training code must never read
    that accessor.
    """

    labeled: list[SkeletonSequence]
    unlabeled: list[SkeletonSequence]
    test: list[SkeletonSequence]
    fraction: float
    _hidden_labels: dict[str, int] = field(default_factory=dict, repr=False)

    def evaluation_labels(self) -> dict[str, int]:
        """Ground-truth labels of the unlabeled pool. Evaluation use only."""
        return dict(self._hidden_labels)

    @property
    def class_count(self) -> int:
        labels = [s.label for s in self.labeled + self.test if s.label is not None]
        labels += list(self._hidden_labels.values())
        return max(labels) + 1 if labels else 0


# ---------------------------------------------------------------------------
# dataset I/O
# ---------------------------------------------------------------------------


def load_dataset(path) -> list[SkeletonSequence]:
    """Parse a JSON-lines dataset file, preserving record order.

    Raises DataFormatError naming the 1-based line number of the first
    malformed record, or complaining about inconsistent joint counts.
    """
    sequences: list[SkeletonSequence] = []
    joints: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
            if not isinstance(record, dict) or "id" not in record or "frames" not in record:
                raise DataFormatError(f"line {lineno}: record needs 'id' and 'frames' fields")
            label = record.get("label")
            if label is not None and not isinstance(label, int):
                raise DataFormatError(f"line {lineno}: label must be an integer or null")
            try:
                frames = np.asarray(record["frames"], dtype=np.float64)
            except (ValueError, TypeError) as exc:
                raise DataFormatError(f"line {lineno}: ragged or non-numeric frames") from exc
            if frames.ndim != 3 or frames.shape[2] != 3:
                raise DataFormatError(
                    f"line {lineno}: frames must be (T, J, 3) nested lists, got shape {frames.shape}"
                )
            if joints is None:
                joints = frames.shape[1]
            elif frames.shape[1] != joints:
                raise DataFormatError(
                    f"line {lineno}: joint count {frames.shape[1]} differs from {joints} seen earlier"
                )
            try:
                sequences.append(SkeletonSequence(str(record["id"]), frames, label))
            except ContractError as exc:
                raise DataFormatError(f"line {lineno}: {exc}") from exc
    return sequences


def write_dataset(sequences: list[SkeletonSequence], path) -> None:
    """Write sequences as JSON-lines. Coordinates survive a round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            record = {"id": seq.id, "label": seq.label, "frames": seq.frames.tolist()}
            fh.write(json.dumps(record) + "\n")


# ---------------------------------------------------------------------------
# splitting
# ---------------------------------------------------------------------------


def make_split(
    data: list[SkeletonSequence],
    fraction: float,
    seed: int,
    test: list[SkeletonSequence] | None = None,
) -> DatasetSplit:
    """Stratified per-class selection of labeled samples; the rest go unlabeled.

    Per class the labeled count is round(fraction * class size). Every class
    must end up with at least one labeled sample, since positive-neighbor
    selection needs a labeled 1-NN for each class.
    """
    if not 0 < fraction <= 1:
        raise SplitError(f"fraction must be in (0, 1], got {fraction}")
    by_class: dict[int, list[int]] = {}
    for idx, seq in enumerate(data):
        if seq.label is None:
            raise SplitError(f"sequence {seq.id!r} is unlabeled; make_split needs full labels")
        by_class.setdefault(seq.label, []).append(idx)

    rng = np.random.default_rng(derive_seed(seed, "label-split"))
    labeled_idx: set[int] = set()
    for label in sorted(by_class):
        members = by_class[label]
        count = int(round(fraction * len(members)))
        if count == 0:
            raise SplitError(
                f"class {label} would get 0 labeled samples at fraction {fraction}; "
                "every class needs at least one"
            )
        chosen = rng.choice(len(members), size=min(count, len(members)), replace=False)
        labeled_idx.update(members[i] for i in chosen)

    labeled = [data[i] for i in range(len(data)) if i in labeled_idx]
    hidden: dict[str, int] = {}
    unlabeled: list[SkeletonSequence] = []
    for i, seq in enumerate(data):
        if i in labeled_idx:
            continue
        hidden[seq.id] = seq.label
        unlabeled.append(SkeletonSequence(seq.id, seq.frames, None))
    return DatasetSplit(labeled, unlabeled, list(test or []), fraction, hidden)


# ---------------------------------------------------------------------------
# frame sampling, centering, masking
# ---------------------------------------------------------------------------


def _sample_indices(t_raw: int, t_out: int, rng: np.random.Generator) -> np.ndarray:
    if t_raw >= t_out:
        idx = rng.choice(t_raw, size=t_out, replace=False)
    else:
        # short sequence: cyclic tiling preserves motion periodicity
        idx = np.arange(t_out) % t_raw
    return np.sort(idx)


def sample_frames(seq: SkeletonSequence, t_out: int, seed: int) -> np.ndarray:
    """Select ``t_out`` frames in temporal order, uniformly at random.

    Sequences shorter than ``t_out`` are tiled cyclically before sorting, so
    every original frame appears ceil/floor(t_out / T_raw) times.
    """
    if t_out < 1:
        raise ContractError("t_out must be >= 1")
    rng = np.random.default_rng(seed)
    return seq.frames[_sample_indices(seq.num_frames, t_out, rng)].copy()


def center_frames(frames: np.ndarray) -> np.ndarray:
    """Translate so the first frame's joint centroid sits at the origin."""
    return frames - frames[0].mean(axis=0)


def prepare_input(seq: SkeletonSequence, t_out: int, seed: int) -> np.ndarray:
    """Model-ready view of a sequence: centered, then frame-sampled to length t_out."""
    rng = np.random.default_rng(seed)
    idx = _sample_indices(seq.num_frames, t_out, rng)
    return center_frames(seq.frames)[idx]


def apply_mask(frames: np.ndarray, mask: MaskSpec) -> tuple[np.ndarray, MaskSpec]:
    """Zero out the masked span; everything else is copied bit-identically."""
    mask.validate(frames.shape[0])
    masked = frames.copy()
    masked[mask.start : mask.start + mask.length] = 0.0
    return masked, mask


def random_mask(num_frames: int, fraction: float, seed: int) -> MaskSpec:
    """Draw a contiguous mask covering roughly ``fraction`` of the frames."""
    if not 0 < fraction <= 1:
        raise ConfigError(f"mask fraction must be in (0, 1], got {fraction}")
    length = min(num_frames, max(1, int(round(fraction * num_frames))))
    rng = np.random.default_rng(seed)
    start = int(rng.integers(0, num_frames - length + 1))
    return MaskSpec(start, length)


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def _class_family(class_index: int, joints: int):
    """Per-class trajectory parameters; deterministic in the class index alone."""
    rng = np.random.default_rng(derive_seed("motion-family", class_index))
    base_freq = 0.6 + 0.45 * class_index
    freq = base_freq + 0.3 * rng.random(joints)          # (J,)
    amplitude = rng.uniform(0.15, 0.9, size=(joints, 3))  # (J, 3)
    phase = rng.uniform(0.0, 2 * math.pi, size=(joints, 3))
    return freq, amplitude, phase


def class_trajectory(
    class_index: int,
    joints: int,
    num_frames: int,
    rotation: float,
    speed: float,
) -> np.ndarray:
    """Noise-free trajectory of one sample: rotated class motion, shape (T, J, 3).

    Joints rest on a helix around the vertical (y) axis; each joint oscillates
    with class-specific frequency, amplitude and phase. ``rotation`` spins the
    whole scene about the vertical axis, ``speed`` rescales time.
    """
    freq, amplitude, phase = _class_family(class_index, joints)
    j = np.arange(joints)
    base = np.stack(
        [0.35 * np.cos(2 * math.pi * j / joints), 0.22 * j, 0.35 * np.sin(2 * math.pi * j / joints)],
        axis=1,
    )  # (J, 3)
    t = np.linspace(0.0, 1.0, num_frames)[:, None, None]  # (T, 1, 1)
    angle = 2 * math.pi * freq[None, :, None] * (speed * t) + phase[None, :, :]
    frames = base[None, :, :] + amplitude[None, :, :] * np.sin(angle)

    cos_r, sin_r = math.cos(rotation), math.sin(rotation)
    x, y, z = frames[..., 0], frames[..., 1], frames[..., 2]
    return np.stack([cos_r * x + sin_r * z, y, -sin_r * x + cos_r * z], axis=-1)


def generate_synthetic(cfg: SyntheticConfig) -> list[SkeletonSequence]:
    """Deterministic synthetic corpus; labels are assigned round-robin.

    Each sample draws its own rotation about the vertical axis, a temporal
    speed factor in [0.8, 1.25] and additive Gaussian coordinate noise.
    """
    total = cfg.classes * cfg.samples_per_class
    sequences = []
    for i in range(total):
        label = i % cfg.classes
        rng = np.random.default_rng(derive_seed(cfg.seed, "synthetic-sample", i))
        rotation = float(rng.uniform(0.0, 2 * math.pi))
        speed = float(rng.uniform(0.8, 1.25))
        frames = class_trajectory(label, cfg.joints, cfg.frames, rotation, speed)
        if cfg.noise_scale > 0:
            frames = frames + rng.normal(0.0, cfg.noise_scale, size=frames.shape)
        sequences.append(SkeletonSequence(f"s{i:05d}", frames, label))
    return sequences
