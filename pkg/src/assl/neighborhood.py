"""Feature bank, exact K-nearest-neighbor retrieval, attention-weighted
local centers and positive-neighbor selection.

The bank holds a snapshot of every training sample's translated feature,
refreshed once per epoch. Inside a batch, anchors are re-encoded with the
current parameters while their neighbors come from the snapshot; retrieval
therefore sees a consistent feature space that is at most one epoch stale.
All retrieval is exhaustive: corpora are desk-scale, and exact results keep
the brute-force oracle tests meaningful.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import torch

from .data import DatasetSplit, prepare_input
from .errors import ConfigError, ContractError, PoolSizeError
from .models import ModelBundle
from .seeding import derive_seed


@dataclass
class FeatureBank:
    """Id-keyed translated features of one split, as of a given epoch."""

    unlabeled_features: dict[str, np.ndarray]
    labeled_features: dict[str, tuple[np.ndarray, int]]
    built_at_epoch: int = 0

    @cached_property
    def _unlabeled_ids(self) -> list[str]:
        return sorted(self.unlabeled_features)

    @cached_property
    def _unlabeled_matrix(self) -> np.ndarray:
        return np.stack([self.unlabeled_features[i] for i in self._unlabeled_ids])

    @cached_property
    def _labeled_ids(self) -> list[str]:
        return sorted(self.labeled_features)

    @cached_property
    def _labeled_matrix(self) -> np.ndarray:
        return np.stack([self.labeled_features[i][0] for i in self._labeled_ids])

    @cached_property
    def _labeled_labels(self) -> np.ndarray:
        return np.array([self.labeled_features[i][1] for i in self._labeled_ids])


@dataclass(frozen=True)
class NeighborSet:
    """K nearest unlabeled samples of one anchor, nearest first."""

    anchor_id: str
    neighbor_ids: tuple[str, ...]
    distances: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "neighbor_ids", tuple(self.neighbor_ids))
        object.__setattr__(self, "distances", tuple(float(d) for d in self.distances))
        if len(self.neighbor_ids) != len(self.distances):
            raise ContractError("neighbor_ids and distances must align")
        if self.anchor_id in self.neighbor_ids:
            raise ContractError(f"anchor {self.anchor_id!r} cannot be its own neighbor")
        if any(d < 0 for d in self.distances):
            raise ContractError("distances must be non-negative")
        if any(a > b for a, b in zip(self.distances, self.distances[1:])):
            raise ContractError("distances must be ascending")


@dataclass(frozen=True)
class PositiveSet:
    """Neighbors whose nearest labeled sample agrees with the anchor's."""

    anchor_id: str
    positive_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "positive_ids", tuple(self.positive_ids))


def _as_feature(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.asarray(value, dtype=np.float64)


def rebuild_bank(
    bundle: ModelBundle,
    split: DatasetSplit,
    frames: int,
    seed: int,
    epoch: int = 0,
    batch_size: int = 64,
) -> FeatureBank:
    """Encode and translate every training sample under the current parameters.

    Frame sampling is keyed by (seed, sample id) only, so successive rebuilds
    see the same frame subsets and differ solely through parameter updates.
    """
    samples = list(split.labeled) + list(split.unlabeled)
    features: dict[str, np.ndarray] = {}
    with torch.no_grad():
        for start in range(0, len(samples), batch_size):
            chunk = samples[start : start + batch_size]
            stacked = np.stack(
                [prepare_input(s, frames, derive_seed(seed, "bank-frames", s.id)) for s in chunk]
            )
            translated = bundle.translate(bundle.encode(stacked))
            for seq, row in zip(chunk, translated):
                features[seq.id] = row.cpu().numpy().astype(np.float64)
    return FeatureBank(
        unlabeled_features={s.id: features[s.id] for s in split.unlabeled},
        labeled_features={s.id: (features[s.id], s.label) for s in split.labeled},
        built_at_epoch=epoch,
    )


def knn_query(bank: FeatureBank, anchor_id: str, anchor_feature, k: int) -> NeighborSet:
    """Exact K nearest unlabeled samples by Euclidean distance.

    The anchor itself is excluded from the pool; ties are broken by ascending
    sample id (the pool is scanned in id order with a stable sort).
    """
    if k < 1:
        raise ContractError(f"k must be >= 1, got {k}")
    ids = bank._unlabeled_ids
    matrix = bank._unlabeled_matrix
    if anchor_id in bank.unlabeled_features:
        keep = [i for i, sid in enumerate(ids) if sid != anchor_id]
        ids = [ids[i] for i in keep]
        matrix = matrix[keep]
    if k > len(ids):
        raise PoolSizeError(f"k={k} exceeds unlabeled pool of size {len(ids)}")
    anchor = _as_feature(anchor_feature)
    d2 = ((matrix - anchor) ** 2).sum(axis=1)
    order = np.argsort(d2, kind="stable")[:k]
    return NeighborSet(
        anchor_id, tuple(ids[i] for i in order), tuple(np.sqrt(d2[order]).tolist())
    )


def attention_weights(bundle: ModelBundle, anchor, neighbors) -> torch.Tensor:
    """Softmax over neighbor scores of the |anchor - neighbor| differences.

    Differentiable in the anchor and the aggregator parameters; neighbor
    features are treated as constants (they come from the bank snapshot).
    """
    anchor_t = bundle._as_tensor(anchor)
    stacked = torch.stack([bundle._as_tensor(n) for n in neighbors])
    if stacked.shape[0] < 1:
        raise ContractError("need at least one neighbor")
    scores = bundle.aggregate_score(torch.abs(anchor_t.unsqueeze(0) - stacked))
    return torch.softmax(scores, dim=0)


def local_center(weights, neighbors) -> torch.Tensor:
    """Convex combination of neighbor features under attention weights."""
    if isinstance(weights, torch.Tensor):
        w = weights
    else:
        w = torch.as_tensor(np.asarray(weights, dtype=np.float64))
    stacked = (
        neighbors
        if isinstance(neighbors, torch.Tensor)
        else torch.stack([torch.as_tensor(_as_feature(n)) for n in neighbors])
    )
    stacked = stacked.to(w.dtype)
    if w.shape[0] != stacked.shape[0]:
        raise ContractError("one weight per neighbor required")
    return (w.unsqueeze(1) * stacked).sum(dim=0)


def _nearest_labeled(bank: FeatureBank, feature: np.ndarray) -> tuple[str, int]:
    d2 = ((bank._labeled_matrix - feature) ** 2).sum(axis=1)
    best = int(np.argsort(d2, kind="stable")[0])
    return bank._labeled_ids[best], int(bank._labeled_labels[best])


def select_positive(ns: NeighborSet, bank: FeatureBank, anchor_feature=None) -> PositiveSet:
    """Keep neighbors whose 1-nearest labeled sample matches the anchor's.

    The anchor's own lookup uses ``anchor_feature`` when given (the fresh
    in-batch feature), falling back to the bank snapshot otherwise.
    """
    if not bank.labeled_features:
        raise ConfigError("positive selection needs a non-empty labeled pool")
    if anchor_feature is None:
        if ns.anchor_id not in bank.unlabeled_features:
            raise ContractError(f"anchor {ns.anchor_id!r} not in bank and no feature given")
        anchor = bank.unlabeled_features[ns.anchor_id]
    else:
        anchor = _as_feature(anchor_feature)
    _, anchor_label = _nearest_labeled(bank, anchor)
    positives = tuple(
        nid
        for nid in ns.neighbor_ids
        if _nearest_labeled(bank, bank.unlabeled_features[nid])[1] == anchor_label
    )
    return PositiveSet(ns.anchor_id, positives)


def neighbor_quality_ratio(sets: list[NeighborSet], true_labels: dict[str, int]) -> float:
    """Fraction of (anchor, neighbor) pairs whose ground-truth labels agree.

    Diagnostic only: ``true_labels`` must come from the split's
    evaluation-scoped accessor, never from training state.
    """
    agree = total = 0
    for ns in sets:
        anchor_label = true_labels.get(ns.anchor_id)
        if anchor_label is None:
            continue
        for nid in ns.neighbor_ids:
            label = true_labels.get(nid)
            if label is None:
                continue
            total += 1
            agree += int(label == anchor_label)
    return agree / total if total else 0.0
