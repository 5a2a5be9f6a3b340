"""Comparison strategies: pseudo-labeling, virtual adversarial training,
entropy minimization, and inpainting-only pretraining.

Strategies are pure configuration. Every one of them runs through the same
training loop; a StrategySpec only decides which loss terms are active and
which hyperparameters they see. The pseudo-label strategy additionally
switches the loop into a two-phase protocol (train, relabel, retrain).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from .data import DatasetSplit, SkeletonSequence, prepare_input
from .errors import ConfigError, ContractError
from .losses import LossReport, kl_divergence, total_objective
from .models import ModelBundle
from .seeding import derive_seed

# strategy name -> active loss terms
_FLAG_TABLE: dict[str, tuple[str, ...]] = {
    "supervised_only": (),
    "pseudo_labels": (),
    "vat": ("vat",),
    "vat_entmin": ("vat", "entmin"),
    "s4l_inpainting": ("inpainting",),
    "sup_inp": ("inpainting",),
    "sup_nei": ("neighborhood",),
    "sup_inp_nei": ("inpainting", "neighborhood"),
    "assl_no_adv": ("inpainting", "neighborhood"),
    "sup_inp_adv": ("inpainting", "adversarial"),
    "sup_nei_adv": ("neighborhood", "adversarial"),
    "assl": ("inpainting", "neighborhood", "adversarial"),
}

STRATEGY_NAMES = tuple(sorted(_FLAG_TABLE))

_HYPER_DEFAULTS = {
    "confidence_threshold": 0.0,
    "rounds": 1.0,
    "epsilon": 2.0,
    "xi": 1e-6,
    "power_iters": 1.0,
    "vat_weight": 1.0,
    "entmin_weight": 1.0,
}

_HYPER_RANGES = {
    "confidence_threshold": (0.0, 1.0),
    "rounds": (1.0, float("inf")),
    "epsilon": (0.0, float("inf")),
    "xi": (1e-12, float("inf")),
    "power_iters": (1.0, float("inf")),
    "vat_weight": (0.0, float("inf")),
    "entmin_weight": (0.0, float("inf")),
}


@dataclass(frozen=True)
class StrategySpec:
    """A named training strategy plus its hyperparameters."""

    name: str
    hyperparameters: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in _FLAG_TABLE:
            raise ConfigError(
                f"unknown strategy {self.name!r}; choose from {', '.join(STRATEGY_NAMES)}"
            )
        merged = dict(_HYPER_DEFAULTS)
        for key, value in self.hyperparameters.items():
            if key not in _HYPER_RANGES:
                raise ConfigError(f"unknown strategy hyperparameter {key!r}")
            low, high = _HYPER_RANGES[key]
            value = float(value)
            if not low <= value <= high:
                raise ConfigError(f"{key}={value} outside [{low}, {high}]")
            merged[key] = value
        object.__setattr__(self, "hyperparameters", merged)

    @property
    def use_inpainting(self) -> bool:
        return "inpainting" in _FLAG_TABLE[self.name]

    @property
    def use_neighborhood(self) -> bool:
        return "neighborhood" in _FLAG_TABLE[self.name]

    @property
    def use_adversarial(self) -> bool:
        return "adversarial" in _FLAG_TABLE[self.name]

    @property
    def use_vat(self) -> bool:
        return "vat" in _FLAG_TABLE[self.name]

    @property
    def use_entmin(self) -> bool:
        return "entmin" in _FLAG_TABLE[self.name]

    @property
    def is_pseudo_label(self) -> bool:
        return self.name == "pseudo_labels"


# ---------------------------------------------------------------------------
# pseudo-labeling
# ---------------------------------------------------------------------------


def select_pseudo_labels(probs: np.ndarray, threshold: float) -> list[tuple[int, int]]:
    """Indices and argmax labels of rows whose max probability exceeds threshold.

    Strict inequality: threshold 0 keeps everything, threshold 1 keeps nothing
    (probabilities never exceed 1). Ties go to the lowest class index.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ContractError("probs must be a (N, C) array")
    picked = []
    for i in range(probs.shape[0]):
        label = int(np.argmax(probs[i]))
        if probs[i, label] > threshold:
            picked.append((i, label))
    return picked


def pseudo_label_round(
    bundle: ModelBundle,
    split: DatasetSplit,
    confidence_threshold: float,
    frames: int,
    seed: int,
) -> list[SkeletonSequence]:
    """Predict the unlabeled pool and return labeled + confident pseudo-labeled.

    The returned set feeds a from-scratch retraining phase; the original
    split is left untouched.
    """
    if not split.unlabeled:
        return list(split.labeled)
    with torch.no_grad():
        stacked = np.stack(
            [
                prepare_input(s, frames, derive_seed(seed, "pseudo-frames", s.id))
                for s in split.unlabeled
            ]
        )
        probs = bundle.classify(bundle.translate(bundle.encode(stacked))).cpu().numpy()
    augmented = list(split.labeled)
    for index, label in select_pseudo_labels(probs, confidence_threshold):
        seq = split.unlabeled[index]
        augmented.append(SkeletonSequence(seq.id, seq.frames, label))
    return augmented


# ---------------------------------------------------------------------------
# virtual adversarial training
# ---------------------------------------------------------------------------


def _unit_rows(d: torch.Tensor) -> torch.Tensor:
    flat = d.reshape(d.shape[0], -1)
    norm = flat.norm(dim=1, keepdim=True).clamp(min=1e-12)
    return (flat / norm).reshape(d.shape)


def _predict(bundle: ModelBundle, x: torch.Tensor) -> torch.Tensor:
    return bundle.classify(bundle.translate(bundle.encode(x)))


def vat_direction(
    bundle: ModelBundle, x: torch.Tensor, xi: float, power_iters: int, seed: int
) -> torch.Tensor:
    """Adversarial perturbation direction (unit norm per sample) on raw coordinates."""
    p = _predict(bundle, x).detach()
    rng = np.random.default_rng(derive_seed(seed, "vat-direction"))
    d = _unit_rows(torch.tensor(rng.normal(size=tuple(x.shape)), dtype=x.dtype))
    for _ in range(power_iters):
        r = (xi * d).requires_grad_(True)
        divergence = kl_divergence(p, _predict(bundle, x + r)).mean()
        (grad,) = torch.autograd.grad(divergence, r)
        d = _unit_rows(grad.detach())
    return d


def vat_loss(
    bundle: ModelBundle,
    x,
    epsilon: float = 2.0,
    xi: float = 1e-6,
    power_iters: int = 1,
    seed: int = 0,
) -> torch.Tensor:
    """KL between the prediction at x and at x + epsilon * adversarial direction.

    The perturbation lives in the flattened coordinate space of the already
    normalized input frames. The initial random direction is normalized, so
    its scale never matters.
    """
    if epsilon < 0 or xi <= 0 or power_iters < 1:
        raise ConfigError("need epsilon >= 0, xi > 0, power_iters >= 1")
    x = bundle._as_tensor(x)
    single = x.dim() == 3
    if single:
        x = x.unsqueeze(0)
    direction = vat_direction(bundle, x, xi, power_iters, seed)
    p = _predict(bundle, x).detach()
    p_adv = _predict(bundle, x + epsilon * direction)
    return kl_divergence(p, p_adv).mean()


# ---------------------------------------------------------------------------
# entropy minimization and inpainting-only composition
# ---------------------------------------------------------------------------


def entmin_loss(preds) -> torch.Tensor:
    """Mean prediction entropy, -sum p log p with floored logs."""
    stacked = (
        preds
        if isinstance(preds, torch.Tensor)
        else torch.stack([torch.as_tensor(np.asarray(p, dtype=np.float64)) for p in preds])
    )
    if stacked.dim() != 2:
        raise ContractError("predictions must form a (N, C) batch")
    logs = torch.log(torch.clamp(stacked, min=1e-8))
    return -(stacked * logs).sum(dim=-1).mean()


def s4l_inpainting_objective(l_sup, l_inp, lambda1: float = 1.0) -> LossReport:
    """Supervised loss plus weighted inpainting loss, all other terms zero."""
    return total_objective(
        float(l_sup), 0.0, 0.0, float(l_inp), 0.0, lambda1=lambda1, lambda2=0.0
    )


__all__ = [
    "STRATEGY_NAMES",
    "StrategySpec",
    "entmin_loss",
    "pseudo_label_round",
    "s4l_inpainting_objective",
    "select_pseudo_labels",
    "vat_direction",
    "vat_loss",
]
