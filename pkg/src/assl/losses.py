"""Objective terms for inpainting, neighborhood consistency, adversarial
alignment and supervised classification, plus their weighted composition.

Every operation accepts torch tensors (keeping autograd graphs intact) or
plain arrays, and probabilities are floored at 1e-8 before any log. The
composed report stores plain floats; its internal identities (the unlabeled
sum and the lambda-weighted total) hold exactly in python float arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
import torch

from .data import MaskSpec
from .errors import ConfigError, ContractError

PROB_FLOOR = 1e-8


@dataclass(frozen=True)
class LossReport:
    """One step's scalar loss values; the serialized record of training."""

    l_sup: float
    l_kl: float
    l_ce_center: float
    l_inp: float
    l_unlabeled: float
    l_adv: float
    total: float
    lambda1: float
    lambda2: float

    def __post_init__(self):
        for name in ("l_sup", "l_kl", "l_ce_center", "l_inp"):
            if getattr(self, name) < 0:
                raise ContractError(f"{name} must be non-negative")
        if self.l_unlabeled != self.l_kl + self.l_ce_center + self.l_inp:
            raise ContractError("l_unlabeled must equal l_kl + l_ce_center + l_inp exactly")
        if self.total != self.l_sup + self.lambda1 * self.l_unlabeled + self.lambda2 * self.l_adv:
            raise ContractError("total must equal l_sup + lambda1*l_unlabeled + lambda2*l_adv")

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _as_tensor(x) -> torch.Tensor:
    if isinstance(x, torch.Tensor):
        return x
    return torch.as_tensor(np.asarray(x, dtype=np.float64))


def _floored_log(q: torch.Tensor) -> torch.Tensor:
    return torch.log(torch.clamp(q, min=PROB_FLOOR))


def inpainting_loss(recon, original, mask: MaskSpec) -> torch.Tensor:
    """Mean squared error over the whole sequence, masked and visible alike."""
    recon, original = _as_tensor(recon), _as_tensor(original)
    if recon.shape != original.shape:
        raise ContractError(f"shape mismatch: {tuple(recon.shape)} vs {tuple(original.shape)}")
    mask.validate(original.shape[0])
    return ((recon - original) ** 2).mean()


def kl_divergence(p, q) -> torch.Tensor:
    """KL(p || q) with q floored at 1e-8; p is the reference distribution.

    Zero p entries contribute exactly zero. Flooring or float32 rounding can
    push the raw sum a hair below zero, so the result is clamped at zero to
    keep the divergence honest.
    """
    p, q = _as_tensor(p), _as_tensor(q)
    if p.shape != q.shape:
        raise ContractError("distributions must share a shape")
    raw = (torch.xlogy(p, p) - p * _floored_log(q)).sum(dim=-1)
    return torch.clamp_min(raw, 0.0)


def neighborhood_kl_loss(
    center_preds,
    anchor_preds,
    positive_preds,
    stop_gradient: bool = True,
) -> torch.Tensor:
    """Per-anchor KL(center, anchor) + sum of KL(center, positive), averaged.

    ``positive_preds[i]`` lists the predictions of anchor i's positive
    neighbors (possibly empty). With ``stop_gradient`` the center prediction
    acts as a fixed target; the aggregation path then learns only through the
    labeled-center cross-entropy.
    """
    if not (len(center_preds) == len(anchor_preds) == len(positive_preds)):
        raise ContractError("center, anchor and positive lists must align")
    if len(center_preds) == 0:
        return torch.tensor(0.0, dtype=torch.float64)
    total = None
    for center, anchor, positives in zip(center_preds, anchor_preds, positive_preds):
        target = _as_tensor(center)
        if stop_gradient:
            target = target.detach()
        term = kl_divergence(target, anchor)
        for pos in positives:
            term = term + kl_divergence(target, pos)
        total = term if total is None else total + term
    return total / len(center_preds)


def _mean_cross_entropy(preds, labels) -> torch.Tensor:
    stacked = (
        preds if isinstance(preds, torch.Tensor) else torch.stack([_as_tensor(p) for p in preds])
    )
    if stacked.dim() != 2:
        raise ContractError("predictions must form a (N, C) batch")
    labels = [int(y) for y in labels]
    if len(labels) != stacked.shape[0]:
        raise ContractError("one label per prediction required")
    classes = stacked.shape[1]
    if any(y < 0 or y >= classes for y in labels):
        raise ContractError(f"labels must lie in [0, {classes})")
    picked = stacked[torch.arange(stacked.shape[0]), torch.tensor(labels)]
    return -_floored_log(picked).mean()


def center_ce_loss(center_preds, labels) -> torch.Tensor:
    """Mean cross-entropy of labeled anchors' local-center predictions."""
    return _mean_cross_entropy(center_preds, labels)


def supervised_loss(preds, labels) -> torch.Tensor:
    """Mean cross-entropy of labeled samples' own predictions."""
    return _mean_cross_entropy(preds, labels)


def adversarial_loss(labeled_scores, unlabeled_scores) -> torch.Tensor:
    """mean log Dis(labeled) + mean log(1 - Dis(unlabeled)); always <= 0.

    The discriminator takes an ascent step on this value; the main model
    descends it (with the discriminator frozen) to align the two pools.
    """
    labeled_scores, unlabeled_scores = _as_tensor(labeled_scores), _as_tensor(unlabeled_scores)
    if labeled_scores.numel() == 0 or unlabeled_scores.numel() == 0:
        raise ContractError("need at least one labeled and one unlabeled score")
    return _floored_log(labeled_scores).mean() + _floored_log(1.0 - unlabeled_scores).mean()


def compose_total(l_sup, l_kl, l_ce_center, l_inp, l_adv, lambda1=1.0, lambda2=0.1):
    """The weighted objective, usable on tensors (for backward) or floats."""
    return l_sup + lambda1 * (l_kl + l_ce_center + l_inp) + lambda2 * l_adv


def total_objective(
    l_sup, l_kl, l_ce_center, l_inp, l_adv, lambda1: float = 1.0, lambda2: float = 0.1
) -> LossReport:
    """Compose the scalar report; weights default to lambda1=1, lambda2=0.1."""
    if lambda1 < 0 or lambda2 < 0:
        raise ConfigError("loss weights must be non-negative")
    values = [float(v) for v in (l_sup, l_kl, l_ce_center, l_inp, l_adv)]
    l_sup, l_kl, l_ce_center, l_inp, l_adv = values
    l_unlabeled = l_kl + l_ce_center + l_inp
    return LossReport(
        l_sup=l_sup,
        l_kl=l_kl,
        l_ce_center=l_ce_center,
        l_inp=l_inp,
        l_unlabeled=l_unlabeled,
        l_adv=l_adv,
        total=l_sup + lambda1 * l_unlabeled + lambda2 * l_adv,
        lambda1=lambda1,
        lambda2=lambda2,
    )
