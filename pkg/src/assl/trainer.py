"""Training loop: batch composition, per-epoch bank refresh, alternating
discriminator/model updates, evaluation, ablations and artifact export.

Determinism contract: everything a run touches is derived from the config
seed through stable hashes (parameter init, splits, shuffles, frame
sampling, masks, VAT directions), torch runs single-threaded, and the
metrics CSV serializes floats via repr, so identical configs reproduce the
file byte for byte. Wall-clock timings are kept in memory only.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import torch

from .baselines import StrategySpec, entmin_loss, pseudo_label_round, vat_loss
from .data import DatasetSplit, SkeletonSequence, apply_mask, make_split, prepare_input, random_mask
from .errors import ConfigError, ContractError, NumericError, PoolSizeError
from .losses import (
    adversarial_loss,
    center_ce_loss,
    compose_total,
    inpainting_loss,
    neighborhood_kl_loss,
    supervised_loss,
    total_objective,
)
from .models import ModelBundle, save_checkpoint
from .neighborhood import (
    FeatureBank,
    NeighborSet,
    neighbor_quality_ratio,
    rebuild_bank,
)
from .seeding import derive_seed

EVAL_FRAME_SEED = derive_seed("evaluation-frames")


@dataclass(frozen=True)
class TrainConfig:
    strategy: StrategySpec = field(default_factory=lambda: StrategySpec("assl"))
    lambda1: float = 1.0
    lambda2: float = 0.1
    k: int = 10
    frames: int = 40
    batch_labeled: int = 16
    batch_unlabeled: int = 16
    epochs: int = 100
    lr: float = 0.0005
    lr_decay: float = 0.5
    lr_decay_every: int = 30
    seed: int = 0
    kl_target_stop_gradient: bool = True
    mask_fraction: float = 0.2
    hidden: int = 512

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not 0 < self.lr_decay <= 1:
            raise ConfigError("lr_decay must lie in (0, 1]")
        if self.lr_decay_every < 1:
            raise ConfigError("lr_decay_every must be >= 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.frames < 2:
            raise ConfigError("frames must be >= 2")
        if self.batch_labeled < 1 or self.batch_unlabeled < 1:
            raise ConfigError("batch sizes must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if not 0 < self.mask_fraction <= 1:
            raise ConfigError("mask_fraction must lie in (0, 1]")
        if self.hidden < 2:
            raise ConfigError("hidden must be >= 2")


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """lr(epoch) = lr0 * decay^floor(epoch / decay_every); epochs are 0-based."""
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every)


@dataclass(frozen=True)
class MetricsRow:
    epoch: int
    l_sup: float
    l_kl: float
    l_ce_center: float
    l_inp: float
    l_unlabeled: float
    l_adv: float
    total: float
    lambda1: float
    lambda2: float
    train_disc_accuracy: float
    test_accuracy: float
    neighbor_quality_ratio: float
    lr: float
    wall_seconds: float = 0.0  # in-memory diagnostic; never serialized

    def __post_init__(self):
        for name in ("train_disc_accuracy", "test_accuracy", "neighbor_quality_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ContractError(f"{name}={value} outside [0, 1]")


METRICS_COLUMNS = [f.name for f in fields(MetricsRow) if f.name != "wall_seconds"]


def write_metrics_csv(rows: list[MetricsRow], path) -> None:
    """One row per epoch; floats serialized via repr for bitwise round-trips."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    str(getattr(row, c)) if c == "epoch" else repr(float(getattr(row, c)))
                    for c in METRICS_COLUMNS
                ]
            )


def read_metrics_csv(path) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            {k: (int(v) if k == "epoch" else float(v)) for k, v in row.items()}
            for row in reader
        ]


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------


def make_batches(
    split: DatasetSplit, cfg: TrainConfig, epoch: int
) -> list[tuple[list[SkeletonSequence], list[SkeletonSequence]]]:
    """Pair labeled/unlabeled sub-batches; one epoch visits every unlabeled
    sample exactly once, cycling the labeled pool as needed."""
    if not split.labeled or not split.unlabeled:
        raise ConfigError("both labeled and unlabeled pools must be non-empty")
    rng = np.random.default_rng(derive_seed(cfg.seed, "batches", epoch))
    l_order = rng.permutation(len(split.labeled))
    u_order = rng.permutation(len(split.unlabeled))
    count = math.ceil(len(u_order) / cfg.batch_unlabeled)
    batches = []
    for b in range(count):
        u_idx = u_order[b * cfg.batch_unlabeled : (b + 1) * cfg.batch_unlabeled]
        l_idx = [
            l_order[(b * cfg.batch_labeled + j) % len(l_order)]
            for j in range(cfg.batch_labeled)
        ]
        batches.append(
            ([split.labeled[i] for i in l_idx], [split.unlabeled[i] for i in u_idx])
        )
    return batches


def _labeled_only_batches(
    pool: list[SkeletonSequence], batch_size: int, seed: int, epoch: int
) -> list[tuple[list[SkeletonSequence], list[SkeletonSequence]]]:
    """One pass over a fully labeled pool; used by the pseudo-label phases."""
    rng = np.random.default_rng(derive_seed(seed, "labeled-batches", epoch))
    order = rng.permutation(len(pool))
    return [
        ([pool[i] for i in order[s : s + batch_size]], [])
        for s in range(0, len(order), batch_size)
    ]


# ---------------------------------------------------------------------------
# forward helpers
# ---------------------------------------------------------------------------


def _stack_inputs(seqs, frames: int, seed: int, tag: str) -> np.ndarray:
    return np.stack([prepare_input(s, frames, derive_seed(seed, tag, s.id)) for s in seqs])


def _translated(bundle: ModelBundle, x: np.ndarray) -> torch.Tensor:
    return bundle.translate(bundle.encode(x))


def _check_term(name: str, value: torch.Tensor | float, where: str) -> None:
    scalar = float(value.detach() if isinstance(value, torch.Tensor) else value)
    if not math.isfinite(scalar):
        raise NumericError(f"{name} became non-finite at {where}")


# ---------------------------------------------------------------------------
# neighborhood batch machinery
# ---------------------------------------------------------------------------


def _batched_knn(
    bank: FeatureBank, anchor_ids: list[str], anchors: np.ndarray, k: int
) -> tuple[list[list[int]], np.ndarray]:
    """Row-wise exact KNN of many anchors at once; same tie-break semantics
    as knn_query (pool scanned in ascending id order, stable sort)."""
    ids = bank._unlabeled_ids
    matrix = bank._unlabeled_matrix
    id_pos = {sid: i for i, sid in enumerate(ids)}
    d2 = ((matrix[None, :, :] - anchors[:, None, :]) ** 2).sum(axis=2)
    for row, anchor_id in enumerate(anchor_ids):
        pos = id_pos.get(anchor_id)
        if pos is not None:
            d2[row, pos] = np.inf
        pool = len(ids) - (1 if pos is not None else 0)
        if k > pool:
            raise PoolSizeError(f"k={k} exceeds unlabeled pool of size {pool}")
    order = np.argsort(d2, axis=1, kind="stable")[:, :k]
    gathered = np.take_along_axis(d2, order, axis=1)
    return [list(row) for row in order], np.sqrt(gathered)


def _nearest_labeled_labels(bank: FeatureBank, features: np.ndarray) -> np.ndarray:
    """1-NN labeled lookup for each row, ties by ascending labeled id."""
    d2 = ((bank._labeled_matrix[None, :, :] - features[:, None, :]) ** 2).sum(axis=2)
    best = np.argsort(d2, axis=1, kind="stable")[:, 0]
    return bank._labeled_labels[best]


class _EpochNeighborState:
    """Per-epoch caches over one bank snapshot."""

    def __init__(self, bank: FeatureBank):
        self.bank = bank
        # 1-NN labeled label of every unlabeled bank feature, computed once
        self.unlabeled_nn_labels = dict(
            zip(
                bank._unlabeled_ids,
                _nearest_labeled_labels(bank, bank._unlabeled_matrix),
            )
        )
        self.neighbor_sets: list[NeighborSet] = []
        self.dump_rows: list[tuple[int, str, str, float, bool]] = []


def _neighborhood_terms(
    bundle: ModelBundle,
    state: _EpochNeighborState,
    labeled_batch,
    labels,
    unlabeled_batch,
    feats_l: torch.Tensor,
    feats_u: torch.Tensor,
    cfg: TrainConfig,
    epoch: int,
    collect_dump: bool,
):
    """KL consistency over unlabeled anchors and center CE over labeled ones.

    Anchors use fresh in-batch features; neighbors and their predictions use
    the epoch's bank snapshot.
    """
    bank = state.bank
    u_ids = [s.id for s in unlabeled_batch]
    u_np = feats_u.detach().cpu().numpy().astype(np.float64)
    neighbor_idx, distances = _batched_knn(bank, u_ids, u_np, cfg.k)
    anchor_nn = _nearest_labeled_labels(bank, u_np)

    neighbor_feats = torch.tensor(
        bank._unlabeled_matrix[np.asarray(neighbor_idx)], dtype=bundle.dtype
    )  # (B, K, d)
    diffs = torch.abs(feats_u.unsqueeze(1) - neighbor_feats)
    scores = bundle.aggregate_score(diffs.reshape(-1, bundle.d)).reshape(len(u_ids), cfg.k)
    alphas = torch.softmax(scores, dim=1)
    centers_u = torch.einsum("bk,bkd->bd", alphas, neighbor_feats)

    center_preds_u = bundle.classify(centers_u)
    anchor_preds = bundle.classify(feats_u)

    positives: list[list[int]] = []
    unique_pos: dict[str, int] = {}
    pos_ids_per_anchor: list[list[str]] = []
    for row, anchor_id in enumerate(u_ids):
        ids_row = [bank._unlabeled_ids[i] for i in neighbor_idx[row]]
        pos_row = [
            nid for nid in ids_row if state.unlabeled_nn_labels[nid] == anchor_nn[row]
        ]
        pos_ids_per_anchor.append(pos_row)
        for nid in pos_row:
            unique_pos.setdefault(nid, len(unique_pos))
        state.neighbor_sets.append(
            NeighborSet(anchor_id, tuple(ids_row), tuple(distances[row].tolist()))
        )
        if collect_dump:
            pos_set = set(pos_row)
            for nid, dist in zip(ids_row, distances[row]):
                state.dump_rows.append((epoch, anchor_id, nid, float(dist), nid in pos_set))

    if unique_pos:
        pos_matrix = torch.tensor(
            np.stack([bank.unlabeled_features[nid] for nid in unique_pos]),
            dtype=bundle.dtype,
        )
        pos_preds_all = bundle.classify(pos_matrix)
        positive_preds = [
            [pos_preds_all[unique_pos[nid]] for nid in row] for row in pos_ids_per_anchor
        ]
    else:
        positive_preds = [[] for _ in u_ids]

    l_kl = neighborhood_kl_loss(
        list(center_preds_u),
        list(anchor_preds),
        positive_preds,
        stop_gradient=cfg.kl_target_stop_gradient,
    )

    # labeled anchors: centers from unlabeled neighbors, cross-entropy on labels
    l_ids = [s.id for s in labeled_batch]
    l_np = feats_l.detach().cpu().numpy().astype(np.float64)
    neighbor_idx_l, _ = _batched_knn(bank, l_ids, l_np, cfg.k)
    neighbor_feats_l = torch.tensor(
        bank._unlabeled_matrix[np.asarray(neighbor_idx_l)], dtype=bundle.dtype
    )
    diffs_l = torch.abs(feats_l.unsqueeze(1) - neighbor_feats_l)
    scores_l = bundle.aggregate_score(diffs_l.reshape(-1, bundle.d)).reshape(len(l_ids), cfg.k)
    alphas_l = torch.softmax(scores_l, dim=1)
    centers_l = torch.einsum("bk,bkd->bd", alphas_l, neighbor_feats_l)
    l_ce_center = center_ce_loss(bundle.classify(centers_l), labels)
    return l_kl, l_ce_center


# ---------------------------------------------------------------------------
# train step
# ---------------------------------------------------------------------------


def make_optimizers(bundle: ModelBundle, lr: float) -> tuple[torch.optim.Adam, torch.optim.Adam]:
    """Disjoint ADAM optimizers: everything-but-discriminator, discriminator."""
    return (
        torch.optim.Adam(bundle.model_parameters(), lr=lr),
        torch.optim.Adam(bundle.discriminator_parameters(), lr=lr),
    )


def _discriminator_substep(
    bundle: ModelBundle, disc_opt: torch.optim.Optimizer, feats_l, feats_u
) -> tuple[float, float]:
    """Ascent on the adversarial value with features detached.

    Returns (adversarial value before the update, discriminator accuracy at
    the 0.5 threshold).
    """
    scores_l = bundle.discriminate(feats_l.detach())
    scores_u = bundle.discriminate(feats_u.detach())
    value = adversarial_loss(scores_l, scores_u)
    correct = (scores_l > 0.5).sum() + (scores_u < 0.5).sum()
    accuracy = float(correct) / (scores_l.numel() + scores_u.numel())
    disc_opt.zero_grad()
    (-value).backward()
    disc_opt.step()
    return float(value.detach()), accuracy


def train_step(
    bundle: ModelBundle,
    batch: tuple[list[SkeletonSequence], list[SkeletonSequence]],
    bank: FeatureBank | None,
    cfg: TrainConfig,
    model_opt: torch.optim.Optimizer,
    disc_opt: torch.optim.Optimizer,
    epoch: int,
    step: int,
    neighbor_state: _EpochNeighborState | None = None,
    collect_dump: bool = False,
):
    """One alternating update. Returns (LossReport, discriminator accuracy).

    Sub-step (a): discriminator ascends the adversarial value on detached
    features. Sub-step (b): the main model descends the weighted objective
    with discriminator parameters frozen.
    """
    labeled_batch, unlabeled_batch = batch
    strategy = cfg.strategy
    base = derive_seed(cfg.seed, "step", epoch, step)
    where = f"epoch {epoch} step {step}"

    labeled_x = _stack_inputs(labeled_batch, cfg.frames, base, "frames-labeled")
    labels = [s.label for s in labeled_batch]

    need_u_plain = (
        strategy.use_neighborhood or strategy.use_adversarial or strategy.use_entmin
    )
    need_u_masked = strategy.use_inpainting
    need_u_any = need_u_plain or need_u_masked or strategy.use_vat
    if need_u_any and not unlabeled_batch:
        raise ConfigError("strategy needs unlabeled samples but the batch has none")

    unlabeled_x = (
        _stack_inputs(unlabeled_batch, cfg.frames, base, "frames-unlabeled")
        if need_u_any
        else None
    )
    masks = None
    masked_x = None
    if need_u_masked:
        masks = [
            random_mask(cfg.frames, cfg.mask_fraction, derive_seed(base, "mask", s.id))
            for s in unlabeled_batch
        ]
        masked_x = np.stack(
            [apply_mask(unlabeled_x[i], masks[i])[0] for i in range(len(unlabeled_batch))]
        )

    # the labeled view is encoded alone so the supervised loss is identical
    # across strategies; the unlabeled views share one merged encoder pass
    h_l = bundle.encode(labeled_x)
    h_u = h_masked = None
    if need_u_plain or need_u_masked:
        parts = []
        if need_u_plain:
            parts.append(unlabeled_x)
        if need_u_masked:
            parts.append(masked_x)
        encoded = bundle.encode(np.concatenate(parts) if len(parts) > 1 else parts[0])
        n_u = len(unlabeled_batch) if need_u_plain else 0
        h_u = encoded[:n_u] if need_u_plain else None
        h_masked = encoded[n_u:] if need_u_masked else None

    feats_l = bundle.translate(h_l)
    feats_u = bundle.translate(h_u) if need_u_plain else None

    l_sup = supervised_loss(bundle.classify(feats_l), labels)
    _check_term("l_sup", l_sup, where)

    l_kl: torch.Tensor | float = 0.0
    l_ce_center: torch.Tensor | float = 0.0
    l_inp: torch.Tensor | float = 0.0
    l_adv: torch.Tensor | float = 0.0
    disc_accuracy = 0.0

    if strategy.use_inpainting:
        recon = bundle.decode(h_masked, masked_x)
        originals = torch.as_tensor(unlabeled_x, dtype=bundle.dtype)
        l_inp = torch.stack(
            [
                inpainting_loss(recon[i], originals[i], masks[i])
                for i in range(len(unlabeled_batch))
            ]
        ).mean()
        _check_term("l_inp", l_inp, where)

    if strategy.use_neighborhood:
        if bank is None or neighbor_state is None:
            raise ContractError("neighborhood strategy requires a feature bank")
        l_kl, l_ce_center = _neighborhood_terms(
            bundle,
            neighbor_state,
            labeled_batch,
            labels,
            unlabeled_batch,
            feats_l,
            feats_u,
            cfg,
            epoch,
            collect_dump,
        )
        _check_term("l_kl", l_kl, where)
        _check_term("l_ce_center", l_ce_center, where)

    if strategy.use_vat:
        hp = strategy.hyperparameters
        l_kl = hp["vat_weight"] * vat_loss(
            bundle,
            unlabeled_x,
            epsilon=hp["epsilon"],
            xi=hp["xi"],
            power_iters=int(hp["power_iters"]),
            seed=derive_seed(base, "vat"),
        )
        _check_term("l_kl", l_kl, where)
    if strategy.use_entmin:
        l_ce_center = strategy.hyperparameters["entmin_weight"] * entmin_loss(
            bundle.classify(feats_u)
        )
        _check_term("l_ce_center", l_ce_center, where)

    if strategy.use_adversarial:
        _, disc_accuracy = _discriminator_substep(bundle, disc_opt, feats_l, feats_u)
        for p in bundle.discriminator_parameters():
            p.requires_grad_(False)
        l_adv = adversarial_loss(bundle.discriminate(feats_l), bundle.discriminate(feats_u))
        _check_term("l_adv", l_adv, where)

    try:
        total = compose_total(l_sup, l_kl, l_ce_center, l_inp, l_adv, cfg.lambda1, cfg.lambda2)
        _check_term("total", total, where)
        model_opt.zero_grad()
        total.backward()
        model_opt.step()
    finally:
        if strategy.use_adversarial:
            for p in bundle.discriminator_parameters():
                p.requires_grad_(True)

    def as_float(value):
        return float(value.detach() if isinstance(value, torch.Tensor) else value)

    report = total_objective(
        as_float(l_sup),
        as_float(l_kl),
        as_float(l_ce_center),
        as_float(l_inp),
        as_float(l_adv),
        cfg.lambda1,
        cfg.lambda2,
    )
    return report, disc_accuracy


# ---------------------------------------------------------------------------
# evaluation and experiment loop
# ---------------------------------------------------------------------------


def predict_labels(bundle: ModelBundle, seqs, frames: int, seed: int, batch_size: int = 64):
    """Argmax class predictions with deterministic frame sampling."""
    out = []
    with torch.no_grad():
        for start in range(0, len(seqs), batch_size):
            chunk = seqs[start : start + batch_size]
            x = _stack_inputs(chunk, frames, seed, "eval-frames")
            probs = bundle.classify(bundle.translate(bundle.encode(x)))
            out.append(probs.argmax(dim=1).cpu().numpy())
    return np.concatenate(out) if out else np.array([], dtype=int)


def evaluate(bundle: ModelBundle, test_set, frames: int, seed: int = EVAL_FRAME_SEED) -> float:
    """Test accuracy; the frame-sampling seed is fixed (not run-dependent)."""
    if not test_set:
        raise ContractError("cannot evaluate on an empty test set")
    if any(s.label is None for s in test_set):
        raise ContractError("test samples must carry labels")
    predictions = predict_labels(bundle, test_set, frames, seed)
    truth = np.array([s.label for s in test_set])
    return float((predictions == truth).mean())


@dataclass
class ExperimentResult:
    bundle: ModelBundle
    metrics: list[MetricsRow]
    best_accuracy: float
    best_epoch: int
    checkpoint_path: str | None = None


def _aggregate_epoch_row(
    epoch, reports, disc_accs, test_accuracy, nqr, lr, wall_seconds, cfg
) -> MetricsRow:
    def mean(values):
        return float(np.mean(values)) if values else 0.0

    report = total_objective(
        mean([r.l_sup for r in reports]),
        mean([r.l_kl for r in reports]),
        mean([r.l_ce_center for r in reports]),
        mean([r.l_inp for r in reports]),
        mean([r.l_adv for r in reports]),
        cfg.lambda1,
        cfg.lambda2,
    )
    return MetricsRow(
        epoch=epoch,
        **report.as_dict(),
        train_disc_accuracy=mean(disc_accs),
        test_accuracy=test_accuracy,
        neighbor_quality_ratio=nqr,
        lr=lr,
        wall_seconds=wall_seconds,
    )


def _train_phase(
    bundle: ModelBundle,
    split: DatasetSplit,
    cfg: TrainConfig,
    epochs: int,
    epoch_offset: int,
    batch_fn,
    metrics: list[MetricsRow],
    best: dict,
    out_dir,
    dump_neighbors: bool,
    dump_rows: list,
) -> None:
    model_opt, disc_opt = make_optimizers(bundle, cfg.lr)
    eval_labels = split.evaluation_labels()
    for local_epoch in range(epochs):
        start = time.perf_counter()
        lr_now = lr_at(cfg, local_epoch)
        for group in model_opt.param_groups + disc_opt.param_groups:
            group["lr"] = lr_now

        bank = None
        neighbor_state = None
        if cfg.strategy.use_neighborhood:
            bank = rebuild_bank(
                bundle,
                split,
                cfg.frames,
                seed=derive_seed(cfg.seed, "bank-frames-base"),
                epoch=epoch_offset + local_epoch,
            )
            neighbor_state = _EpochNeighborState(bank)

        reports, disc_accs = [], []
        for step, batch in enumerate(batch_fn(local_epoch)):
            report, disc_acc = train_step(
                bundle,
                batch,
                bank,
                cfg,
                model_opt,
                disc_opt,
                epoch_offset + local_epoch,
                step,
                neighbor_state,
                collect_dump=dump_neighbors,
            )
            reports.append(report)
            disc_accs.append(disc_acc)

        nqr = (
            neighbor_quality_ratio(neighbor_state.neighbor_sets, eval_labels)
            if neighbor_state is not None
            else 0.0
        )
        if neighbor_state is not None and dump_neighbors:
            dump_rows.extend(neighbor_state.dump_rows)

        test_accuracy = evaluate(bundle, split.test, cfg.frames) if split.test else 0.0
        epoch_index = epoch_offset + local_epoch
        metrics.append(
            _aggregate_epoch_row(
                epoch_index,
                reports,
                disc_accs if cfg.strategy.use_adversarial else [],
                test_accuracy,
                nqr,
                lr_now,
                time.perf_counter() - start,
                cfg,
            )
        )
        if test_accuracy > best["accuracy"]:
            best["accuracy"] = test_accuracy
            best["epoch"] = epoch_index
            if out_dir is not None:
                best["path"] = save_checkpoint(
                    bundle, str(out_dir) + "/checkpoint", frames=cfg.frames
                )


def run_experiment(
    cfg: TrainConfig,
    split: DatasetSplit,
    out_dir=None,
    dump_neighbors: bool = False,
) -> ExperimentResult:
    """Full training run; returns the final bundle plus per-epoch metrics.

    The best-test-accuracy checkpoint is written to out_dir when given. The
    pseudo-label strategy runs (rounds + 1) phases, re-initializing the model
    from scratch after each relabeling pass; epochs keep counting across
    phases in the metrics.
    """
    torch.set_num_threads(1)
    if not split.labeled:
        raise ConfigError("labeled pool is empty")
    joints = split.labeled[0].num_joints
    classes = split.class_count
    if cfg.strategy.use_neighborhood:
        limit = len(split.unlabeled) - 1
        if cfg.k > limit:
            raise PoolSizeError(f"k={cfg.k} exceeds usable unlabeled pool of {limit}")

    metrics: list[MetricsRow] = []
    best = {"accuracy": -1.0, "epoch": -1, "path": None}
    dump_rows: list = []

    if cfg.strategy.is_pseudo_label:
        rounds = int(cfg.strategy.hyperparameters["rounds"])
        threshold = cfg.strategy.hyperparameters["confidence_threshold"]
        sup_cfg = replace(cfg, strategy=StrategySpec("supervised_only"))
        pool = list(split.labeled)
        bundle = None
        for phase in range(rounds + 1):
            bundle = ModelBundle(
                joints, classes, cfg.hidden, seed=derive_seed(cfg.seed, "init", phase)
            )
            phase_pool = pool

            def batch_fn(epoch, _pool=phase_pool):
                return _labeled_only_batches(_pool, cfg.batch_labeled, cfg.seed, epoch)

            _train_phase(
                bundle, split, sup_cfg, cfg.epochs, phase * cfg.epochs,
                batch_fn, metrics, best, out_dir, False, dump_rows,
            )
            if phase < rounds:
                pool = pseudo_label_round(
                    bundle, split, threshold, cfg.frames,
                    seed=derive_seed(cfg.seed, "pseudo", phase),
                )
    else:
        bundle = ModelBundle(joints, classes, cfg.hidden, seed=derive_seed(cfg.seed, "init"))

        def batch_fn(epoch):
            return make_batches(split, cfg, epoch)

        _train_phase(
            bundle, split, cfg, cfg.epochs, 0,
            batch_fn, metrics, best, out_dir, dump_neighbors, dump_rows,
        )

    if cfg.epochs == 0:
        best["accuracy"] = evaluate(bundle, split.test, cfg.frames) if split.test else 0.0
        best["epoch"] = -1
        if out_dir is not None:
            best["path"] = save_checkpoint(bundle, str(out_dir) + "/checkpoint", frames=cfg.frames)

    if dump_neighbors and out_dir is not None:
        with open(str(out_dir) + "/neighbors.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "anchor_id", "neighbor_id", "distance", "is_positive"])
            for epoch, anchor_id, nid, dist, is_pos in dump_rows:
                writer.writerow([epoch, anchor_id, nid, repr(dist), is_pos])

    return ExperimentResult(
        bundle=bundle,
        metrics=metrics,
        best_accuracy=best["accuracy"],
        best_epoch=best["epoch"],
        checkpoint_path=best["path"],
    )


# ---------------------------------------------------------------------------
# ablations, sweeps, embedding export
# ---------------------------------------------------------------------------


def _run_one(cfg: TrainConfig, split: DatasetSplit, out_dir, tag: str, seed: int):
    """Single harness run; writes metrics.csv and summary.json when dumping."""
    run_dir = None
    if out_dir is not None:
        run_dir = Path(out_dir) / f"{tag}-seed{seed}"
        run_dir.mkdir(parents=True, exist_ok=True)
    result = run_experiment(cfg, split, out_dir=run_dir)
    if run_dir is not None:
        write_metrics_csv(result.metrics, run_dir / "metrics.csv")
        summary = {
            "tag": tag,
            "fraction": split.fraction,
            "seed": seed,
            "best_accuracy": result.best_accuracy,
            "best_epoch": result.best_epoch,
        }
        (run_dir / "summary.json").write_text(
            json.dumps(summary, indent=2) + "\n", encoding="utf-8"
        )
    return result


def run_ablation(
    train_corpus,
    test_corpus,
    base_cfg: TrainConfig,
    fraction: float,
    variants: list[str],
    seeds: list[int],
    out_dir=None,
) -> list[dict]:
    """Mean/std test accuracy per strategy variant over shared seeds.

    Each seed draws its own stratified split, so every variant sees the same
    sequence of splits. With ``out_dir`` each run leaves a
    ``<variant>-seed<seed>/`` directory holding metrics.csv, summary.json and
    the best checkpoint.
    """
    rows = []
    for variant in variants:
        accuracies = []
        for seed in seeds:
            split = make_split(
                train_corpus, fraction, seed=seed, test=test_corpus
            )
            cfg = replace(base_cfg, strategy=StrategySpec(variant), seed=seed)
            result = _run_one(cfg, split, out_dir, variant, seed)
            accuracies.append(result.best_accuracy)
        rows.append(
            {
                "variant": variant,
                "seeds": len(seeds),
                "mean_acc": float(np.mean(accuracies)),
                "std_acc": float(np.std(accuracies)),
                "accuracies": accuracies,
            }
        )
    return rows


def run_k_sweep(
    train_corpus,
    test_corpus,
    base_cfg: TrainConfig,
    fraction: float,
    ks: list[int],
    seeds: list[int],
    out_dir=None,
) -> list[dict]:
    """Accuracy-vs-K curve for the neighborhood size ablation."""
    rows = []
    for k in ks:
        accuracies = []
        for seed in seeds:
            split = make_split(train_corpus, fraction, seed=seed, test=test_corpus)
            cfg = replace(base_cfg, k=k, seed=seed)
            result = _run_one(cfg, split, out_dir, f"k{k}", seed)
            accuracies.append(result.best_accuracy)
        rows.append(
            {
                "k": k,
                "seeds": len(seeds),
                "mean_acc": float(np.mean(accuracies)),
                "std_acc": float(np.std(accuracies)),
                "accuracies": accuracies,
            }
        )
    return rows


def export_embeddings(
    bundle: ModelBundle, split: DatasetSplit, path, frames: int, batch_size: int = 64
) -> None:
    """TSV of translated features: id, split, true_label, then d columns."""
    eval_labels = split.evaluation_labels()
    groups = [
        ("labeled", split.labeled),
        ("unlabeled", split.unlabeled),
        ("test", split.test),
    ]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t", lineterminator="\n")
        writer.writerow(["id", "split", "true_label"] + [f"f{i}" for i in range(bundle.d)])
        with torch.no_grad():
            for name, seqs in groups:
                for start in range(0, len(seqs), batch_size):
                    chunk = seqs[start : start + batch_size]
                    x = _stack_inputs(chunk, frames, EVAL_FRAME_SEED, "eval-frames")
                    feats = bundle.translate(bundle.encode(x)).cpu().numpy()
                    for seq, row in zip(chunk, feats):
                        label = seq.label if seq.label is not None else eval_labels.get(seq.id)
                        writer.writerow(
                            [seq.id, name, label] + [repr(float(v)) for v in row]
                        )
