"""Feature-bank neighborhoods, attention-weighted centers, positive picking.

Builds a feature bank from a briefly trained model, queries K nearest
neighbors for an anchor, aggregates them into a local center, and shows how
labeled 1-NN lookups decide which neighbors count as positives.
"""

import numpy as np
import torch

from assl import (
    StrategySpec,
    SyntheticConfig,
    TrainConfig,
    attention_weights,
    derive_seed,
    generate_synthetic,
    knn_query,
    local_center,
    make_split,
    neighbor_quality_ratio,
    rebuild_bank,
    run_experiment,
    select_positive,
)

corpus = generate_synthetic(
    SyntheticConfig(classes=4, joints=5, frames=30, samples_per_class=25,
                    noise_scale=0.15, seed=0)
)
test = generate_synthetic(
    SyntheticConfig(classes=4, joints=5, frames=30, samples_per_class=6,
                    noise_scale=0.15, seed=1)
)
split = make_split(corpus, fraction=0.2, seed=0, test=test)

cfg = TrainConfig(strategy=StrategySpec("assl_no_adv"), k=8, frames=16, hidden=16,
                  batch_labeled=8, batch_unlabeled=8, epochs=6, lr=0.003, seed=0)
result = run_experiment(cfg, split)
bundle = result.bundle

bank = rebuild_bank(bundle, split, frames=16, seed=derive_seed(0, "bank-frames-base"))
print(f"bank holds {len(bank.unlabeled_features)} unlabeled and "
      f"{len(bank.labeled_features)} labeled features")

truth = split.evaluation_labels()
anchor = split.unlabeled[0]
ns = knn_query(bank, anchor.id, bank.unlabeled_features[anchor.id], k=8)
print(f"\nanchor {anchor.id} (true class {truth[anchor.id]}) and its 8 neighbors:")
for nid, dist in zip(ns.neighbor_ids, ns.distances):
    print(f"  {nid}  distance={dist:.3f}  true class {truth[nid]}")

with torch.no_grad():
    feats = [torch.as_tensor(bank.unlabeled_features[nid]) for nid in ns.neighbor_ids]
    w = attention_weights(bundle, torch.as_tensor(bank.unlabeled_features[anchor.id]), feats)
    center = local_center(w, feats)
print(f"\nattention weights (sum {float(w.sum()):.6f}): {np.round(w.numpy(), 3)}")
print(f"local center stays inside the neighborhood span: norm {float(center.norm()):.3f}")

ps = select_positive(ns, bank)
print(f"\npositives by labeled 1-NN agreement: {ps.positive_ids}")

sets = [
    knn_query(bank, s.id, bank.unlabeled_features[s.id], k=8)
    for s in split.unlabeled
]
print(f"neighbor quality ratio over the whole pool: "
      f"{neighbor_quality_ratio(sets, truth):.3f}")
print("(the trainer recomputes this each epoch; it rises as features organize)")
