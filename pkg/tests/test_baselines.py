import math

import numpy as np
import pytest
import torch

from assl.baselines import (
    STRATEGY_NAMES,
    StrategySpec,
    entmin_loss,
    pseudo_label_round,
    s4l_inpainting_objective,
    select_pseudo_labels,
    vat_direction,
    vat_loss,
)
from assl.data import SyntheticConfig, generate_synthetic, make_split
from assl.errors import ConfigError, ContractError
from assl.losses import kl_divergence
from assl.models import ModelBundle


class TestStrategySpec:
    def test_closed_name_set(self):
        with pytest.raises(ConfigError):
            StrategySpec("mean_teacher")
        for name in STRATEGY_NAMES:
            StrategySpec(name)

    def test_flag_combinations(self):
        full = StrategySpec("assl")
        assert full.use_inpainting and full.use_neighborhood and full.use_adversarial
        assert not (full.use_vat or full.use_entmin or full.is_pseudo_label)
        no_adv = StrategySpec("assl_no_adv")
        assert no_adv.use_inpainting and no_adv.use_neighborhood
        assert not no_adv.use_adversarial
        assert StrategySpec("s4l_inpainting").use_inpainting
        assert not StrategySpec("s4l_inpainting").use_neighborhood
        assert StrategySpec("sup_inp").use_inpainting
        assert StrategySpec("sup_nei").use_neighborhood
        assert StrategySpec("vat_entmin").use_vat and StrategySpec("vat_entmin").use_entmin
        assert StrategySpec("pseudo_labels").is_pseudo_label
        sup = StrategySpec("supervised_only")
        assert not any(
            [sup.use_inpainting, sup.use_neighborhood, sup.use_adversarial, sup.use_vat]
        )

    def test_hyperparameter_defaults_and_ranges(self):
        spec = StrategySpec("vat")
        assert spec.hyperparameters["epsilon"] == 2.0
        assert spec.hyperparameters["xi"] == 1e-6
        assert spec.hyperparameters["power_iters"] == 1.0
        assert StrategySpec("pseudo_labels").hyperparameters["confidence_threshold"] == 0.0
        with pytest.raises(ConfigError):
            StrategySpec("vat", {"epsilon": -1.0})
        with pytest.raises(ConfigError):
            StrategySpec("pseudo_labels", {"confidence_threshold": 1.5})
        with pytest.raises(ConfigError):
            StrategySpec("vat", {"bogus": 1.0})


class TestPseudoLabels:
    def probs(self):
        return np.array(
            [
                [0.7, 0.2, 0.1],
                [0.4, 0.35, 0.25],
                [0.3, 0.65, 0.05],
                [0.55, 0.05, 0.40],
                [0.34, 0.33, 0.33],
            ]
        )

    def test_manual_filter_oracle(self):
        got = select_pseudo_labels(self.probs(), threshold=0.6)
        assert got == [(0, 0), (2, 1)]

    def test_zero_threshold_keeps_everything(self):
        got = select_pseudo_labels(self.probs(), threshold=0.0)
        assert [i for i, _ in got] == [0, 1, 2, 3, 4]
        assert [lab for _, lab in got] == [0, 0, 1, 0, 0]

    def test_impossible_threshold_keeps_nothing(self):
        assert select_pseudo_labels(self.probs(), threshold=1.0) == []

    def test_ties_take_lowest_class(self):
        got = select_pseudo_labels(np.array([[0.5, 0.5, 0.0]]), threshold=0.2)
        assert got == [(0, 0)]

    def test_round_augments_labeled_set(self):
        cfg = SyntheticConfig(classes=3, joints=2, frames=10, samples_per_class=6, seed=1)
        split = make_split(generate_synthetic(cfg), fraction=0.34, seed=0)
        bundle = ModelBundle(joints=2, classes=3, hidden=4, dtype=torch.float64)
        augmented = pseudo_label_round(bundle, split, 0.0, frames=8, seed=0)
        assert len(augmented) == len(split.labeled) + len(split.unlabeled)
        assert all(s.label is not None for s in augmented)
        # the original split is untouched
        assert all(s.label is None for s in split.unlabeled)
        kept = pseudo_label_round(bundle, split, 1.0, frames=8, seed=0)
        assert [s.id for s in kept] == [s.id for s in split.labeled]


class TestVat:
    def tiny_setup(self):
        bundle = ModelBundle(joints=1, classes=3, hidden=4, seed=3, dtype=torch.float64)
        # zero-bias rectifier heads start dead at toy widths; nudge all head
        # parameters so predictions actually depend on the input
        gen = np.random.default_rng(99)
        with torch.no_grad():
            for p in list(bundle.translator.parameters()) + list(bundle.classifier.parameters()):
                p.add_(torch.tensor(gen.normal(scale=0.3, size=tuple(p.shape)), dtype=torch.float64))
        rng = np.random.default_rng(4)
        x = torch.tensor(rng.normal(size=(2, 1, 3)), dtype=torch.float64)
        return bundle, x

    def test_zero_epsilon_gives_zero(self):
        bundle, x = self.tiny_setup()
        assert vat_loss(bundle, x, epsilon=0.0, seed=0).item() == 0.0

    def test_loss_non_negative(self):
        bundle, x = self.tiny_setup()
        for seed in range(10):
            assert vat_loss(bundle, x, epsilon=0.5, seed=seed).item() >= 0.0

    def test_initial_direction_norm_is_absorbed(self):
        bundle, x = self.tiny_setup()
        a = vat_loss(bundle, x, epsilon=0.5, xi=1e-6, seed=7).item()
        b = vat_loss(bundle, x, epsilon=0.5, xi=1e-6, seed=7).item()
        assert a == b
        d = vat_direction(bundle, x.unsqueeze(0), xi=1e-6, power_iters=1, seed=7)
        np.testing.assert_allclose(d.reshape(-1).norm().item(), 1.0, atol=1e-10)

    def test_direction_matches_random_search_oracle(self):
        # 6-dimensional input: the power-iteration direction should align with
        # the best of 1000 random unit directions (sign-insensitive)
        bundle, x = self.tiny_setup()
        xb = x.unsqueeze(0)
        d_power = vat_direction(bundle, xb, xi=1e-6, power_iters=1, seed=0)
        d_power = d_power.reshape(-1).numpy()

        with torch.no_grad():
            p = bundle.classify(bundle.translate(bundle.encode(xb)))
        rng = np.random.default_rng(11)
        best_kl, best_dir = -1.0, None
        eps = 0.05
        for _ in range(1000):
            cand = rng.normal(size=6)
            cand /= np.linalg.norm(cand)
            perturbed = xb + eps * torch.tensor(cand.reshape(1, 2, 1, 3), dtype=torch.float64)
            with torch.no_grad():
                q = bundle.classify(bundle.translate(bundle.encode(perturbed)))
            div = kl_divergence(p, q).mean().item()
            if div > best_kl:
                best_kl, best_dir = div, cand
        cosine = abs(float(d_power @ best_dir))
        assert cosine > 0.9

    def test_bad_hyperparameters_raise(self):
        bundle, x = self.tiny_setup()
        with pytest.raises(ConfigError):
            vat_loss(bundle, x, epsilon=-1.0)
        with pytest.raises(ConfigError):
            vat_loss(bundle, x, xi=0.0)
        with pytest.raises(ConfigError):
            vat_loss(bundle, x, power_iters=0)


class TestEntmin:
    def test_one_hot_is_zero(self):
        preds = [np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])]
        assert entmin_loss(preds).item() < 1e-7

    def test_uniform_is_log_c(self):
        np.testing.assert_allclose(
            entmin_loss([np.full(4, 0.25)]).item(), math.log(4), rtol=1e-12
        )

    def test_manual_mean_oracle(self):
        rng = np.random.default_rng(5)
        preds = []
        for _ in range(3):
            p = rng.random(4) + 1e-3
            preds.append(p / p.sum())
        want = np.mean(
            [-sum(p[c] * math.log(max(p[c], 1e-8)) for c in range(4)) for p in preds]
        )
        np.testing.assert_allclose(entmin_loss(preds).item(), want, rtol=1e-12)

    def test_rejects_non_batch(self):
        with pytest.raises(ContractError):
            entmin_loss(torch.zeros(3))


class TestS4lComposition:
    def test_zero_weight_reduces_to_supervised(self):
        report = s4l_inpainting_objective(1.7, 0.9, lambda1=0.0)
        assert report.total == 1.7

    def test_matches_losses_module_composition(self):
        report = s4l_inpainting_objective(1.25, 0.75, lambda1=1.0)
        assert report.total == 1.25 + 0.75
        assert report.l_kl == 0.0
        assert report.l_ce_center == 0.0
        assert report.l_adv == 0.0
        assert report.l_unlabeled == 0.75
