import math

import numpy as np
import pytest
import torch

from _gradcheck import check_gradients
from assl.data import MaskSpec
from assl.errors import ConfigError, ContractError
from assl.losses import (
    LossReport,
    adversarial_loss,
    center_ce_loss,
    compose_total,
    inpainting_loss,
    kl_divergence,
    neighborhood_kl_loss,
    supervised_loss,
    total_objective,
)
from assl.models import ModelBundle


def dirichlet(rng, c):
    x = rng.random(c) + 1e-3
    return x / x.sum()


class TestInpaintingLoss:
    def test_perfect_reconstruction_is_zero(self):
        x = np.random.default_rng(0).normal(size=(4, 2, 3))
        assert inpainting_loss(x, x, MaskSpec(0, 2)).item() == 0.0

    def test_unit_offset_gives_one(self):
        x = np.random.default_rng(1).normal(size=(4, 2, 3))
        np.testing.assert_allclose(
            inpainting_loss(x + 1.0, x, MaskSpec(1, 2)).item(), 1.0, atol=1e-12
        )

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(2)
        recon, orig = rng.normal(size=(3, 2, 3)), rng.normal(size=(3, 2, 3))
        acc = 0.0
        for t in range(3):
            for j in range(2):
                for a in range(3):
                    acc += (recon[t, j, a] - orig[t, j, a]) ** 2
        np.testing.assert_allclose(
            inpainting_loss(recon, orig, MaskSpec(0, 3)).item(), acc / 18, rtol=1e-12
        )

    def test_value_independent_of_mask_placement(self):
        rng = np.random.default_rng(3)
        recon, orig = rng.normal(size=(6, 2, 3)), rng.normal(size=(6, 2, 3))
        a = inpainting_loss(recon, orig, MaskSpec(0, 2)).item()
        b = inpainting_loss(recon, orig, MaskSpec(3, 3)).item()
        assert a == b

    def test_shape_mismatch_raises(self):
        with pytest.raises(ContractError):
            inpainting_loss(np.zeros((3, 2, 3)), np.zeros((4, 2, 3)), MaskSpec(0, 1))


class TestKlDivergence:
    def test_identical_distributions_give_zero(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = dirichlet(rng, int(rng.integers(2, 8)))
            assert abs(kl_divergence(p, p).item()) < 1e-10

    def test_closed_form_half(self):
        got = kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])).item()
        np.testing.assert_allclose(got, math.log(2), rtol=1e-12)

    def test_matches_scalar_loop_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            p, q = dirichlet(rng, 4), dirichlet(rng, 4)
            want = sum(p[c] * (math.log(p[c]) - math.log(max(q[c], 1e-8))) for c in range(4))
            np.testing.assert_allclose(kl_divergence(p, q).item(), want, atol=1e-10)

    def test_non_negative_on_random_pairs(self):
        rng = np.random.default_rng(6)
        for _ in range(200):
            c = int(rng.integers(2, 10))
            assert kl_divergence(dirichlet(rng, c), dirichlet(rng, c)).item() >= -1e-12

    def test_zero_q_entries_are_floored(self):
        got = kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0])).item()
        want = 0.5 * math.log(0.5 / 1.0) + 0.5 * (math.log(0.5) - math.log(1e-8))
        np.testing.assert_allclose(got, want, rtol=1e-12)


class TestNeighborhoodKl:
    def test_identical_predictions_give_zero(self):
        p = np.array([0.2, 0.3, 0.5])
        loss = neighborhood_kl_loss([p, p], [p, p], [[p, p], [p]])
        assert abs(loss.item()) < 1e-12

    def test_empty_positives_reduce_to_anchor_terms(self):
        rng = np.random.default_rng(7)
        centers = [dirichlet(rng, 3) for _ in range(4)]
        anchors = [dirichlet(rng, 3) for _ in range(4)]
        got = neighborhood_kl_loss(centers, anchors, [[], [], [], []]).item()
        want = np.mean([kl_divergence(c, a).item() for c, a in zip(centers, anchors)])
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_matches_manual_two_anchor_oracle(self):
        c1, a1 = np.array([0.7, 0.2, 0.1]), np.array([0.3, 0.4, 0.3])
        p11, p12 = np.array([0.5, 0.25, 0.25]), np.array([0.1, 0.8, 0.1])
        c2, a2 = np.array([0.2, 0.2, 0.6]), np.array([0.6, 0.3, 0.1])

        def manual_kl(p, q):
            return sum(p[c] * (math.log(p[c]) - math.log(max(q[c], 1e-8))) for c in range(3))

        want = (
            manual_kl(c1, a1) + manual_kl(c1, p11) + manual_kl(c1, p12) + manual_kl(c2, a2)
        ) / 2
        got = neighborhood_kl_loss([c1, c2], [a1, a2], [[p11, p12], []]).item()
        np.testing.assert_allclose(got, want, rtol=1e-12)

    def test_empty_batch_is_zero(self):
        assert neighborhood_kl_loss([], [], []).item() == 0.0

    def test_misaligned_lists_raise(self):
        p = np.full(3, 1 / 3)
        with pytest.raises(ContractError):
            neighborhood_kl_loss([p], [p, p], [[], []])

    def test_stop_gradient_blocks_center_path(self):
        logits = torch.tensor([0.3, -0.2, 0.5], dtype=torch.float64, requires_grad=True)
        anchor_logits = torch.tensor([0.1, 0.1, -0.3], dtype=torch.float64, requires_grad=True)
        center = torch.softmax(logits, dim=0)
        anchor = torch.softmax(anchor_logits, dim=0)
        loss = neighborhood_kl_loss([center], [anchor], [[]], stop_gradient=True)
        loss.backward()
        assert logits.grad is None or logits.grad.abs().max().item() == 0.0
        assert anchor_logits.grad.abs().max().item() > 0

    def test_without_stop_gradient_center_path_flows(self):
        logits = torch.tensor([0.3, -0.2, 0.5], dtype=torch.float64, requires_grad=True)
        center = torch.softmax(logits, dim=0)
        anchor = torch.softmax(torch.tensor([0.1, 0.1, -0.3], dtype=torch.float64), dim=0)
        loss = neighborhood_kl_loss([center], [anchor], [[]], stop_gradient=False)
        loss.backward()
        assert logits.grad.abs().max().item() > 0


class TestCrossEntropyLosses:
    def test_one_hot_correct_is_zero(self):
        preds = [np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0])]
        assert center_ce_loss(preds, [1, 0]).item() < 1e-7
        assert supervised_loss(preds, [1, 0]).item() < 1e-7

    def test_uniform_closed_forms(self):
        np.testing.assert_allclose(
            center_ce_loss([np.full(4, 0.25)], [2]).item(), math.log(4), rtol=1e-12
        )
        np.testing.assert_allclose(
            supervised_loss([np.full(10, 0.1)], [7]).item(), math.log(10), rtol=1e-12
        )

    def test_matches_manual_mean(self):
        rng = np.random.default_rng(8)
        preds = [dirichlet(rng, 5) for _ in range(3)]
        labels = [0, 3, 4]
        want = np.mean([-math.log(max(p[y], 1e-8)) for p, y in zip(preds, labels)])
        np.testing.assert_allclose(center_ce_loss(preds, labels).item(), want, rtol=1e-12)
        np.testing.assert_allclose(supervised_loss(preds, labels).item(), want, rtol=1e-12)

    def test_out_of_range_label_raises(self):
        preds = [np.full(3, 1 / 3)]
        for bad in (-1, 3):
            with pytest.raises(ContractError):
                supervised_loss(preds, [bad])
            with pytest.raises(ContractError):
                center_ce_loss(preds, [bad])


class TestAdversarialLoss:
    def test_all_half_closed_form(self):
        got = adversarial_loss(np.full(4, 0.5), np.full(6, 0.5)).item()
        np.testing.assert_allclose(got, 2 * math.log(0.5), atol=1e-12)

    def test_discriminator_optimum_approaches_zero(self):
        got = adversarial_loss(np.array([1.0, 1.0]), np.array([0.0, 0.0, 0.0])).item()
        assert got == 0.0

    def test_matches_manual_evaluation(self):
        labeled = np.array([0.8, 0.6])
        unlabeled = np.array([0.3, 0.5, 0.9])
        want = np.log(labeled).mean() + np.log(1 - unlabeled).mean()
        np.testing.assert_allclose(
            adversarial_loss(labeled, unlabeled).item(), want, atol=1e-12
        )

    def test_never_positive(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            l = rng.uniform(1e-6, 1 - 1e-6, size=rng.integers(1, 6))
            u = rng.uniform(1e-6, 1 - 1e-6, size=rng.integers(1, 6))
            assert adversarial_loss(l, u).item() <= 1e-15

    def test_empty_pool_raises(self):
        with pytest.raises(ContractError):
            adversarial_loss(np.array([]), np.array([0.5]))


class TestTotalObjective:
    def test_zero_weights_reduce_to_supervised(self):
        report = total_objective(1.3, 0.2, 0.4, 0.1, -0.8, lambda1=0.0, lambda2=0.0)
        assert report.total == 1.3

    def test_defaults_recorded(self):
        report = total_objective(1.0, 0.1, 0.1, 0.1, -1.0)
        assert report.lambda1 == 1.0
        assert report.lambda2 == 0.1

    def test_linear_composition_is_exact(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            l_sup, l_kl, l_ce, l_inp = rng.random(4)
            l_adv = -rng.random()
            lam1, lam2 = rng.random(2)
            report = total_objective(l_sup, l_kl, l_ce, l_inp, l_adv, lam1, lam2)
            assert report.l_unlabeled == l_kl + l_ce + l_inp
            assert report.total == l_sup + lam1 * report.l_unlabeled + lam2 * l_adv
            assert report.total == compose_total(l_sup, l_kl, l_ce, l_inp, l_adv, lam1, lam2)

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigError):
            total_objective(1.0, 0.1, 0.1, 0.1, -1.0, lambda1=-0.5)

    def test_report_invariants_enforced(self):
        with pytest.raises(ContractError):
            LossReport(
                l_sup=1.0, l_kl=0.1, l_ce_center=0.1, l_inp=0.1,
                l_unlabeled=5.0, l_adv=-1.0, total=0.0, lambda1=1.0, lambda2=0.1,
            )
        with pytest.raises(ContractError):
            LossReport(
                l_sup=-1.0, l_kl=0.0, l_ce_center=0.0, l_inp=0.0,
                l_unlabeled=0.0, l_adv=0.0, total=-1.0, lambda1=1.0, lambda2=0.1,
            )


class TestLossGradients:
    def test_inpainting_gradients_through_decoder(self):
        b = ModelBundle(2, 3, hidden=4, dtype=torch.float64)
        rng = np.random.default_rng(11)
        original = torch.tensor(rng.normal(size=(5, 2, 3)), dtype=torch.float64)
        masked = original.clone()
        masked[1:3] = 0.0
        params = list(b.decoder_rnn.parameters()) + list(b.decoder_init.parameters())
        check_gradients(
            lambda: inpainting_loss(b.decode(b.encode(masked), masked), original, MaskSpec(1, 2)),
            params,
        )

    def test_neighborhood_kl_gradients_through_aggregator(self):
        b = ModelBundle(2, 3, hidden=4, dtype=torch.float64)
        rng = np.random.default_rng(12)
        anchor = torch.tensor(rng.normal(size=8), dtype=torch.float64)
        neighbors = [torch.tensor(rng.normal(size=8), dtype=torch.float64) for _ in range(3)]

        def closure():
            from assl.neighborhood import attention_weights, local_center

            w = attention_weights(b, anchor, neighbors)
            center = local_center(w, neighbors)
            center_pred = b.classify(center)
            anchor_pred = b.classify(anchor)
            return neighborhood_kl_loss([center_pred], [anchor_pred], [[]], stop_gradient=False)

        params = list(b.aggregator.parameters()) + list(b.classifier.parameters())
        check_gradients(closure, params)
