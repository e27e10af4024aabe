"""Tests for CWR, CWR+ and CWR* consolidation."""

import numpy as np
import pytest

from ocl_bench.core.heads import (
    ConsolidationPolicy,
    HeadInit,
    HeadState,
    HeadVariant,
    consolidate,
    predict,
    predict_batch,
    reinit_tw,
    train_head_batch,
)
from ocl_bench.exceptions import ValidationError


@pytest.fixture
def head():
    return HeadState.allocate(n_classes=4, feature_dim=3, seed=0)


class TestPolicy:
    def test_plus_and_star_force_zero_init(self):
        policy = ConsolidationPolicy(variant="CWR_STAR", batch_weight=3.0, init="gaussian_001")
        assert policy.init is HeadInit.ZERO
        assert policy.batch_weight == 1.0

    def test_cwr_keeps_its_settings(self):
        policy = ConsolidationPolicy.cwr(batch_weight=0.5)
        assert policy.variant is HeadVariant.CWR
        assert policy.init is HeadInit.GAUSSIAN_001
        assert policy.batch_weight == 0.5

    def test_reinit(self, head):
        head.tw[:] = 5.0
        reinit_tw(head, ConsolidationPolicy.cwr_plus())
        assert not np.any(head.tw)
        reinit_tw(head, ConsolidationPolicy.cwr())
        assert np.any(head.tw)
        assert np.all(np.abs(head.tw) < 0.1)

    def test_gaussian_init_has_the_expected_spread(self):
        head = HeadState.allocate(n_classes=50, feature_dim=40, seed=3)
        reinit_tw(head, ConsolidationPolicy.cwr())
        assert 0.008 <= float(np.std(head.tw)) <= 0.012
        assert abs(float(np.mean(head.tw))) < 0.002


class TestConsolidate:
    def test_cwr_copies_scaled_rows(self, head):
        head.tw = np.arange(12, dtype=np.float64).reshape(4, 3)
        consolidate(head, [1, 2], ConsolidationPolicy.cwr(batch_weight=2.0))
        assert np.array_equal(head.cw[1], 2.0 * head.tw[1])
        assert np.array_equal(head.cw[2], 2.0 * head.tw[2])
        assert not np.any(head.cw[0])
        assert head.known_classes == {1, 2}

    def test_cwr_plus_subtracts_the_batch_mean(self, head):
        head.tw = np.arange(12, dtype=np.float64).reshape(4, 3)
        consolidate(head, [0, 1], ConsolidationPolicy.cwr_plus())
        assert head.cw[[0, 1]].sum() == pytest.approx(0.0)
        assert np.allclose(head.cw[0], head.tw[0] - 2.5)

    def test_cwr_star_averages_recurring_classes(self, head):
        policy = ConsolidationPolicy.cwr_star()
        head.tw = np.array([[1.0, 1.0, 1.0], [3.0, 3.0, 3.0], [0, 0, 0], [0, 0, 0]])
        consolidate(head, [0, 1], policy)
        first = head.cw[0].copy()
        head.tw = np.array([[5.0, 5.0, 5.0], [1.0, 1.0, 1.0], [0, 0, 0], [0, 0, 0]])
        consolidate(head, [0, 1], policy)
        assert np.allclose(head.cw[0], (first + np.array([2.0, 2.0, 2.0])) / 2)
        assert head.past_counts[0] == 2
        assert head.past_counts[2] == 0

    def test_cwr_plus_ignores_a_constant_shift_of_tw(self, head):
        rng = np.random.default_rng(5)
        tw = rng.normal(size=(4, 3))
        shifted = HeadState.allocate(n_classes=4, feature_dim=3)
        head.tw, shifted.tw = tw.copy(), tw + 3.7
        for h in (head, shifted):
            consolidate(h, [0, 2, 3], ConsolidationPolicy.cwr_plus())
        assert np.allclose(head.cw, shifted.cw)
        X = rng.normal(size=(20, 3))
        assert np.array_equal(predict_batch(head, X), predict_batch(shifted, X))

    @pytest.mark.parametrize(
        "policy",
        [ConsolidationPolicy.cwr(0.5), ConsolidationPolicy.cwr_plus(), ConsolidationPolicy.cwr_star()],
    )
    def test_rows_outside_the_batch_never_change(self, policy):
        rng = np.random.default_rng(11)
        head = HeadState.allocate(n_classes=8, feature_dim=5)
        for _ in range(30):
            batch = rng.choice(8, size=int(rng.integers(1, 4)), replace=False)
            head.tw = rng.normal(size=(8, 5))
            before = head.cw.copy()
            consolidate(head, batch, policy)
            for c in set(range(8)) - {int(b) for b in batch}:
                assert head.cw[c].tobytes() == before[c].tobytes()

    def test_unknown_class(self, head):
        with pytest.raises(ValidationError):
            consolidate(head, [4], ConsolidationPolicy.cwr_plus())


class TestTraining:
    def test_loss_decreases_on_separable_latents(self, head):
        latents = np.eye(3)
        features = [(latents[c], c) for c in range(3)] * 4
        curve = train_head_batch(head, features, epochs=20, lr=0.5)
        assert curve[-1] < curve[0]

    def test_dlatent_uses_weights_before_update(self, head):
        loss, dlatent = head.tw_step(np.ones((2, 3)), np.array([0, 1]), lr=1.0)
        assert loss == pytest.approx(np.log(4))
        assert not np.any(dlatent)
        assert np.any(head.tw)

    def test_fits_a_separable_toy_set_without_touching_cw(self, head):
        head.cw = np.random.default_rng(2).normal(size=(4, 3))
        before = head.cw.tobytes()
        latents = np.array([[2.0, 0.1, 1.0], [1.5, 0.3, 1.0], [0.1, 2.0, 1.0], [0.2, 1.7, 1.0]])
        labels = [0, 0, 1, 1]
        train_head_batch(head, list(zip(latents, labels)), epochs=50, lr=0.5)
        assert list(np.argmax(latents @ head.tw.T, axis=1)) == labels
        assert head.cw.tobytes() == before

    def test_zero_lr_leaves_tw(self, head):
        head.tw[:] = 0.25
        train_head_batch(head, [(np.ones(3), 1)], epochs=3, lr=0.0)
        assert np.all(head.tw == 0.25)

    def test_rejects_dimension_mismatch(self, head):
        with pytest.raises(ValidationError):
            train_head_batch(head, [(np.ones(2), 0)], epochs=1, lr=0.1)


class TestPredict:
    def test_never_seen_classes_are_masked(self, head):
        head.cw = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 0], [9.0, 9.0, 9.0]])
        head.known_classes = {0, 1}
        assert predict(head, np.array([1.0, 0.5, 0.0])) == 0
        assert list(predict_batch(head, np.array([[0.0, 2.0, 0.0], [3.0, 0.0, 0.0]]))) == [1, 0]

    def test_ties_go_to_lowest_class(self, head):
        assert predict(head, np.zeros(3)) == 0

    def test_snapshot_round_trip_keeps_predictions(self, head):
        head.cw = np.random.default_rng(0).normal(size=(4, 3))
        head.known_classes = {0, 2, 3}
        restored = HeadState.from_dict(head.to_dict())
        X = np.random.default_rng(1).normal(size=(5, 3))
        assert np.array_equal(predict_batch(restored, X), predict_batch(head, X))
