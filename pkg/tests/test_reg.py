"""Tests for Synaptic Intelligence, the latent replay buffer and the AR1 loop."""

import numpy as np
import pytest

from ocl_bench.core import oracles
from ocl_bench.core.backbone import Network, forward
from ocl_bench.core.heads import ConsolidationPolicy, HeadState
from ocl_bench.core.learners import HeadLearner
from ocl_bench.core.reg import (
    AR1Config,
    LatentReplayBuffer,
    SIState,
    ar1_train_batch,
    si_accumulate,
    si_consolidate,
    si_penalty,
)
from ocl_bench.core.stream import build_scenario
from ocl_bench.exceptions import ValidationError
from ocl_bench.models import StrategyBlock


@pytest.fixture
def one_class_per_batch(small_dataset):
    return build_scenario(small_dataset, "SIT", "NC", n_batches=4, seed=1)


@pytest.fixture
def block():
    return StrategyBlock(
        name="ar1*free",
        hidden=[8, 8],
        epochs_per_batch=2,
        batch_size=8,
        replay_layer=1,
        rm_size=12,
    )


def _learner(block, scenario, multipliers, **kwargs):
    return HeadLearner(
        block,
        scenario.dim,
        scenario.n_classes,
        seed=0,
        policy=kwargs.pop("policy", ConsolidationPolicy.cwr_star()),
        multipliers=multipliers,
        **kwargs,
    )


class TestSynapticIntelligence:
    def test_path_integral_matches_loss_decrease(self):
        result = oracles.si_quadratic()
        assert result.passed, result.value

    def test_penalty_gradient(self):
        assert oracles.si_penalty_check(seed=3).passed

    def test_consolidation_resets_path_and_reference(self):
        theta = [np.zeros(2)]
        si = SIState.for_parameters(theta, xi=0.1, lam=1.0)
        si_accumulate(si, [np.array([-1.0, 0.0])], [np.array([0.5, 0.0])])
        moved = [np.array([0.5, 0.0])]
        si_consolidate(si, moved)
        assert si.importance[0][0] == pytest.approx(0.5 / (0.25 + 0.1))
        assert si.importance[0][1] == 0.0
        assert not np.any(si.omega_path[0])
        assert np.array_equal(si.theta_ref[0], moved[0])
        assert si_penalty(si, moved) == 0.0

    def test_importance_never_decreases(self):
        si = SIState.for_parameters([np.zeros(1)])
        si_accumulate(si, [np.array([-1.0])], [np.array([1.0])])
        si_consolidate(si, [np.array([1.0])])
        before = si.importance[0].copy()
        si_accumulate(si, [np.array([1.0])], [np.array([1.0])])
        si_consolidate(si, [np.array([2.0])])
        assert si.importance[0][0] >= before[0]

    def test_rejects_non_positive_xi(self):
        with pytest.raises(ValidationError):
            SIState.for_parameters([np.zeros(1)], xi=0.0)


class TestReplayBuffer:
    def test_class_balanced_quota(self):
        buffer = LatentReplayBuffer(capacity=6, replay_layer=1, dim=2, seed=0)
        buffer.update(np.zeros((10, 2)), [0] * 10)
        assert buffer.class_counts() == {0: 6}
        buffer.update(np.ones((10, 2)), [1] * 10)
        assert buffer.class_counts() == {0: 3, 1: 3}
        buffer.update(np.ones((10, 2)), [2] * 10)
        assert buffer.class_counts() == {0: 2, 1: 2, 2: 2}
        assert len(buffer) <= buffer.capacity

    def test_reservoir_keeps_every_entry_equally_often(self):
        runs, n, capacity = 1000, 100, 10
        kept = np.zeros(n)
        for seed in range(runs):
            buffer = LatentReplayBuffer(capacity=capacity, replay_layer=1, dim=1, seed=seed)
            buffer.update(np.arange(n, dtype=np.float64)[:, None], [0] * n)
            assert len(buffer) == capacity
            kept[[int(e.latent[0]) for e in buffer.entries]] += 1
        expected = runs * capacity / n
        chi2 = float(np.sum((kept - expected) ** 2 / expected))
        # 99 degrees of freedom; 150 is beyond the 0.999 quantile.
        assert chi2 < 150.0

    def test_sample_without_replacement(self):
        buffer = LatentReplayBuffer(capacity=4, replay_layer=1, dim=1, seed=0)
        buffer.update(np.arange(4, dtype=np.float64)[:, None], [0, 0, 1, 1])
        latents, labels = buffer.sample(10)
        assert sorted(latents[:, 0].tolist()) == [0.0, 1.0, 2.0, 3.0]
        assert sorted(labels.tolist()) == [0, 0, 1, 1]

    def test_empty_sample(self):
        buffer = LatentReplayBuffer(capacity=4, replay_layer=1, dim=3)
        latents, labels = buffer.sample(5)
        assert latents.shape == (0, 3)
        assert labels.shape == (0,)

    def test_dimension_mismatch(self):
        buffer = LatentReplayBuffer(capacity=4, replay_layer=1, dim=3)
        with pytest.raises(ValidationError):
            buffer.update(np.zeros((2, 2)), [0, 1])

    def test_aging_is_zero_for_an_unchanged_network(self):
        net = Network.mlp([3, 4, 2], seed=0)
        X = np.random.default_rng(0).normal(size=(5, 3))
        buffer = LatentReplayBuffer(capacity=5, replay_layer=1, dim=4, track_sources=True)
        buffer.update(forward(net, X, upto=1).output, [0] * 5, sources=X)
        assert buffer.aging(net) == pytest.approx(0.0)


class TestAR1Config:
    @pytest.mark.parametrize("fraction,fresh,expected", [(0.0, 32, 0), (0.5, 32, 32), (0.2, 32, 8)])
    def test_replay_count(self, fraction, fresh, expected):
        assert AR1Config(replay_fraction=fraction).replay_count(fresh) == expected

    def test_lambda_alias(self):
        assert AR1Config.model_validate({"lambda": 0.3}).lam == 0.3

    def test_ar1_needs_a_plus_or_star_head(self, nc_scenario):
        net = Network.mlp([nc_scenario.dim, 4], seed=0)
        head = HeadState.allocate(nc_scenario.n_classes, 4)
        config = AR1Config(replay_layer=1, policy=ConsolidationPolicy.cwr())
        with pytest.raises(ValidationError, match="AR1"):
            ar1_train_batch(net, head, None, None, nc_scenario.batches[0], config)


class TestLatentReplay:
    def test_frozen_latent_replay_equals_native_rehearsal(self, block, one_class_per_batch):
        """Replaying stored activations below a frozen layer is rehearsal from the input."""
        latent = _learner(block, one_class_per_batch, [0.0, 1.0], use_si=True, use_replay=True)
        native_block = block.model_copy(update={"replay_layer": 0})
        native = _learner(native_block, one_class_per_batch, [0.0, 1.0], use_si=True, use_replay=True)
        assert native.buffer.replay_layer == 0

        for batch in one_class_per_batch.batches:
            latent.train(batch)
            native.train(batch)

        assert latent.head.cw.tobytes() == native.head.cw.tobytes()
        for a, b in zip(latent.net.parameters(), native.net.parameters()):
            assert np.array_equal(a, b)

    def test_degenerate_ar1_is_cwr_plus(self, block, one_class_per_batch):
        depth = len(block.hidden)
        plain = _learner(block, one_class_per_batch, [0.0] * depth, policy=ConsolidationPolicy.cwr_plus())
        degenerate = _learner(
            block.model_copy(update={"lam": 0.0}),
            one_class_per_batch,
            [0.0] * depth,
            policy=ConsolidationPolicy.cwr_plus(),
            use_si=True,
        )
        for batch in one_class_per_batch.batches:
            plain.train(batch)
            degenerate.train(batch)
        assert np.array_equal(plain.head.cw, degenerate.head.cw)

    def test_lower_layers_stay_frozen_after_the_first_batch(self, block, one_class_per_batch):
        learner = _learner(block, one_class_per_batch, [0.0, 1.0], use_si=True, use_replay=True)
        learner.train(one_class_per_batch.batches[0])
        frozen = learner.net.weights[0].copy()
        for batch in one_class_per_batch.batches[1:]:
            report = learner.train(batch)
            assert report["replayed"] > 0
            assert report["stored"] <= block.rm_size
        assert np.array_equal(learner.net.weights[0], frozen)
        assert learner.stored_examples <= block.rm_size

    def test_replayed_classes_are_consolidated_with_the_batch(self, block, one_class_per_batch):
        learner = _learner(block, one_class_per_batch, [0.0, 1.0], use_si=True, use_replay=True)
        first, second = one_class_per_batch.batches[:2]
        assert learner.train(first)["consolidated"] == first.class_set
        old = learner.head.cw.copy()
        report = learner.train(second)
        assert report["consolidated"] == sorted(first.class_set + second.class_set)
        for c in first.class_set:
            assert learner.head.past_counts[c] == 2
            assert not np.array_equal(learner.head.cw[c], old[c])
        untouched = set(range(learner.head.n_classes)) - set(report["consolidated"])
        for c in untouched:
            assert not np.any(learner.head.cw[c])

    def test_without_replay_only_batch_classes_are_consolidated(self, block, one_class_per_batch):
        learner = _learner(block, one_class_per_batch, [0.0, 0.0], use_si=True)
        for batch in one_class_per_batch.batches:
            assert learner.train(batch)["consolidated"] == batch.class_set
