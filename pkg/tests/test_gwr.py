"""Tests for the Gamma-GWR network."""

import numpy as np
import pydantic
import pytest

from ocl_bench.core import oracles
from ocl_bench.core.gwr import GammaGWRConfig, GammaGWRNet, activity, default_alpha
from ocl_bench.exceptions import NetworkStateError, ValidationError


STABLE = GammaGWRConfig(K=0, eps_n=0.001)


def tight_clusters(seed: int = 0, noise: float = 0.02):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]])
    labels = np.repeat(np.arange(4), 25)
    order = rng.permutation(100)
    X = centres[labels] + rng.normal(0.0, noise, size=(100, 2))
    return X[order], labels[order]


def train_epoch(net, X, y=None):
    reports = net.train_sequence(X, None if y is None else [int(c) for c in y])
    return sum(r.inserted is not None for r in reports)


class TestConfig:
    def test_default_alpha_is_normalised_and_decreasing(self):
        alpha = default_alpha(3)
        assert len(alpha) == 4
        assert sum(alpha) == pytest.approx(1.0)
        assert all(a > b for a, b in zip(alpha, alpha[1:]))

    def test_k_alias(self):
        assert GammaGWRConfig(K=3).context_depth == 3

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"eps_b": 0.01, "eps_n": 0.1},
            {"tau_b": 0.1, "tau_n": 0.3},
            {"K": 1, "alpha": [0.5, 0.3, 0.2]},
            {"K": 1, "alpha": [1.0, 0.0]},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(pydantic.ValidationError):
            GammaGWRConfig(**kwargs)


class TestBmu:
    def test_matches_exhaustive_scan(self):
        result = oracles.bmu_scan(seed=2, trials=200)
        assert result.passed, f"{result.value} mismatches"

    def test_ties_go_to_lowest_id(self):
        net = GammaGWRNet(2, GammaGWRConfig(K=1))
        net.add_neuron(np.ones(2))
        net.add_neuron(np.zeros(2))
        net.add_neuron(np.zeros(2))
        b, s, d = net.find_bmu(np.zeros(2))
        assert (b, s, d) == (1, 2, 0.0)

    def test_empty_network(self):
        with pytest.raises(NetworkStateError):
            GammaGWRNet(2).find_bmu(np.zeros(2))

    def test_wrong_input_dimension(self):
        net = GammaGWRNet(2)
        with pytest.raises(ValidationError):
            net.train_step(np.zeros(3))

    def test_activity(self):
        assert activity(0.0) == 1.0
        with pytest.raises(ValidationError):
            activity(-1.0)


class TestTraining:
    def test_first_two_inputs_seed_neurons(self):
        net = GammaGWRNet(2)
        a = net.train_step(np.zeros(2), 0)
        b = net.train_step(np.ones(2), 1)
        assert (a.inserted, b.inserted) == (0, 1)
        assert net.neurons[1].label_hist == {1: 1}

    def test_global_context_merges_previous_winner(self):
        net = GammaGWRNet(2, GammaGWRConfig(K=2, beta=0.5))
        net.train_step(np.array([1.0, 0.0]))
        net.neurons[0].contexts = np.array([[0.0, 2.0], [4.0, 4.0]])
        net._remember_bmu(0)
        net.update_global_context()
        assert np.allclose(net.global_context[0], [1.0, 0.0])
        assert np.allclose(net.global_context[1], [0.5, 1.0])
        net.reset_context()
        assert not np.any(net.global_context)

    def test_habituation_stays_in_unit_interval(self, four_clusters):
        X, y = four_clusters
        net = GammaGWRNet(2, GammaGWRConfig(K=2))
        for _ in range(3):
            train_epoch(net, X, y)
            assert all(0.0 <= n.h <= 1.0 for n in net.neurons.values())

    def test_quantization_error_decreases(self, four_clusters):
        X, _ = four_clusters
        net = GammaGWRNet(2, GammaGWRConfig(K=0))
        train_epoch(net, X)
        first = net.quantization_error(X)
        for _ in range(4):
            train_epoch(net, X)
        assert net.quantization_error(X) < first

    def test_growth_stops_once_clusters_are_covered(self):
        X, y = tight_clusters()
        net = GammaGWRNet(2, STABLE)
        counts = [train_epoch(net, X, y) for _ in range(10)]
        assert counts[0] > 0
        assert counts[-1] == 0
        assert len(net) >= 4

    def test_classifies_learned_clusters(self):
        X, y = tight_clusters()
        net = GammaGWRNet(2, STABLE)
        for _ in range(10):
            train_epoch(net, X, y)
        predictions = [net.classify([x]) for x in X]
        assert np.mean(np.array(predictions) == y) >= 0.9

    def test_insertion_gate_blocks_growth(self):
        X, _ = tight_clusters()
        net = GammaGWRNet(2, GammaGWRConfig(K=0))
        net.insertion_gate = lambda bmu, x, label: False
        for _ in range(3):
            train_epoch(net, X)
        assert len(net) == 2

    def test_neuron_cap(self):
        X, _ = tight_clusters()
        net = GammaGWRNet(2, GammaGWRConfig(K=0, max_neurons=3))
        for _ in range(5):
            train_epoch(net, X)
        assert len(net) <= 3


class TestStructure:
    def test_removal_notifies_listeners(self):
        net = GammaGWRNet(2)
        removed = []
        net.add_removal_listener(removed.append)
        a = net.add_neuron(np.zeros(2))
        b = net.add_neuron(np.ones(2))
        net.connect(a, b)
        net.remove_neuron(a)
        assert removed == [a]
        assert not net.edges
        with pytest.raises(NetworkStateError):
            net.remove_neuron(a)

    def test_classify_needs_labels(self):
        net = GammaGWRNet(2)
        net.add_neuron(np.zeros(2))
        with pytest.raises(NetworkStateError):
            net.classify([np.zeros(2)])

    def test_queries_ignore_training_context(self, four_clusters):
        X, y = four_clusters
        net = GammaGWRNet(2, GammaGWRConfig(K=2))
        for _ in range(2):
            train_epoch(net, X, y)
        labels = [net.classify([x]) for x in X[:20]]
        winners = net.bmu_sequence(X[:10])
        error = net.quantization_error(X)

        net.global_context = np.full_like(net.global_context, 50.0)
        assert [net.classify([x]) for x in X[:20]] == labels
        assert net.bmu_sequence(X[:10]) == winners
        assert net.quantization_error(X) == error
        assert np.all(net.global_context == 50.0)

    def test_predictions_do_not_depend_on_query_order(self, four_clusters):
        X, y = four_clusters
        net = GammaGWRNet(2, GammaGWRConfig(K=2))
        train_epoch(net, X, y)
        forward_order = [net.classify([x]) for x in X[:20]]
        reverse_order = [net.classify([x]) for x in X[:20][::-1]][::-1]
        assert forward_order == reverse_order

    def test_snapshot_keeps_winners(self, four_clusters):
        X, y = four_clusters
        net = GammaGWRNet(2, GammaGWRConfig(K=2))
        train_epoch(net, X, y)
        restored = GammaGWRNet.from_dict(net.to_dict())
        assert restored.bmu_sequence(X[:10]) == net.bmu_sequence(X[:10])
        assert restored.classify(X[:5]) == net.classify(X[:5])
