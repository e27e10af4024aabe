"""Forgetting comparison on the bundled 10-class, 5-batch new-classes stream."""

from pathlib import Path

import numpy as np
import pytest

from ocl_bench.commands.run import run_seed
from ocl_bench.core.metrics import average_accuracy, first_task_retention
from ocl_bench.utils.config import load_experiment_config, scenario_from_config

BENCHMARK = Path(__file__).resolve().parents[1] / "configs" / "nc_benchmark.yaml"


@pytest.fixture(scope="module")
def matrices():
    """Accuracy matrices per strategy over the config's seeds, computed on demand."""
    config = load_experiment_config(BENCHMARK)
    scenario = scenario_from_config(config)
    blocks = {block.name.value: block for block in config.strategy_blocks()}
    cache = {}

    def runs(name, **update):
        key = (name, tuple(sorted(update.items())))
        if key not in cache:
            block = blocks[name].model_copy(update=update)
            cache[key] = [
                run_seed(block, scenario, seed)[0].matrix() for seed in config.scenario.seeds
            ]
        return cache[key]

    return runs


def mean_retention(runs):
    return np.mean([first_task_retention(R) for R in runs], axis=0)


def mean_final_average(runs):
    return float(np.mean([average_accuracy(R, R.shape[0] - 1) for R in runs]))


def test_benchmark_uses_five_seeds():
    config = load_experiment_config(BENCHMARK)
    assert config.scenario.seeds == [0, 1, 2, 3, 4]
    assert config.scenario.n_batches == 5
    assert (config.dataset.n_classes, config.dataset.dim, config.dataset.per_class) == (10, 16, 100)


def test_naive_loses_most_of_the_first_task(matrices):
    retention = mean_retention(matrices("naive"))
    assert retention[-1] < 0.5 * retention[0]


def test_cwr_plus_keeps_more_of_the_first_task_than_naive(matrices):
    assert mean_retention(matrices("cwr+"))[-1] > mean_retention(matrices("naive"))[-1]


def test_ar1_star_ends_above_cwr_plus(matrices):
    assert mean_final_average(matrices("ar1*")) > mean_final_average(matrices("cwr+"))


def test_latent_replay_lifts_ar1_star(matrices):
    with_replay = mean_final_average(matrices("ar1*"))
    without = mean_final_average(matrices("ar1*", rm_size=0))
    assert with_replay > without
