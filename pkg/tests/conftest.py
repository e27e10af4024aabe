"""Shared fixtures for the ocl-bench test suite."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from ocl_bench.core.stream import build_scenario, make_synthetic_dataset


@pytest.fixture
def small_dataset():
    """Four well-separated classes, 20 examples each, in 6 dimensions."""
    return make_synthetic_dataset(seed=0, n_classes=4, dim=6, per_class=20, spread=0.3)


@pytest.fixture
def nc_scenario(small_dataset):
    return build_scenario(small_dataset, "SIT", "NC", n_batches=2, seed=0)


@pytest.fixture
def four_clusters():
    """Stationary stream around four distant 2-D centres."""
    rng = np.random.default_rng(3)
    centres = np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0], [5.0, 5.0]])
    labels = np.repeat(np.arange(4), 25)
    X = centres[labels] + rng.normal(0.0, 0.2, size=(100, 2))
    order = rng.permutation(100)
    return X[order], labels[order]


def _smoke_config(name: str, output_dir: Path) -> dict:
    return {
        "name": name,
        "dataset": {"n_classes": 4, "dim": 6, "per_class": 15, "spread": 0.4, "seed": 0},
        "scenario": {"kind": "SIT", "content": "NC", "n_batches": 2, "seed": 0, "seeds": [0]},
        "strategy": {
            "name": "cwr+",
            "hidden": [8],
            "epochs_per_batch": 1,
            "batch_size": 8,
            "replay_layer": 1,
            "rm_size": 8,
        },
        "output_dir": str(output_dir),
    }


@pytest.fixture
def config_file(tmp_path):
    """Write a tiny experiment config and return its path."""
    path = tmp_path / "smoke.yaml"
    path.write_text(yaml.safe_dump(_smoke_config("smoke", tmp_path / "out")), encoding="utf-8")
    return path


@pytest.fixture
def make_config(tmp_path):
    """Factory for config files with a deep-merged override."""
    from ocl_bench.utils.config import deep_merge

    def factory(name: str = "exp", **override) -> Path:
        data = deep_merge(_smoke_config(name, tmp_path / "out"), override)
        path = tmp_path / f"{name}.yaml"
        path.write_text(yaml.safe_dump(data), encoding="utf-8")
        return path

    return factory
