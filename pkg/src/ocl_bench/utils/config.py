"""Experiment configuration loading for ocl-bench."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import yaml

from ..core.stream import Example, Scenario, build_scenario, load_csv_dataset, make_synthetic_dataset
from ..exceptions import ConfigurationError
from ..models import DatasetBlock, ExperimentConfig

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "OCL_BENCH_OUTPUT_ROOT"


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively merge ``override`` into a copy of ``base``."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def parse_overrides(overrides: Optional[str]) -> Dict[str, Any]:
    if not overrides:
        return {}
    try:
        data = json.loads(overrides)
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"--set is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigurationError("--set must be a JSON object")
    return data


def read_config_file(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"{path} is not valid YAML: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain a mapping at the top level")
    return data


def load_experiment_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[str] = None,
) -> ExperimentConfig:
    """YAML file, then the JSON ``--set`` override, then the environment."""
    data = read_config_file(path) if path else {}
    data = deep_merge(data, parse_overrides(overrides))
    config = ExperimentConfig.model_validate(data)
    output_root = os.getenv(OUTPUT_ROOT_ENV)
    if output_root:
        config = config.model_copy(update={"output_dir": output_root})
    logger.debug("Loaded experiment config %s", config.name)
    return config


def default_config_dict() -> Dict[str, Any]:
    return ExperimentConfig().model_dump(mode="json", by_alias=True)


def _label_column(value: str) -> Union[int, str]:
    stripped = value.strip()
    if stripped.lstrip("-").isdigit():
        return int(stripped)
    return stripped


def build_dataset(block: DatasetBlock) -> List[Example]:
    if block.source == "csv":
        return load_csv_dataset(block.path, _label_column(block.label_column), block.has_header)
    return make_synthetic_dataset(
        seed=block.seed,
        n_classes=block.n_classes,
        dim=block.dim,
        per_class=block.per_class,
        spread=block.spread,
        instances_per_class=block.instances_per_class,
    )


def scenario_from_config(config: ExperimentConfig) -> Scenario:
    block = config.scenario
    scenario = build_scenario(
        build_dataset(config.dataset),
        block.kind,
        block.content,
        block.n_batches,
        block.seed,
        block.test_fraction,
    )
    if block.task_agnostic:
        scenario = scenario.without_task_labels()
    return scenario
