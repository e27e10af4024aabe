"""Configuration models for ocl-bench."""

from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .core.gdm import GDMConfig
from .core.gwr import GammaGWRConfig
from .core.stream import ContentKind, ScenarioKind


class StrategyName(str, Enum):
    NAIVE = "naive"
    CWR = "cwr"
    CWR_PLUS = "cwr+"
    CWR_STAR = "cwr*"
    AR1 = "ar1"
    AR1_STAR = "ar1*"
    AR1_STAR_FREE = "ar1*free"
    GWR = "gwr"
    GDM = "gdm"
    GDM_NOREPLAY = "gdm-noreplay"


class DatasetBlock(BaseModel):
    """Dataset source model: seeded synthetic clusters or a CSV file."""

    source: str = "synthetic"
    path: Optional[str] = None
    label_column: str = "-1"
    has_header: bool = True
    n_classes: int = Field(10, ge=2)
    dim: int = Field(16, ge=1)
    per_class: int = Field(50, ge=1)
    spread: float = Field(1.0, ge=0.0)
    instances_per_class: int = Field(1, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetBlock":
        if self.source not in ("synthetic", "csv"):
            raise ValueError(f"source must be 'synthetic' or 'csv', got '{self.source}'")
        if self.source == "csv" and not self.path:
            raise ValueError("a csv dataset needs 'path'")
        return self


class ScenarioBlock(BaseModel):
    """Scenario model: stream shape and the seeds to run."""

    kind: ScenarioKind = ScenarioKind.SIT
    content: ContentKind = ContentKind.NC
    n_batches: int = Field(5, ge=1)
    seed: int = 0
    seeds: List[int] = Field(default_factory=lambda: [0])
    test_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    task_agnostic: bool = False

    @model_validator(mode="after")
    def _check_seeds(self) -> "ScenarioBlock":
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be distinct")
        return self


class StrategyBlock(BaseModel):
    """Strategy model: name plus the keys of the backbone, GWR and GDM learners."""

    model_config = ConfigDict(populate_by_name=True)

    name: StrategyName = StrategyName.CWR_PLUS
    hidden: List[int] = Field(default_factory=lambda: [32, 32])
    epochs_per_batch: int = Field(2, ge=1)
    lr: float = Field(0.1, ge=0.0)
    batch_size: int = Field(32, ge=1)
    replay_layer: int = Field(1, ge=0)
    rm_size: int = Field(64, ge=0)
    replay_fraction: float = Field(0.5, ge=0.0, lt=1.0)
    lam: float = Field(1.0, ge=0.0, alias="lambda")
    xi: float = Field(0.1, gt=0.0)
    lower_lr_multiplier: float = Field(0.01, ge=0.0)
    batch_weight: float = Field(1.0, gt=0.0)
    gwr: GammaGWRConfig = Field(default_factory=GammaGWRConfig)
    gdm: GDMConfig = Field(default_factory=GDMConfig)

    @model_validator(mode="after")
    def _check_backbone(self) -> "StrategyBlock":
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise ValueError("hidden must list at least one positive layer width")
        if self.replay_layer > len(self.hidden):
            raise ValueError(
                f"replay_layer {self.replay_layer} is above the {len(self.hidden)} hidden layers"
            )
        return self


class ExperimentConfig(BaseModel):
    """Experiment model: what to generate, what to run, where to write."""

    name: str = "experiment"
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    scenario: ScenarioBlock = Field(default_factory=ScenarioBlock)
    strategy: StrategyBlock = Field(default_factory=StrategyBlock)
    strategies: List[StrategyName] = Field(default_factory=list)
    output_dir: str = "runs"

    def strategy_blocks(self) -> List[StrategyBlock]:
        """One block per strategy to run; ``strategies`` reuses the shared keys."""
        if not self.strategies:
            return [self.strategy]
        return [self.strategy.model_copy(update={"name": name}) for name in self.strategies]
