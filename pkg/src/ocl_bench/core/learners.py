"""Continual learners behind a common train/predict interface.

Every learner maps ``<h_{i-1}, Tr_i, M_{i-1}>`` to ``<h_i, M_i>`` one
training batch at a time and reports how many examples its memory holds.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import ConfigurationError, NumericError
from ..models import StrategyBlock, StrategyName
from .backbone import Activation, Network, backward, forward, sgd_step, softmax_xent
from .gdm import DualMemory
from .gwr import GammaGWRNet
from .heads import ConsolidationPolicy, HeadState, predict_batch
from .reg import (
    AR1Config,
    LatentReplayBuffer,
    SIState,
    ar1_train_batch,
    train_shared_batch,
)
from .stream import Scenario, TrainingBatch

logger = logging.getLogger(__name__)


class Learner(ABC):
    """One strategy instance; ``train`` is called once per training batch."""

    name: str

    @abstractmethod
    def train(self, batch: TrainingBatch) -> Dict[str, Any]:
        ...

    @abstractmethod
    def predict(self, X: np.ndarray) -> np.ndarray:
        ...

    @property
    def stored_examples(self) -> int:
        return 0

    def extra_predictions(self, X: np.ndarray) -> Dict[str, np.ndarray]:
        """Secondary label predictions, keyed by label namespace."""
        return {}

    @abstractmethod
    def snapshot(self) -> Dict[str, Any]:
        ...


class NaiveLearner(Learner):
    """Plain fine-tuning of a full network on each batch."""

    def __init__(self, block: StrategyBlock, dim: int, n_classes: int, seed: int):
        self.name = block.name.value
        self.block = block
        self.net = Network.mlp([dim] + list(block.hidden) + [n_classes], seed=seed, output_activation=Activation.IDENTITY)
        self.rng = np.random.default_rng(seed + 2)

    def train(self, batch: TrainingBatch) -> Dict[str, Any]:
        X, y = batch.arrays()
        n = len(y)
        size = self.block.batch_size
        losses: List[float] = []
        try:
            for _ in range(self.block.epochs_per_batch):
                order = self.rng.permutation(n)
                epoch = []
                for start in range(0, n, size):
                    idx = order[start:start + size]
                    record = forward(self.net, X[idx])
                    loss, dlogits = softmax_xent(record.output, y[idx])
                    sgd_step(self.net, backward(self.net, record, dlogits), self.block.lr)
                    epoch.append(loss)
                losses.append(float(np.mean(epoch)))
        except NumericError as exc:
            raise NumericError(f"batch {batch.index}: {exc}", batch_index=batch.index) from exc
        return {"batch_index": batch.index, "losses": losses}

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(forward(self.net, X).output, axis=1)

    def snapshot(self) -> Dict[str, Any]:
        return {"strategy": self.name, "network": self.net.to_dict()}


class HeadLearner(Learner):
    """CWR family and AR1 family: feature extractor plus a consolidating head.

    The extractor is fully plastic on the first batch. Afterwards its layers
    follow ``multipliers`` (all zero for the CWR family).
    """

    def __init__(
        self,
        block: StrategyBlock,
        dim: int,
        n_classes: int,
        seed: int,
        policy: ConsolidationPolicy,
        multipliers: List[float],
        use_si: bool = False,
        use_replay: bool = False,
    ):
        self.name = block.name.value
        self.block = block
        self.net = Network.mlp([dim] + list(block.hidden), seed=seed)
        self.head = HeadState.allocate(n_classes, block.hidden[-1], seed=seed + 1)
        self.rng = np.random.default_rng(seed + 2)
        self.multipliers = multipliers
        self.config = AR1Config(
            epochs=block.epochs_per_batch,
            lr=block.lr,
            batch_size=block.batch_size,
            replay_layer=block.replay_layer if use_replay else len(block.hidden),
            rm_size=block.rm_size,
            replay_fraction=block.replay_fraction,
            xi=block.xi,
            lam=block.lam,
            policy=policy,
        )
        self.si = SIState.for_parameters(self.net.parameters(), block.xi, block.lam) if use_si else None
        self.buffer: Optional[LatentReplayBuffer] = None
        if use_replay:
            self.buffer = LatentReplayBuffer(
                capacity=block.rm_size,
                replay_layer=block.replay_layer,
                dim=self.net.dim_at(block.replay_layer),
                seed=seed + 3,
                track_sources=block.replay_layer > 0,
            )
        self._batches = 0

    @property
    def is_ar1(self) -> bool:
        return self.si is not None

    def train(self, batch: TrainingBatch) -> Dict[str, Any]:
        if self._batches == 1:
            self.net.set_lr_multipliers(self.multipliers)
        step = ar1_train_batch if self.is_ar1 else train_shared_batch
        report = step(self.net, self.head, self.si, self.buffer, batch, self.config, self.rng)
        self._batches += 1
        return report.to_dict()

    def features(self, X: np.ndarray) -> np.ndarray:
        return forward(self.net, X).output

    def predict(self, X: np.ndarray) -> np.ndarray:
        return predict_batch(self.head, self.features(X))

    @property
    def stored_examples(self) -> int:
        return 0 if self.buffer is None else len(self.buffer)

    def snapshot(self) -> Dict[str, Any]:
        return {
            "strategy": self.name,
            "network": self.net.to_dict(),
            "head": self.head.to_dict(),
            "replay_layer": self.config.replay_layer,
        }


class GWRLearner(Learner):
    def __init__(self, block: StrategyBlock, dim: int):
        self.name = block.name.value
        self.block = block
        self.net = GammaGWRNet(dim, block.gwr)

    def train(self, batch: TrainingBatch) -> Dict[str, Any]:
        X, y = batch.arrays()
        inserted = 0
        for _ in range(self.block.epochs_per_batch):
            for x, label in zip(X, y):
                if self.net.train_step(x, int(label)).inserted is not None:
                    inserted += 1
        return {"batch_index": batch.index, "neurons": len(self.net), "inserted": inserted}

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.net.classify([x]) for x in np.atleast_2d(X)], dtype=np.int64)

    def snapshot(self) -> Dict[str, Any]:
        return {"strategy": self.name, "gwr": self.net.to_dict()}


class GDMLearner(Learner):
    def __init__(self, block: StrategyBlock, dim: int, replay: bool):
        self.name = block.name.value
        config = block.gdm.model_copy(update={"replay_enabled": replay})
        self.memory = DualMemory(dim, config)

    def train(self, batch: TrainingBatch) -> Dict[str, Any]:
        X, y = batch.arrays()
        instances = [e.instance_label for e in batch.examples]
        report = self.memory.train_episode(X, instances, [int(c) for c in y])
        return {"batch_index": batch.index, **report.to_dict()}

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.memory.classify_category([x]) for x in np.atleast_2d(X)], dtype=np.int64)

    def extra_predictions(self, X: np.ndarray) -> Dict[str, np.ndarray]:
        instances = [self.memory.classify_instance([x]) for x in np.atleast_2d(X)]
        return {"instance": np.array(instances, dtype=np.int64)}

    def snapshot(self) -> Dict[str, Any]:
        return {"strategy": self.name, "gdm": self.memory.to_dict()}


def build_learner(block: StrategyBlock, scenario: Scenario, seed: int) -> Learner:
    """Instantiate the learner named by ``block`` for a scenario."""
    dim, n_classes = scenario.dim, scenario.n_classes
    depth = len(block.hidden)
    name = block.name

    if name is StrategyName.NAIVE:
        return NaiveLearner(block, dim, n_classes, seed)
    if name in (StrategyName.CWR, StrategyName.CWR_PLUS, StrategyName.CWR_STAR):
        policy = {
            StrategyName.CWR: ConsolidationPolicy.cwr(block.batch_weight),
            StrategyName.CWR_PLUS: ConsolidationPolicy.cwr_plus(),
            StrategyName.CWR_STAR: ConsolidationPolicy.cwr_star(),
        }[name]
        return HeadLearner(block, dim, n_classes, seed, policy, [0.0] * depth)
    if name is StrategyName.AR1:
        return HeadLearner(block, dim, n_classes, seed, ConsolidationPolicy.cwr_plus(), [1.0] * depth, use_si=True)
    if name in (StrategyName.AR1_STAR, StrategyName.AR1_STAR_FREE):
        lower = block.lower_lr_multiplier if name is StrategyName.AR1_STAR else 0.0
        multipliers = [lower if l < block.replay_layer else 1.0 for l in range(depth)]
        return HeadLearner(
            block,
            dim,
            n_classes,
            seed,
            ConsolidationPolicy.cwr_star(),
            multipliers,
            use_si=True,
            use_replay=True,
        )
    if name is StrategyName.GWR:
        return GWRLearner(block, dim)
    if name in (StrategyName.GDM, StrategyName.GDM_NOREPLAY):
        return GDMLearner(block, dim, replay=name is StrategyName.GDM)
    raise ConfigurationError(f"Unknown strategy '{name}'")
