"""Growing dual-memory learner.

An episodic network (G-EM) learns instance-level prototypes and records
which prototype follows which in temporal synapses. A semantic network
(G-SM) learns categories from the G-EM winners' weights. Between episodes,
trajectories generated from the synapses are replayed to both networks in
place of stored inputs.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..exceptions import NetworkStateError, ValidationError
from .gwr import GammaGWRConfig, GammaGWRNet, Neuron

logger = logging.getLogger(__name__)


class TemporalSynapses:
    """Sparse directed transition counts: ``P[(cur, prev)]`` counts ``prev -> cur``."""

    def __init__(self, decay: float = 1.0):
        if not 0.0 < decay <= 1.0:
            raise ValidationError(f"decay must be in (0, 1], got {decay}")
        self.decay = decay
        self.strengths: Dict[Tuple[int, int], float] = {}
        self.live: set = set()

    def add_neuron(self, j: int) -> None:
        self.live.add(j)

    def remove_neuron(self, j: int) -> None:
        self.live.discard(j)
        for key in [k for k in self.strengths if j in k]:
            del self.strengths[key]

    def observe(self, prev: int, cur: int) -> None:
        """Count one ``prev -> cur`` transition after decaying every existing strength.

        Raises:
            NetworkStateError: If either neuron is not live
        """
        for j in (prev, cur):
            if j not in self.live:
                raise NetworkStateError(f"Temporal synapses: neuron {j} is not live")
        if self.decay < 1.0:
            for key in self.strengths:
                self.strengths[key] *= self.decay
        self.strengths[(cur, prev)] = self.strengths.get((cur, prev), 0.0) + 1.0

    def get(self, i: int, j: int) -> float:
        return self.strengths.get((i, j), 0.0)

    def successor(self, prev: int, exclude: int) -> int:
        """Strongest successor of ``prev`` other than ``exclude``; lowest id on ties."""
        candidates = sorted(n for n in self.live if n != exclude)
        if not candidates:
            raise NetworkStateError("Temporal synapses need at least two live neurons")
        return max(candidates, key=lambda n: (self.get(n, prev), -n))

    def to_list(self) -> List[Dict[str, float]]:
        return [{"i": i, "j": j, "p": p} for (i, j), p in sorted(self.strengths.items())]

    @classmethod
    def from_list(cls, rows: Sequence[Dict[str, float]], live: Sequence[int], decay: float = 1.0) -> "TemporalSynapses":
        synapses = cls(decay)
        synapses.live = set(live)
        synapses.strengths = {(int(r["i"]), int(r["j"])): float(r["p"]) for r in rows}
        return synapses


@dataclass
class Rnat:
    """A replay trajectory of ``window + 1`` G-EM prototypes.

    ``instance_labels[i]`` is the majority label of prototype ``ids[i]`` and
    ``category_labels[i]`` its category; index 0 is the seed.
    """

    ids: List[int]
    vectors: List[np.ndarray]
    instance_labels: List[Optional[int]]
    category_labels: List[Optional[int]]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def instance_label(self) -> Optional[int]:
        return self.instance_labels[0]

    @property
    def category_label(self) -> Optional[int]:
        return self.category_labels[0]


class GDMConfig(BaseModel):
    gem: GammaGWRConfig = Field(default_factory=lambda: GammaGWRConfig(K=2, max_neurons=400))
    gsm: GammaGWRConfig = Field(
        default_factory=lambda: GammaGWRConfig(K=2, insertion_threshold=0.75, max_neurons=200)
    )
    replay_enabled: bool = True
    synapse_decay: float = Field(1.0, gt=0.0, le=1.0)
    epochs: int = Field(1, ge=1)


@dataclass
class EpisodeReport:
    episode: int
    n_examples: int
    replayed_trajectories: int = 0
    gem_neurons: int = 0
    gsm_neurons: int = 0
    gsm_insertions: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "episode": self.episode,
            "n_examples": self.n_examples,
            "replayed_trajectories": self.replayed_trajectories,
            "gem_neurons": self.gem_neurons,
            "gsm_neurons": self.gsm_neurons,
            "gsm_insertions": self.gsm_insertions,
        }


def _misclassified(bmu: Neuron, x: np.ndarray, label: Optional[int]) -> bool:
    # No label, no teaching signal: G-SM only grows on errors it can see.
    return label is not None and bmu.majority_label() != label


class DualMemory:
    def __init__(self, dim: int, config: Optional[GDMConfig] = None):
        self.config = config or GDMConfig()
        self.gem = GammaGWRNet(dim, self.config.gem, name="g-em")
        self.gsm = GammaGWRNet(dim, self.config.gsm, name="g-sm")
        self.gsm.insertion_gate = _misclassified
        self.P = TemporalSynapses(self.config.synapse_decay)
        self.gem.add_removal_listener(self.P.remove_neuron)
        self.instance_category: Dict[int, int] = {}
        self.episodes = 0
        self._prev_em: Optional[int] = None

    @property
    def window(self) -> int:
        """Trajectory window ``K_EM + K_SM + 1``."""
        return self.gem.K + self.gsm.K + 1

    @property
    def replay_enabled(self) -> bool:
        return self.config.replay_enabled

    def _sync_live(self) -> None:
        for j in self.gem.neurons:
            if j not in self.P.live:
                self.P.add_neuron(j)

    def observe_transition(self, prev_bmu: int, cur_bmu: int) -> None:
        """Record that G-EM neuron ``cur_bmu`` followed ``prev_bmu``."""
        for j in (prev_bmu, cur_bmu):
            if j not in self.gem.neurons:
                raise NetworkStateError(f"G-EM neuron {j} does not exist")
        self._sync_live()
        self.P.observe(prev_bmu, cur_bmu)

    def gem_to_gsm(self, x: np.ndarray) -> Tuple[int, np.ndarray]:
        """Current G-EM winner for ``x`` and its prototype weight."""
        if not self.gem.neurons:
            raise NetworkStateError("G-EM has no neurons")
        b, _, _ = self.gem.find_bmu(x)
        return b, self.gem.neurons[b].w.copy()

    def _train_pair(
        self,
        x: np.ndarray,
        instance: Optional[int],
        category: Optional[int],
        observe: bool,
        grow: bool = True,
    ) -> bool:
        self.gem.train_step(x, instance, grow=grow)
        b, prototype = self.gem_to_gsm(x)
        if observe:
            if self._prev_em is not None and self._prev_em in self.gem.neurons:
                self.observe_transition(self._prev_em, b)
            self._prev_em = b
        report = self.gsm.train_step(prototype, category, grow=grow)
        return report.inserted is not None

    def train_example(self, x: np.ndarray, instance: Optional[int], category: Optional[int]) -> bool:
        if instance is not None and category is not None:
            known = self.instance_category.setdefault(int(instance), int(category))
            if known != int(category):
                raise ValidationError(
                    f"Instance {instance} already belongs to category {known}, not {category}"
                )
        return self._train_pair(x, instance, category, observe=True)

    def generate_rnat(self, j: int) -> Rnat:
        """Follow the strongest temporal synapses from neuron ``j``.

        Args:
            j: Seed G-EM neuron, ``s(0)``

        Returns:
            ``window + 1`` prototypes; ``s(i)`` is the strongest successor of
            ``s(i-1)`` other than ``j``, ties to the lowest id. Each prototype
            carries its own majority label and that label's category.

        Raises:
            NetworkStateError: If ``j`` is not live or G-EM has fewer than two neurons
        """
        if j not in self.gem.neurons:
            raise NetworkStateError(f"G-EM neuron {j} does not exist")
        if len(self.gem) < 2:
            raise NetworkStateError("RNAT generation needs at least two G-EM neurons")
        self._sync_live()
        ids = [j]
        for _ in range(self.window):
            ids.append(self.P.successor(ids[-1], exclude=j))
        instances = [self.gem.neurons[i].majority_label() for i in ids]
        return Rnat(
            ids=ids,
            vectors=[self.gem.neurons[i].w.copy() for i in ids],
            instance_labels=instances,
            category_labels=[
                None if inst is None else self.instance_category.get(inst) for inst in instances
            ],
        )

    def replay_all(self) -> int:
        """Replay one trajectory per G-EM neuron; returns the number replayed.

        Replay adapts and relabels existing neurons but never inserts, so it
        leaves both networks' sizes unchanged.
        """
        if len(self.gem) < 2:
            return 0
        rnats = [self.generate_rnat(j) for j in sorted(self.gem.neurons)]
        for rnat in rnats:
            self.gem.reset_context()
            self.gsm.reset_context()
            for vector, instance, category in zip(
                rnat.vectors, rnat.instance_labels, rnat.category_labels
            ):
                self._train_pair(vector, instance, category, observe=False, grow=False)
        self.gem.reset_context()
        self.gsm.reset_context()
        self._prev_em = None
        logger.debug("Replayed %d trajectories of %d prototypes", len(rnats), self.window + 1)
        return len(rnats)

    def train_episode(
        self,
        X: np.ndarray,
        instances: Sequence[Optional[int]],
        categories: Sequence[Optional[int]],
    ) -> EpisodeReport:
        """Replay the previous episode's trajectories, then train on ``X`` in order.

        Args:
            X: Inputs of the episode, one row each
            instances: Instance label per row, or None
            categories: Category label per row, or None

        Returns:
            Counts of replayed trajectories, network sizes and G-SM insertions

        Raises:
            ValidationError: If ``X`` is empty or the lengths differ
        """
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValidationError("train_episode needs at least one example")
        if not len(instances) == len(categories) == X.shape[0]:
            raise ValidationError("X, instances and categories differ in length")

        report = EpisodeReport(episode=self.episodes + 1, n_examples=X.shape[0])
        # Trajectories from the end of the previous episode are replayed now.
        if self.replay_enabled and self.episodes > 0:
            report.replayed_trajectories = self.replay_all()
        for _ in range(self.config.epochs):
            for x, inst, cat in zip(X, instances, categories):
                if self.train_example(x, inst, cat):
                    report.gsm_insertions += 1
        self.episodes += 1
        report.gem_neurons = len(self.gem)
        report.gsm_neurons = len(self.gsm)
        logger.debug("Episode %d: %s", report.episode, report.to_dict())
        return report

    def classify_instance(self, xs: Sequence[np.ndarray]) -> int:
        return self.gem.classify(xs)

    def classify_category(self, xs: Sequence[np.ndarray]) -> int:
        """G-SM vote over the prototypes G-EM picks for ``xs``."""
        if not self.gem.neurons:
            raise NetworkStateError("G-EM has no neurons")
        prototypes = [self.gem.neurons[b].w for b in self.gem.bmu_sequence(xs)]
        return self.gsm.classify(prototypes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "window": self.window,
            "episodes": self.episodes,
            "config": self.config.model_dump(mode="json"),
            "gem": self.gem.to_dict(),
            "gsm": self.gsm.to_dict(),
            "temporal_synapses": self.P.to_list(),
            "instance_category": {str(k): v for k, v in sorted(self.instance_category.items())},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DualMemory":
        config = GDMConfig.model_validate(data["config"])
        gem = GammaGWRNet.from_dict(data["gem"])
        memory = cls(gem.dim, config)
        memory.gem = gem
        memory.gsm = GammaGWRNet.from_dict(data["gsm"])
        memory.gsm.insertion_gate = _misclassified
        memory.P = TemporalSynapses.from_list(data["temporal_synapses"], list(gem.neurons), config.synapse_decay)
        memory.gem.add_removal_listener(memory.P.remove_neuron)
        memory.instance_category = {int(k): int(v) for k, v in data["instance_category"].items()}
        memory.episodes = int(data["episodes"])
        return memory


def observe_transition(P: TemporalSynapses, prev_bmu: int, cur_bmu: int) -> None:
    """Functional form of ``TemporalSynapses.observe``."""
    P.observe(prev_bmu, cur_bmu)
