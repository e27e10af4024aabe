"""Gamma-GWR: a growing self-organizing network with temporal context.

Each neuron holds a weight vector and ``K`` context descriptors. The global
context is a leaky merge of the previous best-matching unit's weight and
contexts, so the winner at every step depends on the recent input history.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..exceptions import NetworkStateError, ValidationError

logger = logging.getLogger(__name__)

RemovalListener = Callable[[int], None]
InsertionGate = Callable[["Neuron", np.ndarray, Optional[int]], bool]


def default_alpha(context_depth: int) -> List[float]:
    """Geometrically decaying context weights ``0.7 * 0.5 ** k``, normalised to sum to 1."""
    raw = np.array([0.7 * 0.5 ** k for k in range(context_depth + 1)])
    return (raw / raw.sum()).tolist()


class GammaGWRConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    context_depth: int = Field(2, ge=0, alias="K")
    alpha: Optional[List[float]] = None
    beta: float = Field(0.5, ge=0.0, le=1.0)
    eps_b: float = Field(0.1, gt=0.0, le=1.0)
    eps_n: float = Field(0.01, gt=0.0, le=1.0)
    insertion_threshold: float = Field(0.85, gt=0.0, lt=1.0)
    habituation_threshold: float = Field(0.3, gt=0.0, lt=1.0)
    tau_b: float = Field(0.3, gt=0.0)
    tau_n: float = Field(0.1, gt=0.0)
    kappa: float = Field(1.05, gt=0.0)
    max_edge_age: int = Field(50, ge=1)
    max_neurons: int = Field(1000, ge=2)

    @model_validator(mode="after")
    def _check_rates(self) -> "GammaGWRConfig":
        if self.eps_n >= self.eps_b:
            raise ValueError(f"eps_n ({self.eps_n}) must be smaller than eps_b ({self.eps_b})")
        if self.tau_n >= self.tau_b:
            raise ValueError(f"tau_n ({self.tau_n}) must be smaller than tau_b ({self.tau_b})")
        if self.alpha is None:
            self.alpha = default_alpha(self.context_depth)
        if len(self.alpha) != self.context_depth + 1:
            raise ValueError(
                f"alpha needs K+1 = {self.context_depth + 1} entries, got {len(self.alpha)}"
            )
        if any(a <= 0 for a in self.alpha):
            raise ValueError("alpha entries must be positive")
        return self


@dataclass
class Neuron:
    id: int
    w: np.ndarray
    contexts: np.ndarray
    h: float = 1.0
    label_hist: Dict[int, int] = field(default_factory=dict)

    def add_label(self, label: int, count: int = 1) -> None:
        self.label_hist[label] = self.label_hist.get(label, 0) + count

    def majority_label(self) -> Optional[int]:
        if not self.label_hist:
            return None
        # Highest count, lowest label on ties.
        return min(self.label_hist.items(), key=lambda kv: (-kv[1], kv[0]))[0]


@dataclass
class StepReport:
    bmu: int
    second: Optional[int]
    distance: float
    activity: float
    inserted: Optional[int] = None


def activity(d_b: float) -> float:
    """BMU activity ``exp(-d_b)``, in ``(0, 1]``."""
    if d_b < 0:
        raise ValidationError(f"Distance must be >= 0, got {d_b}")
    return float(np.exp(-d_b))


class GammaGWRNet:
    def __init__(self, dim: int, config: Optional[GammaGWRConfig] = None, name: str = "gwr"):
        if dim < 1:
            raise ValidationError(f"dim must be >= 1, got {dim}")
        self.dim = dim
        self.config = config or GammaGWRConfig()
        self.name = name
        self.neurons: Dict[int, Neuron] = {}
        self.edges: Dict[Tuple[int, int], int] = {}
        self.global_context = np.zeros((self.K, dim))
        self.prev_bmu_weight: Optional[np.ndarray] = None
        self.prev_bmu_contexts: Optional[np.ndarray] = None
        self.insertion_gate: Optional[InsertionGate] = None
        self._listeners: List[RemovalListener] = []
        self._next_id = 0

    @property
    def K(self) -> int:
        return self.config.context_depth

    @property
    def alpha(self) -> np.ndarray:
        return np.asarray(self.config.alpha, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.neurons)

    def add_removal_listener(self, listener: RemovalListener) -> None:
        self._listeners.append(listener)

    def neighbors(self, j: int) -> List[int]:
        return sorted(b if a == j else a for (a, b) in self.edges if j in (a, b))

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise ValidationError(f"Input shape {x.shape} != ({self.dim},)")
        return x

    # --- neurons and edges -------------------------------------------------

    def add_neuron(
        self,
        w: np.ndarray,
        contexts: Optional[np.ndarray] = None,
        label: Optional[int] = None,
    ) -> int:
        if len(self.neurons) >= self.config.max_neurons:
            raise NetworkStateError(f"{self.name}: neuron cap {self.config.max_neurons} reached")
        j = self._next_id
        self._next_id += 1
        ctx = np.zeros((self.K, self.dim)) if contexts is None else np.array(contexts, dtype=np.float64)
        self.neurons[j] = Neuron(id=j, w=np.array(w, dtype=np.float64), contexts=ctx.reshape(self.K, self.dim))
        if label is not None:
            self.neurons[j].add_label(int(label))
        return j

    def seed(self, samples: Sequence[np.ndarray], labels: Optional[Sequence[int]] = None) -> List[int]:
        """Create one neuron per sample with the current global context."""
        ids = []
        for i, x in enumerate(samples):
            label = None if labels is None else labels[i]
            ids.append(self.add_neuron(self._check_x(x), self.global_context, label))
        return ids

    def remove_neuron(self, j: int) -> None:
        if j not in self.neurons:
            raise NetworkStateError(f"{self.name}: neuron {j} does not exist")
        del self.neurons[j]
        for key in [k for k in self.edges if j in k]:
            del self.edges[key]
        for listener in self._listeners:
            listener(j)

    def connect(self, a: int, b: int) -> None:
        if a == b:
            return
        self.edges[(min(a, b), max(a, b))] = 0

    def disconnect(self, a: int, b: int) -> None:
        self.edges.pop((min(a, b), max(a, b)), None)

    # --- distances -----------------------------------------------------------

    def _matrix(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        ids = np.fromiter(self.neurons.keys(), dtype=np.int64)
        W = np.stack([n.w for n in self.neurons.values()])
        C = np.stack([n.contexts for n in self.neurons.values()])
        return ids, W, C

    def _distances(self, x: np.ndarray, context: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ids, W, C = self._matrix()
        alpha = self.alpha
        d = alpha[0] * np.linalg.norm(x[None, :] - W, axis=1)
        for k in range(self.K):
            d = d + alpha[k + 1] * np.linalg.norm(context[k][None, :] - C[:, k, :], axis=1)
        return ids, d

    def distance(self, j: int, x: np.ndarray) -> float:
        if j not in self.neurons:
            raise NetworkStateError(f"{self.name}: neuron {j} does not exist")
        x = self._check_x(x)
        neuron = self.neurons[j]
        d = self.alpha[0] * np.linalg.norm(x - neuron.w)
        for k in range(self.K):
            d += self.alpha[k + 1] * np.linalg.norm(self.global_context[k] - neuron.contexts[k])
        return float(d)

    def _bmu_with(self, x: np.ndarray, context: np.ndarray) -> Tuple[int, Optional[int], float]:
        if not self.neurons:
            raise NetworkStateError(f"{self.name}: network has no neurons")
        ids, d = self._distances(x, context)
        order = np.argsort(d, kind="stable")
        b = int(ids[order[0]])
        s = int(ids[order[1]]) if len(order) > 1 else None
        return b, s, float(d[order[0]])

    def find_bmu(self, x: np.ndarray) -> Tuple[int, Optional[int], float]:
        """Best and second-best matching units; ties go to the lower id."""
        return self._bmu_with(self._check_x(x), self.global_context)

    # --- context -------------------------------------------------------------

    def _merged_context(self, prev_w: Optional[np.ndarray], prev_c: Optional[np.ndarray]) -> np.ndarray:
        context = np.zeros((self.K, self.dim))
        if prev_w is None:
            return context
        beta = self.config.beta
        for k in range(self.K):
            lower = prev_w if k == 0 else prev_c[k - 1]
            context[k] = beta * prev_w + (1.0 - beta) * lower
        return context

    def update_global_context(self) -> None:
        if self.prev_bmu_weight is None:
            return
        self.global_context = self._merged_context(self.prev_bmu_weight, self.prev_bmu_contexts)

    def reset_context(self) -> None:
        """Start a new sequence: zero context and no previous winner."""
        self.global_context = np.zeros((self.K, self.dim))
        self.prev_bmu_weight = None
        self.prev_bmu_contexts = None

    def _remember_bmu(self, j: int) -> None:
        self.prev_bmu_weight = self.neurons[j].w.copy()
        self.prev_bmu_contexts = self.neurons[j].contexts.copy()

    # --- learning ------------------------------------------------------------

    def adapt(self, b: int, x: np.ndarray) -> None:
        x = self._check_x(x)
        for j, eps in [(b, self.config.eps_b)] + [(n, self.config.eps_n) for n in self.neighbors(b)]:
            neuron = self.neurons[j]
            rate = eps * neuron.h
            if rate == 0.0:
                continue
            neuron.w = neuron.w + rate * (x - neuron.w)
            neuron.contexts = neuron.contexts + rate * (self.global_context - neuron.contexts)

    def habituate(self, j: int, is_bmu: bool) -> None:
        neuron = self.neurons[j]
        tau = self.config.tau_b if is_bmu else self.config.tau_n
        h = neuron.h + tau * (self.config.kappa * (1.0 - neuron.h) - 1.0)
        neuron.h = float(min(1.0, max(0.0, h)))

    def maybe_insert(self, x: np.ndarray, b: int, s: Optional[int], d_b: float, label: Optional[int] = None) -> Optional[int]:
        """Insert a neuron halfway between ``x`` and the BMU when the BMU fits badly.

        Args:
            x: Current input
            b: BMU id
            s: Second-best id; no insertion without one
            d_b: Merged distance of the BMU
            label: Input label, given to the BMU and the new neuron

        Returns:
            The new neuron id, or None when activity or habituation is above
            its threshold, the cap is reached or the insertion gate refuses
        """
        cfg = self.config
        bmu = self.neurons[b]
        if s is None:
            return None
        if activity(d_b) >= cfg.insertion_threshold or bmu.h >= cfg.habituation_threshold:
            return None
        if len(self.neurons) >= cfg.max_neurons:
            return None
        if self.insertion_gate is not None and not self.insertion_gate(bmu, x, label):
            return None
        r = self.add_neuron(
            (bmu.w + x) / 2.0,
            (bmu.contexts + self.global_context) / 2.0,
        )
        self.connect(r, b)
        self.connect(r, s)
        self.disconnect(b, s)
        logger.debug("%s: inserted neuron %d between %d and %d", self.name, r, b, s)
        return r

    def _age_edges(self, b: int, s: int) -> None:
        for key in list(self.edges):
            if b in key:
                self.edges[key] += 1
        self.connect(b, s)
        stale = [key for key, age in self.edges.items() if age > self.config.max_edge_age]
        candidates = set()
        for key in stale:
            del self.edges[key]
            candidates.update(key)
        for j in sorted(candidates):
            if j == b or j not in self.neurons or len(self.neurons) <= 2:
                continue
            if not any(j in key for key in self.edges):
                logger.debug("%s: pruning isolated neuron %d", self.name, j)
                self.remove_neuron(j)

    def train_step(self, x: np.ndarray, label: Optional[int] = None, grow: bool = True) -> StepReport:
        """One online update for input ``x``.

        Args:
            x: Input vector of the network's dimension
            label: Class counted into the winner's histogram, if given
            grow: When False no neuron is inserted; the winner is adapted
                instead. The first two inputs still seed the network.

        Returns:
            The winner, runner-up, distance and inserted id of this step
        """
        x = self._check_x(x)
        self.update_global_context()
        if len(self.neurons) < 2:
            j = self.add_neuron(x, self.global_context, label)
            self._remember_bmu(j)
            return StepReport(bmu=j, second=None, distance=0.0, activity=1.0, inserted=j)

        b, s, d_b = self.find_bmu(x)
        inserted = self.maybe_insert(x, b, s, d_b, label) if grow else None
        if inserted is None:
            self.adapt(b, x)
            self.habituate(b, True)
            for n in self.neighbors(b):
                self.habituate(n, False)
            self._age_edges(b, s)
        if label is not None:
            self.neurons[b].add_label(int(label))
            if inserted is not None:
                self.neurons[inserted].add_label(int(label))
        self._remember_bmu(b)
        return StepReport(bmu=b, second=s, distance=d_b, activity=activity(d_b), inserted=inserted)

    def train_sequence(self, xs: Iterable[np.ndarray], labels: Optional[Sequence[int]] = None) -> List[StepReport]:
        return [self.train_step(x, None if labels is None else labels[i]) for i, x in enumerate(xs)]

    # --- read-only queries ---------------------------------------------------

    def _fresh_context(self) -> np.ndarray:
        return np.zeros((self.K, self.dim))

    def bmu_sequence(self, xs: Sequence[np.ndarray]) -> List[int]:
        """Winners for a sequence that starts from an empty context.

        Queries never read or write the training context, so a prediction
        does not depend on the last training input or on earlier queries.
        """
        context = self._fresh_context()
        out = []
        for x in xs:
            x = self._check_x(x)
            b, _, _ = self._bmu_with(x, context)
            out.append(b)
            context = self._merged_context(self.neurons[b].w, self.neurons[b].contexts)
        return out

    def _is_labeled(self) -> bool:
        return any(n.label_hist for n in self.neurons.values())

    def _nearest_labeled(self, x: np.ndarray, context: np.ndarray) -> Neuron:
        ids, d = self._distances(x, context)
        for i in np.argsort(d, kind="stable"):
            neuron = self.neurons[int(ids[i])]
            if neuron.label_hist:
                return neuron
        raise NetworkStateError(f"{self.name}: network has no labeled neurons")

    def classify(self, xs: Sequence[np.ndarray]) -> int:
        """Sum the winners' label histograms over a sequence started from an empty context.

        Ties go to the lowest class.
        """
        if not self.neurons:
            raise NetworkStateError(f"{self.name}: network has no neurons")
        if not self._is_labeled():
            raise NetworkStateError(f"{self.name}: network has no labeled neurons")
        votes: Dict[int, int] = {}
        context = self._fresh_context()
        for x in xs:
            x = self._check_x(x)
            b, _, _ = self._bmu_with(x, context)
            neuron = self.neurons[b]
            voter = neuron if neuron.label_hist else self._nearest_labeled(x, context)
            for label, count in voter.label_hist.items():
                votes[label] = votes.get(label, 0) + count
            context = self._merged_context(neuron.w, neuron.contexts)
        if not votes:
            raise ValidationError("classify needs a non-empty sequence")
        return min(votes.items(), key=lambda kv: (-kv[1], kv[0]))[0]

    def quantization_error(self, X: np.ndarray) -> float:
        """Mean BMU distance over ``X``, each row matched from an empty context."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[0] == 0:
            raise ValidationError("quantization_error needs a non-empty dataset")
        context = self._fresh_context()
        return float(np.mean([self._bmu_with(self._check_x(x), context)[2] for x in X]))

    # --- snapshots -----------------------------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "dim": self.dim,
            "config": self.config.model_dump(mode="json"),
            "neurons": [
                {
                    "id": n.id,
                    "w": n.w.tolist(),
                    "contexts": n.contexts.tolist(),
                    "h": n.h,
                    "label_hist": {str(k): v for k, v in sorted(n.label_hist.items())},
                }
                for n in self.neurons.values()
            ],
            "edges": [{"a": a, "b": b, "age": age} for (a, b), age in sorted(self.edges.items())],
            "global_context": self.global_context.tolist(),
            "prev_bmu_weight": None if self.prev_bmu_weight is None else self.prev_bmu_weight.tolist(),
            "prev_bmu_contexts": None if self.prev_bmu_contexts is None else self.prev_bmu_contexts.tolist(),
            "next_id": self._next_id,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GammaGWRNet":
        net = cls(data["dim"], GammaGWRConfig.model_validate(data["config"]), data.get("name", "gwr"))
        for item in data["neurons"]:
            net.neurons[item["id"]] = Neuron(
                id=item["id"],
                w=np.array(item["w"], dtype=np.float64),
                contexts=np.array(item["contexts"], dtype=np.float64).reshape(net.K, net.dim),
                h=float(item["h"]),
                label_hist={int(k): int(v) for k, v in item["label_hist"].items()},
            )
        net.edges = {(e["a"], e["b"]): int(e["age"]) for e in data["edges"]}
        net.global_context = np.array(data["global_context"], dtype=np.float64).reshape(net.K, net.dim)
        if data.get("prev_bmu_weight") is not None:
            net.prev_bmu_weight = np.array(data["prev_bmu_weight"], dtype=np.float64)
            net.prev_bmu_contexts = np.array(data["prev_bmu_contexts"], dtype=np.float64).reshape(net.K, net.dim)
        net._next_id = data.get("next_id", max(net.neurons, default=-1) + 1)
        return net
