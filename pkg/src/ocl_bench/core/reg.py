"""Synaptic Intelligence, latent replay and the AR1 training loop."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..exceptions import NumericError, ValidationError
from .backbone import Gradients, Network, backward, forward, forward_from, sgd_step
from .heads import ConsolidationPolicy, HeadState, HeadVariant, consolidate, reinit_tw
from .stream import TrainingBatch

logger = logging.getLogger(__name__)


# --- Synaptic Intelligence --------------------------------------------------


@dataclass
class SIState:
    """Path integral and consolidated importance for a list of parameters.

    ``importance`` is the per-parameter Omega; it only ever grows.
    """

    omega_path: List[np.ndarray]
    importance: List[np.ndarray]
    theta_ref: List[np.ndarray]
    xi: float = 0.1
    lam: float = 1.0

    @classmethod
    def for_parameters(cls, params: Sequence[np.ndarray], xi: float = 0.1, lam: float = 1.0) -> "SIState":
        if xi <= 0:
            raise ValidationError(f"xi must be > 0, got {xi}")
        if lam < 0:
            raise ValidationError(f"lambda must be >= 0, got {lam}")
        return cls(
            omega_path=[np.zeros_like(p, dtype=np.float64) for p in params],
            importance=[np.zeros_like(p, dtype=np.float64) for p in params],
            theta_ref=[np.array(p, dtype=np.float64, copy=True) for p in params],
            xi=xi,
            lam=lam,
        )

    def _check(self, arrays: Sequence[np.ndarray], what: str) -> None:
        if len(arrays) != len(self.theta_ref):
            raise ValidationError(f"{what}: expected {len(self.theta_ref)} arrays, got {len(arrays)}")
        for ref, a in zip(self.theta_ref, arrays):
            if np.shape(a) != ref.shape:
                raise ValidationError(f"{what}: shape {np.shape(a)} != {ref.shape}")


def si_accumulate(si: SIState, grads: Sequence[np.ndarray], deltas: Sequence[np.ndarray]) -> None:
    """Add one step's path contribution ``-g * delta`` to every parameter's running integral.

    Args:
        si: State to update in place
        grads: Task-loss gradients of the step, one array per parameter
        deltas: Parameter changes the step applied, same shapes as ``grads``
    """
    si._check(grads, "si_accumulate grads")
    si._check(deltas, "si_accumulate deltas")
    for path, g, d in zip(si.omega_path, grads, deltas):
        path -= g * d


def si_consolidate(si: SIState, theta_now: Sequence[np.ndarray]) -> None:
    """Fold the path integral into importance and move the reference to ``theta_now``.

    Importance grows by ``max(omega, 0) / (drift ** 2 + xi)``; the path
    integral restarts from zero.
    """
    si._check(theta_now, "si_consolidate")
    for i, theta in enumerate(theta_now):
        drift = theta - si.theta_ref[i]
        si.importance[i] = si.importance[i] + np.maximum(si.omega_path[i], 0.0) / (drift ** 2 + si.xi)
        si.theta_ref[i] = np.array(theta, dtype=np.float64, copy=True)
        si.omega_path[i] = np.zeros_like(si.omega_path[i])


def si_penalty_grad(si: SIState, theta_now: Sequence[np.ndarray]) -> List[np.ndarray]:
    """Gradient of ``si_penalty`` for each parameter."""
    si._check(theta_now, "si_penalty_grad")
    return [2.0 * si.lam * om * (theta - ref) for om, theta, ref in zip(si.importance, theta_now, si.theta_ref)]


def si_penalty(si: SIState, theta_now: Sequence[np.ndarray]) -> float:
    """Quadratic penalty ``lam * sum(importance * (theta - ref) ** 2)``.

    Args:
        si: Consolidated state
        theta_now: Current parameters

    Returns:
        The penalty value, zero before the first consolidation
    """
    si._check(theta_now, "si_penalty")
    return float(
        si.lam * sum(np.sum(om * (theta - ref) ** 2) for om, theta, ref in zip(si.importance, theta_now, si.theta_ref))
    )


# --- Latent replay ----------------------------------------------------------


@dataclass
class ReplayEntry:
    latent: np.ndarray
    label: int
    source: Optional[np.ndarray] = None


class LatentReplayBuffer:
    """Class-balanced reservoir of activations taken at ``replay_layer``.

    Every known class gets ``capacity // n_known_classes`` slots; when a new
    class shows up, classes above the new quota are randomly thinned.
    Replay layer 0 stores raw inputs (native rehearsal).
    """

    def __init__(
        self,
        capacity: int,
        replay_layer: int,
        dim: int,
        seed: int = 0,
        track_sources: bool = False,
    ):
        if capacity < 0:
            raise ValidationError(f"capacity must be >= 0, got {capacity}")
        if replay_layer < 0:
            raise ValidationError(f"replay_layer must be >= 0, got {replay_layer}")
        self.capacity = capacity
        self.replay_layer = replay_layer
        self.dim = dim
        self.track_sources = track_sources
        self.rng = np.random.default_rng(seed)
        self._slots: Dict[int, List[ReplayEntry]] = {}
        self._seen: Dict[int, int] = {}

    def __len__(self) -> int:
        return sum(len(v) for v in self._slots.values())

    @property
    def quota(self) -> int:
        return self.capacity // max(1, len(self._seen))

    @property
    def entries(self) -> List[ReplayEntry]:
        return [e for c in sorted(self._slots) for e in self._slots[c]]

    def class_counts(self) -> Dict[int, int]:
        return {c: len(v) for c, v in sorted(self._slots.items())}

    def _admit_class(self, label: int) -> None:
        self._seen[label] = 0
        self._slots[label] = []
        quota = self.quota
        for c, slots in self._slots.items():
            if len(slots) > quota:
                keep = np.sort(self.rng.choice(len(slots), size=quota, replace=False))
                self._slots[c] = [slots[i] for i in keep]

    def update(
        self,
        latents: np.ndarray,
        labels: Sequence[int],
        sources: Optional[np.ndarray] = None,
    ) -> None:
        """Offer each row to its class's reservoir.

        Args:
            latents: Activations at the replay layer, one row per example
            labels: Class of each row
            sources: Raw inputs kept alongside when ``track_sources`` is set

        Raises:
            ValidationError: If widths or lengths disagree
        """
        latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
        if len(labels) == 0:
            return
        if latents.shape[1] != self.dim:
            raise ValidationError(f"Latent dim {latents.shape[1]} != buffer dim {self.dim}")
        if len(labels) != latents.shape[0]:
            raise ValidationError("latents and labels differ in length")

        for i, label in enumerate(labels):
            label = int(label)
            if label not in self._seen:
                self._admit_class(label)
            self._seen[label] += 1
            quota = self.quota
            if quota == 0:
                continue
            source = None
            if self.track_sources and sources is not None:
                source = np.array(sources[i], dtype=np.float64, copy=True)
            entry = ReplayEntry(latents[i].copy(), label, source)
            slots = self._slots[label]
            if len(slots) < quota:
                slots.append(entry)
            else:
                j = int(self.rng.integers(0, self._seen[label]))
                if j < quota:
                    slots[j] = entry
        logger.debug("Replay buffer holds %d entries (%s)", len(self), self.class_counts())

    def sample(self, n: int) -> Tuple[np.ndarray, np.ndarray]:
        """Draw ``min(n, len(self))`` entries without replacement."""
        entries = self.entries
        n = min(n, len(entries))
        if n <= 0:
            return np.zeros((0, self.dim)), np.zeros(0, dtype=np.int64)
        idx = self.rng.choice(len(entries), size=n, replace=False)
        latents = np.stack([entries[i].latent for i in idx])
        labels = np.array([entries[i].label for i in idx], dtype=np.int64)
        return latents, labels

    def aging(self, net: Network) -> Optional[float]:
        """Mean distance between stored latents and latents recomputed now."""
        tracked = [e for e in self.entries if e.source is not None]
        if not tracked:
            return None
        sources = np.stack([e.source for e in tracked])
        fresh = forward(net, sources, upto=self.replay_layer).output
        stored = np.stack([e.latent for e in tracked])
        return float(np.mean(np.linalg.norm(fresh - stored, axis=1)))


# --- AR1 --------------------------------------------------------------------


class AR1Config(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    epochs: int = Field(2, ge=1)
    lr: float = Field(0.1, ge=0.0)
    batch_size: int = Field(32, ge=1)
    replay_layer: int = Field(1, ge=0)
    rm_size: int = Field(200, ge=0)
    replay_fraction: float = Field(0.5, ge=0.0, lt=1.0)
    xi: float = Field(0.1, gt=0.0)
    lam: float = Field(1.0, ge=0.0, alias="lambda")
    policy: ConsolidationPolicy = Field(default_factory=ConsolidationPolicy.cwr_plus)

    def replay_count(self, fresh: int) -> int:
        """Replay patterns to mix with ``fresh`` new ones so they make up ``replay_fraction``."""
        if self.replay_fraction == 0.0:
            return 0
        return int(round(fresh * self.replay_fraction / (1.0 - self.replay_fraction)))


@dataclass
class BatchReport:
    batch_index: int
    losses: List[float] = field(default_factory=list)
    replayed: int = 0
    stored: int = 0
    penalty: float = 0.0
    aging: Optional[float] = None
    consolidated: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "batch_index": self.batch_index,
            "losses": self.losses,
            "replayed": self.replayed,
            "stored": self.stored,
            "penalty": self.penalty,
            "aging": self.aging,
            "consolidated": self.consolidated,
        }


def _lower_trainable(net: Network, replay_layer: int) -> bool:
    return any(spec.lr_multiplier > 0.0 for spec in net.layers[:replay_layer])


def train_shared_batch(
    net: Network,
    head: HeadState,
    si: Optional[SIState],
    buffer: Optional[LatentReplayBuffer],
    batch: TrainingBatch,
    config: AR1Config,
    rng: Optional[np.random.Generator] = None,
) -> BatchReport:
    """Joint head/extractor training on one batch, for any consolidation policy.

    Args:
        net: Shared layers; each layer moves at ``lr * lr_multiplier``
        head: Output head; tw is re-initialised here and consolidated at the end
        si: Synaptic Intelligence state, or None to train without the penalty
        buffer: Latent replay memory at ``config.replay_layer``, or None
        batch: The training batch
        config: Epochs, learning rate, replay settings and head policy
        rng: Shuffles the mini-batches; None keeps the batch order

    Returns:
        Per-epoch losses, replay and storage counts, and the consolidated classes.
        Replayed classes are consolidated along with the batch classes.
    """
    X, y = batch.arrays()
    head.check_classes(y)
    r = config.replay_layer
    if r > net.depth:
        raise ValidationError(f"replay_layer={r} above network depth {net.depth}")
    if buffer is not None and buffer.replay_layer != r:
        raise ValidationError(
            f"Buffer replay layer {buffer.replay_layer} != configured replay layer {r}"
        )

    reinit_tw(head, config.policy)
    report = BatchReport(batch_index=batch.index)
    replayed_classes: Set[int] = set()
    n = len(y)
    train_lower = r > 0 and _lower_trainable(net, r)

    try:
        for _ in range(config.epochs):
            order = rng.permutation(n) if rng is not None else np.arange(n)
            epoch_losses = []
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                lower = forward(net, X[idx], upto=r)
                latent, labels = lower.output, y[idx]
                if buffer is not None and len(buffer) > 0:
                    replay_x, replay_y = buffer.sample(config.replay_count(len(idx)))
                    latent = np.concatenate([latent, replay_x])
                    labels = np.concatenate([labels, replay_y])
                    report.replayed += len(replay_y)
                    replayed_classes.update(int(c) for c in replay_y)

                if r < net.depth:
                    upper = forward_from(net, r, latent)
                    loss, dfeatures = head.tw_step(upper.output, labels, config.lr)
                    grads = backward(net, upper, dfeatures)
                    dlatent = grads.d_input
                else:
                    loss, dlatent = head.tw_step(latent, labels, config.lr)
                    grads = net.zero_gradients()
                if train_lower:
                    grads = grads + backward(net, lower, dlatent[: len(idx)])

                task = grads.as_list()
                total = task
                if si is not None and si.lam > 0.0:
                    penalty = si_penalty_grad(si, net.parameters())
                    total = [g + p for g, p in zip(task, penalty)]
                deltas = sgd_step(net, Gradients.from_list(total), config.lr)
                if si is not None:
                    si_accumulate(si, task, deltas.as_list())
                epoch_losses.append(loss)
            report.losses.append(float(np.mean(epoch_losses)))
    except NumericError as exc:
        raise NumericError(f"batch {batch.index}: {exc}", batch_index=batch.index) from exc

    report.consolidated = sorted(set(batch.class_set) | replayed_classes)
    consolidate(head, report.consolidated, config.policy)
    if si is not None:
        si_consolidate(si, net.copy_parameters())
        report.penalty = si_penalty(si, net.parameters())
    if buffer is not None:
        latents = forward(net, X, upto=r).output
        buffer.update(latents, y, sources=X)
        report.stored = len(buffer)
        report.aging = buffer.aging(net)
    logger.debug(
        "Batch %d: losses=%s replayed=%d stored=%d",
        batch.index,
        report.losses,
        report.replayed,
        report.stored,
    )
    return report


def ar1_train_batch(
    net: Network,
    head: HeadState,
    si: Optional[SIState],
    buffer: Optional[LatentReplayBuffer],
    batch: TrainingBatch,
    config: AR1Config,
    rng: Optional[np.random.Generator] = None,
) -> BatchReport:
    """AR1 step: CWR+ or CWR* head with SI on the shared layers and optional latent replay."""
    if config.policy.variant not in (HeadVariant.CWR_PLUS, HeadVariant.CWR_STAR):
        raise ValidationError(
            f"AR1 needs a CWR_PLUS or CWR_STAR head, got {config.policy.variant.value}"
        )
    return train_shared_batch(net, head, si, buffer, batch, config, rng)
