"""CWR family output heads: consolidated and temporary weights."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from pydantic import BaseModel, Field, model_validator

from ..exceptions import ValidationError
from .backbone import softmax_xent

logger = logging.getLogger(__name__)


class HeadVariant(str, Enum):
    CWR = "CWR"
    CWR_PLUS = "CWR_PLUS"
    CWR_STAR = "CWR_STAR"


class HeadInit(str, Enum):
    GAUSSIAN_001 = "gaussian_001"
    ZERO = "zero"


class ConsolidationPolicy(BaseModel):
    """How tw is initialised and copied into cw at the end of a batch."""

    variant: HeadVariant = HeadVariant.CWR_PLUS
    batch_weight: float = Field(1.0, gt=0.0)
    init: HeadInit = HeadInit.ZERO

    @model_validator(mode="before")
    @classmethod
    def _force_plus_star_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict):
            variant = data.get("variant", HeadVariant.CWR_PLUS)
            if HeadVariant(variant) is not HeadVariant.CWR:
                data = {**data, "init": HeadInit.ZERO, "batch_weight": 1.0}
        return data

    @classmethod
    def cwr(cls, batch_weight: float = 1.0) -> "ConsolidationPolicy":
        return cls(variant=HeadVariant.CWR, batch_weight=batch_weight, init=HeadInit.GAUSSIAN_001)

    @classmethod
    def cwr_plus(cls) -> "ConsolidationPolicy":
        return cls(variant=HeadVariant.CWR_PLUS)

    @classmethod
    def cwr_star(cls) -> "ConsolidationPolicy":
        return cls(variant=HeadVariant.CWR_STAR)


@dataclass
class HeadState:
    cw: np.ndarray
    tw: np.ndarray
    past_counts: np.ndarray
    known_classes: Set[int] = field(default_factory=set)
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    @classmethod
    def allocate(cls, n_classes: int, feature_dim: int, seed: int = 0) -> "HeadState":
        if n_classes < 1 or feature_dim < 1:
            raise ValidationError("Head needs at least one class and one feature")
        return cls(
            cw=np.zeros((n_classes, feature_dim)),
            tw=np.zeros((n_classes, feature_dim)),
            past_counts=np.zeros(n_classes, dtype=np.int64),
            rng=np.random.default_rng(seed),
        )

    @property
    def n_classes(self) -> int:
        return self.cw.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.cw.shape[1]

    def check_classes(self, classes: Iterable[int]) -> None:
        for c in classes:
            if not 0 <= int(c) < self.n_classes:
                raise ValidationError(f"Class {c} outside the head's {self.n_classes} classes")

    def tw_step(self, latents: np.ndarray, labels: np.ndarray, lr: float) -> Tuple[float, np.ndarray]:
        """One softmax-regression step on tw.

        Returns the mean loss and the gradient w.r.t. ``latents``, computed
        with the weights from before the update.
        """
        logits = latents @ self.tw.T
        loss, dlogits = softmax_xent(logits, labels)
        dlatent = dlogits @ self.tw
        if lr != 0.0:
            self.tw -= lr * (dlogits.T @ latents)
        return loss, dlatent

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cw": self.cw.tolist(),
            "tw": self.tw.tolist(),
            "past_counts": self.past_counts.tolist(),
            "known_classes": sorted(self.known_classes),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "HeadState":
        return cls(
            cw=np.array(data["cw"], dtype=np.float64),
            tw=np.array(data["tw"], dtype=np.float64),
            past_counts=np.array(data["past_counts"], dtype=np.int64),
            known_classes=set(data["known_classes"]),
        )


def reinit_tw(head: HeadState, policy: ConsolidationPolicy) -> None:
    """Reset tw before a batch: zeros for CWR+ and CWR*, small gaussian noise for CWR."""
    if policy.init is HeadInit.ZERO:
        head.tw = np.zeros_like(head.cw)
    else:
        head.tw = head.rng.normal(0.0, 0.01, size=head.cw.shape)


def train_head_batch(
    head: HeadState,
    features: Sequence[Tuple[np.ndarray, int]],
    epochs: int,
    lr: float,
    batch_size: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> List[float]:
    """Fit tw on fixed latents. cw is left alone.

    Args:
        head: Head whose tw is trained
        features: ``(latent, class)`` pairs
        epochs: Passes over ``features``
        lr: Step size
        batch_size: Mini-batch size; the whole set when omitted
        rng: Shuffles each epoch when given, otherwise file order is kept

    Returns:
        The mean loss of every epoch
    """
    if not features:
        raise ValidationError("train_head_batch needs at least one feature")
    latents = np.stack([np.asarray(f, dtype=np.float64) for f, _ in features])
    labels = np.array([int(c) for _, c in features], dtype=np.int64)
    head.check_classes(labels)
    if latents.shape[1] != head.feature_dim:
        raise ValidationError(f"Latent dim {latents.shape[1]} != head dim {head.feature_dim}")

    n = len(labels)
    size = n if batch_size is None else max(1, batch_size)
    curve: List[float] = []
    for _ in range(epochs):
        order = rng.permutation(n) if rng is not None else np.arange(n)
        losses = []
        for start in range(0, n, size):
            idx = order[start:start + size]
            loss, _ = head.tw_step(latents[idx], labels[idx], lr)
            losses.append(loss)
        curve.append(float(np.mean(losses)))
    return curve


def consolidate(head: HeadState, batch_classes: Iterable[int], policy: ConsolidationPolicy) -> None:
    """Copy the batch classes' tw rows into cw.

    Args:
        head: Head to update in place
        batch_classes: Classes trained in this batch; other rows never change
        policy: CWR copies ``batch_weight * tw``; CWR+ subtracts the mean of
            the batch rows first; CWR* also averages with the
            ``past_counts`` previous values of each row

    Raises:
        ValidationError: If a class is outside the head
    """
    classes = sorted({int(c) for c in batch_classes})
    head.check_classes(classes)
    if not classes:
        return

    if policy.variant is HeadVariant.CWR:
        for c in classes:
            head.cw[c] = policy.batch_weight * head.tw[c]
    else:
        shifted = head.tw[classes] - np.mean(head.tw[classes])
        for row, c in zip(shifted, classes):
            if policy.variant is HeadVariant.CWR_STAR:
                n = head.past_counts[c]
                head.cw[c] = (head.cw[c] * n + row) / (n + 1)
            else:
                head.cw[c] = row

    for c in classes:
        head.past_counts[c] += 1
        head.known_classes.add(c)
    logger.debug("Consolidated %s classes with %s", classes, policy.variant.value)


def head_scores(head: HeadState, latents: np.ndarray) -> np.ndarray:
    return np.asarray(latents, dtype=np.float64) @ head.cw.T


def predict_batch(head: HeadState, latents: np.ndarray) -> np.ndarray:
    scores = head_scores(head, np.atleast_2d(latents))
    if head.known_classes:
        # Never-consolidated classes are excluded once anything is known.
        mask = np.full(head.n_classes, -np.inf)
        mask[sorted(head.known_classes)] = 0.0
        scores = scores + mask
    return np.argmax(scores, axis=1)


def predict(head: HeadState, latent: np.ndarray) -> int:
    """Argmax of ``cw @ latent``; ties go to the lowest class id."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape[-1] != head.feature_dim:
        raise ValidationError(f"Latent dim {latent.shape[-1]} != head dim {head.feature_dim}")
    return int(predict_batch(head, latent)[0])
