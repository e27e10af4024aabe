"""Small feedforward network with hand-derived gradients.

Record positions are numbered from the input: position 0 holds the input,
position ``l + 1`` holds the output of layer ``l``. ``forward_from(k, a)``
injects ``a`` at position ``k`` and runs layers ``k .. depth-1``; this is how
latent replay concatenates stored activations at the replay layer.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from ..exceptions import NumericError, ValidationError

logger = logging.getLogger(__name__)


class Activation(str, Enum):
    RECTIFIER = "rectifier"
    IDENTITY = "identity"


class LayerSpec(BaseModel):
    """Shape and plasticity of one dense layer."""

    in_dim: int = Field(..., ge=1)
    out_dim: int = Field(..., ge=1)
    activation: Activation = Activation.RECTIFIER
    lr_multiplier: float = Field(1.0, ge=0.0)


@dataclass
class ActivationRecord:
    """Activations of one forward pass, starting at record position ``offset``."""

    activations: List[np.ndarray]
    offset: int = 0

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]

    def at(self, position: int) -> np.ndarray:
        return self.activations[position - self.offset]

    @property
    def n_layers(self) -> int:
        return len(self.activations) - 1


@dataclass
class Gradients:
    """Per-layer parameter gradients plus the gradient at the record's input."""

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    d_input: Optional[np.ndarray] = None

    def as_list(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @classmethod
    def from_list(cls, arrays: Sequence[np.ndarray]) -> "Gradients":
        return cls(weights=list(arrays[0::2]), biases=list(arrays[1::2]))

    def __add__(self, other: "Gradients") -> "Gradients":
        return Gradients(
            weights=[a + b for a, b in zip(self.weights, other.weights)],
            biases=[a + b for a, b in zip(self.biases, other.biases)],
        )


@dataclass
class Network:
    """Dense layers with weights stored as ``(out_dim, in_dim)`` matrices."""

    layers: List[LayerSpec]
    weights: List[np.ndarray] = field(default_factory=list)
    biases: List[np.ndarray] = field(default_factory=list)
    rng_seed: int = 0

    @classmethod
    def build(cls, specs: Sequence[LayerSpec], seed: int = 0) -> "Network":
        specs = [LayerSpec.model_validate(s) for s in specs]
        if not specs:
            raise ValidationError("A network needs at least one layer")
        for lower, upper in zip(specs, specs[1:]):
            if lower.out_dim != upper.in_dim:
                raise ValidationError(
                    f"Layer dims incompatible: {lower.out_dim} -> {upper.in_dim}"
                )
        rng = np.random.default_rng(seed)
        weights = [
            rng.normal(0.0, np.sqrt(2.0 / s.in_dim), size=(s.out_dim, s.in_dim))
            for s in specs
        ]
        biases = [np.zeros(s.out_dim) for s in specs]
        return cls(layers=list(specs), weights=weights, biases=biases, rng_seed=seed)

    @classmethod
    def mlp(
        cls,
        dims: Sequence[int],
        seed: int = 0,
        output_activation: Activation = Activation.RECTIFIER,
    ) -> "Network":
        """Stack of rectifier layers ``dims[0] -> dims[1] -> ... -> dims[-1]``."""
        specs = [
            LayerSpec(in_dim=a, out_dim=b, activation=Activation.RECTIFIER)
            for a, b in zip(dims[:-2], dims[1:-1])
        ]
        specs.append(LayerSpec(in_dim=dims[-2], out_dim=dims[-1], activation=output_activation))
        return cls.build(specs, seed)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    def dim_at(self, position: int) -> int:
        """Width of the activation stored at a record position."""
        if position == 0:
            return self.in_dim
        return self.layers[position - 1].out_dim

    def parameters(self) -> List[np.ndarray]:
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy_parameters(self) -> List[np.ndarray]:
        return [p.copy() for p in self.parameters()]

    def set_lr_multipliers(self, multipliers: Sequence[float]) -> None:
        if len(multipliers) != self.depth:
            raise ValidationError(
                f"Expected {self.depth} lr multipliers, got {len(multipliers)}"
            )
        self.layers = [
            spec.model_copy(update={"lr_multiplier": float(m)})
            for spec, m in zip(self.layers, multipliers)
        ]

    def zero_gradients(self) -> Gradients:
        return Gradients(
            weights=[np.zeros_like(w) for w in self.weights],
            biases=[np.zeros_like(b) for b in self.biases],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "rng_seed": self.rng_seed,
            "layers": [
                {
                    **spec.model_dump(mode="json"),
                    "weights": w.tolist(),
                    "bias": b.tolist(),
                }
                for spec, w, b in zip(self.layers, self.weights, self.biases)
            ],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Network":
        specs, weights, biases = [], [], []
        for layer in data["layers"]:
            specs.append(
                LayerSpec(
                    in_dim=layer["in_dim"],
                    out_dim=layer["out_dim"],
                    activation=layer["activation"],
                    lr_multiplier=layer["lr_multiplier"],
                )
            )
            weights.append(np.array(layer["weights"], dtype=np.float64))
            biases.append(np.array(layer["bias"], dtype=np.float64))
        return cls(layers=specs, weights=weights, biases=biases, rng_seed=data.get("rng_seed", 0))


def _dense(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    # Row-wise reduction: each example's activation is independent of the
    # other rows in the mini-batch, bit for bit.
    return (x[:, None, :] * w[None, :, :]).sum(axis=-1) + b


def _activate(z: np.ndarray, activation: Activation) -> np.ndarray:
    if activation is Activation.RECTIFIER:
        return np.maximum(z, 0.0)
    return z


def _as_batch(x: np.ndarray) -> Tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return x[None, :], True
    if x.ndim != 2:
        raise ValidationError(f"Expected a vector or a matrix, got shape {x.shape}")
    return x, False


def _run_layers(net: Network, start: int, stop: int, a: np.ndarray, offset: int) -> ActivationRecord:
    batch, single = _as_batch(a)
    activations = [batch]
    for l in range(start, stop):
        spec = net.layers[l]
        z = _dense(activations[-1], net.weights[l], net.biases[l])
        activations.append(_activate(z, spec.activation))
    if single:
        activations = [v[0] for v in activations]
    return ActivationRecord(activations=activations, offset=offset)


def forward(net: Network, x: np.ndarray, upto: Optional[int] = None) -> ActivationRecord:
    """Forward pass from the input.

    Args:
        net: Network to run
        x: One input row or a batch of rows
        upto: Record position to stop at; the full depth when omitted

    Returns:
        Activations at every position from 0 to ``upto``

    Raises:
        ValidationError: If ``x`` has the wrong width or ``upto`` is out of range
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != net.in_dim:
        raise ValidationError(f"Input dim {x.shape[-1]} != network in_dim {net.in_dim}")
    stop = net.depth if upto is None else upto
    if not 0 <= stop <= net.depth:
        raise ValidationError(f"upto={upto} outside [0, {net.depth}]")
    return _run_layers(net, 0, stop, x, offset=0)


def forward_from(net: Network, layer_index: int, latent: np.ndarray) -> ActivationRecord:
    """Inject ``latent`` at record position ``layer_index`` and run the layers above.

    Args:
        net: Network to run
        layer_index: Position the latent belongs to, below the output
        latent: Activations with width ``net.dim_at(layer_index)``

    Returns:
        A record whose ``offset`` is ``layer_index``
    """
    if not 0 <= layer_index < net.depth:
        raise ValidationError(f"layer_index={layer_index} outside [0, {net.depth - 1}]")
    latent = np.asarray(latent, dtype=np.float64)
    expected = net.dim_at(layer_index)
    if latent.shape[-1] != expected:
        raise ValidationError(
            f"Latent dim {latent.shape[-1]} != {expected} at position {layer_index}"
        )
    return _run_layers(net, layer_index, net.depth, latent, offset=layer_index)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / np.sum(exps, axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, y) -> Tuple[float, np.ndarray]:
    """Cross-entropy of softmax(logits) against class ``y``.

    For a matrix of logits, ``y`` is a label vector; the loss is the batch
    mean and the returned rows of ``dlogits`` are already divided by the
    batch size.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim == 1:
        if not 0 <= int(y) < logits.shape[0]:
            raise ValidationError(f"Label {y} outside {logits.shape[0]} logits")
        shifted = logits - np.max(logits)
        log_norm = np.log(np.sum(np.exp(shifted)))
        loss = float(log_norm - shifted[int(y)])
        dlogits = softmax(logits)
        dlogits[int(y)] -= 1.0
        return loss, dlogits

    y = np.asarray(y, dtype=np.int64)
    n, k = logits.shape
    if np.any(y < 0) or np.any(y >= k):
        raise ValidationError(f"Labels outside {k} logits")
    shifted = logits - np.max(logits, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - shifted[rows, y]))
    dlogits = softmax(logits)
    dlogits[rows, y] -= 1.0
    return loss, dlogits / n


def backward(
    net: Network,
    record: ActivationRecord,
    dout: np.ndarray,
    stop_below: Optional[int] = None,
) -> Gradients:
    """Backpropagate ``dout`` (gradient w.r.t. ``record.output``).

    Rows of ``dout`` are summed, so callers pass per-row gradients already
    scaled for a mean loss.

    Args:
        net: Network the record came from
        record: Activations from ``forward`` or ``forward_from``
        dout: Gradient of the loss w.r.t. the record's output
        stop_below: Layers below this index get zero gradients; at or past
            the depth only the output layer keeps its gradient

    Returns:
        Gradients for every layer, plus ``d_input`` at the record's offset
    """
    start = record.offset
    stop = start + record.n_layers
    if stop > net.depth or record.n_layers < 1:
        raise ValidationError("Activation record does not match the network")
    for pos in range(start, stop):
        if record.at(pos + 1).shape[-1] != net.layers[pos].out_dim:
            raise ValidationError(f"Activation record mismatch at layer {pos}")
    lowest = start if stop_below is None else max(start, min(stop_below, net.depth - 1))

    grads = net.zero_gradients()
    delta, single = _as_batch(dout)
    for l in range(stop - 1, lowest - 1, -1):
        a_out, _ = _as_batch(record.at(l + 1))
        a_in, _ = _as_batch(record.at(l))
        if net.layers[l].activation is Activation.RECTIFIER:
            delta = delta * (a_out > 0.0)
        grads.weights[l] = delta.T @ a_in
        grads.biases[l] = delta.sum(axis=0)
        delta = delta @ net.weights[l]
    grads.d_input = delta[0] if single else delta
    return grads


def sgd_step(net: Network, grads: Gradients, lr: float) -> Gradients:
    """Apply ``p <- p - lr * lr_multiplier * grad`` and return the parameter deltas.

    Raises:
        ValidationError: If ``lr`` is negative
        NumericError: If any gradient is non-finite; nothing is updated
    """
    if lr < 0:
        raise ValidationError(f"lr must be >= 0, got {lr}")
    for l, (gw, gb) in enumerate(zip(grads.weights, grads.biases)):
        if not (np.all(np.isfinite(gw)) and np.all(np.isfinite(gb))):
            raise NumericError(f"Non-finite gradient at layer {l}")

    deltas = net.zero_gradients()
    for l, spec in enumerate(net.layers):
        step = lr * spec.lr_multiplier
        if step == 0.0:
            continue
        deltas.weights[l] = -step * grads.weights[l]
        deltas.biases[l] = -step * grads.biases[l]
        net.weights[l] += deltas.weights[l]
        net.biases[l] += deltas.biases[l]
    return deltas
