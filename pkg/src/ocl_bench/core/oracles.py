"""Independent checks for the hand-written numerics.

Each suite recomputes a result the slow, obvious way and compares it with
the fast implementation. Used by the test suite and by ``ocl-bench selftest``.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List

import numpy as np

from .backbone import Activation, LayerSpec, Network, backward, forward, softmax_xent
from .gwr import GammaGWRConfig, GammaGWRNet
from .reg import SIState, si_accumulate, si_penalty, si_penalty_grad

logger = logging.getLogger(__name__)


@dataclass
class OracleResult:
    name: str
    passed: bool
    value: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "value": self.value, "detail": self.detail}


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    num = np.linalg.norm(np.ravel(analytic) - np.ravel(numeric))
    den = max(np.linalg.norm(np.ravel(analytic)) + np.linalg.norm(np.ravel(numeric)), 1e-12)
    return float(num / den)


def finite_difference(f: Callable[[], float], param: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``param`` (modified in place, then restored)."""
    grad = np.zeros_like(param)
    it = np.nditer(param, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = param[i]
        param[i] = old + step
        plus = f()
        param[i] = old - step
        minus = f()
        param[i] = old
        grad[i] = (plus - minus) / (2.0 * step)
    return grad


def random_network(rng: np.random.Generator, max_layers: int = 3, max_dim: int = 16) -> Network:
    """Random rectifier network with an identity output layer and nonzero biases."""
    depth = int(rng.integers(1, max_layers + 1))
    dims = [int(d) for d in rng.integers(2, max_dim + 1, size=depth + 1)]
    specs = [
        LayerSpec(
            in_dim=dims[l],
            out_dim=dims[l + 1],
            activation=Activation.IDENTITY if l == depth - 1 else Activation.RECTIFIER,
        )
        for l in range(depth)
    ]
    net = Network.build(specs, seed=int(rng.integers(0, 2**31)))
    net.biases = [rng.normal(0.0, 0.5, size=b.shape) for b in net.biases]
    return net


def kink_margin(net: Network, X: np.ndarray) -> float:
    """Smallest ``|z|`` over the rectifier pre-activations of ``X``.

    Central differences across ``z = 0`` measure the kink, not the gradient,
    so draws whose margin is below a few finite-difference steps are rejected.
    """
    margin = np.inf
    a = np.atleast_2d(X)
    for spec, w, b in zip(net.layers, net.weights, net.biases):
        z = a @ w.T + b
        if spec.activation is Activation.RECTIFIER:
            margin = min(margin, float(np.min(np.abs(z))))
            z = np.maximum(z, 0.0)
        a = z
    return float(margin)


def _smooth_draw(rng: np.random.Generator, n: int, margin: float, attempts: int = 200):
    for _ in range(attempts):
        net = random_network(rng)
        X = rng.normal(size=(n, net.in_dim))
        if kink_margin(net, X) >= margin:
            return net, X
    raise RuntimeError(f"no network with a kink margin of {margin} in {attempts} draws")


def gradient_check(
    seed: int = 0,
    trials: int = 20,
    tolerance: float = 1e-4,
    step: float = 1e-5,
    margin: float = 1e-2,
) -> OracleResult:
    """Backward pass against central differences on random small networks.

    The relative error is taken over all of a network's parameters at once,
    so a layer whose true gradient is exactly zero does not divide rounding
    noise by zero.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        net, X = _smooth_draw(rng, 3, margin)
        y = rng.integers(0, net.out_dim, size=3)

        def loss() -> float:
            return softmax_xent(forward(net, X).output, y)[0]

        record = forward(net, X)
        _, dlogits = softmax_xent(record.output, y)
        grads = backward(net, record, dlogits)
        analytic = np.concatenate([g.ravel() for g in grads.as_list()])
        numeric = np.concatenate(
            [finite_difference(loss, param, step).ravel() for param in net.parameters()]
        )
        worst = max(worst, relative_error(analytic, numeric))
    return OracleResult("gradient-check", worst < tolerance, worst, f"max relative error over {trials} networks")


def softmax_check(seed: int = 0, tolerance: float = 1e-6) -> OracleResult:
    rng = np.random.default_rng(seed)
    logits = rng.normal(size=4)
    y = int(rng.integers(0, 4))
    _, analytic = softmax_xent(logits, y)
    numeric = finite_difference(lambda: softmax_xent(logits, y)[0], logits)
    err = relative_error(analytic, numeric)
    return OracleResult("softmax-xent", err < tolerance, err, "4-class dlogits vs central differences")


def bmu_scan(seed: int = 0, trials: int = 1000, max_neurons: int = 50, max_dim: int = 32) -> OracleResult:
    """find_bmu against an exhaustive scan of ``distance`` on random networks."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(trials):
        dim = int(rng.integers(1, max_dim + 1))
        K = int(rng.integers(0, 4))
        net = GammaGWRNet(dim, GammaGWRConfig(K=K))
        for _ in range(int(rng.integers(2, max_neurons + 1))):
            net.add_neuron(rng.normal(size=dim), rng.normal(size=(K, dim)))
        net.global_context = rng.normal(size=(K, dim))
        x = rng.normal(size=dim)
        b, s, d_b = net.find_bmu(x)
        scan = sorted((net.distance(j, x), j) for j in net.neurons)
        if b != scan[0][1] or s != scan[1][1] or abs(scan[0][0] - d_b) > 1e-9:
            mismatches += 1
    return OracleResult("bmu-scan", mismatches == 0, float(mismatches), f"{trials} random networks")


def si_quadratic(lr: float = 0.01, steps: int = 100, target: float = 1.0) -> OracleResult:
    """Path integral of SGD on ``0.5 * (theta - a)^2`` against the loss decrease."""
    theta = np.zeros(1)
    si = SIState.for_parameters([theta])
    start = 0.5 * float((theta[0] - target) ** 2)
    for _ in range(steps):
        grad = theta - target
        delta = -lr * grad
        theta = theta + delta
        si_accumulate(si, [grad], [delta])
    decrease = start - 0.5 * float((theta[0] - target) ** 2)
    ratio = float(si.omega_path[0][0] / decrease)
    return OracleResult("si-quadratic", abs(ratio - 1.0) < 0.1, ratio, "path integral / loss decrease")


def si_penalty_check(seed: int = 0, tolerance: float = 1e-6) -> OracleResult:
    rng = np.random.default_rng(seed)
    shapes = [(3, 2), (3,)]
    theta = [rng.normal(size=s) for s in shapes]
    si = SIState.for_parameters([rng.normal(size=s) for s in shapes], xi=0.1, lam=0.7)
    si.importance = [rng.uniform(0.1, 2.0, size=s) for s in shapes]
    analytic = si_penalty_grad(si, theta)
    worst = 0.0
    for a, param in zip(analytic, theta):
        numeric = finite_difference(lambda: si_penalty(si, theta), param)
        worst = max(worst, relative_error(a, numeric))
    return OracleResult("si-penalty", worst < tolerance, worst, "penalty gradient vs central differences")


def run_all(seed: int = 0) -> List[OracleResult]:
    results = [
        gradient_check(seed),
        softmax_check(seed),
        bmu_scan(seed),
        si_quadratic(),
        si_penalty_check(seed),
    ]
    for r in results:
        logger.info("%s: %s (%.3g)", r.name, "ok" if r.passed else "FAILED", r.value)
    return results
