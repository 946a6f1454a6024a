"""Feed-forward consumption predictor trained under a composite loss.

The training loss adds two data-derived penalties to the squared
prediction error: a discrete energy-conservation residual over per-node
energy series, and the squared deviation of zone temperatures from their
setpoints. Both penalty terms are functions of the batch, not of the
network parameters, so the parameter gradient flows through the data
term only. Sums are un-normalized by default; set normalize_losses for
mean-based variants.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError, TrainingDivergedError

ACTIVATIONS = ("tanh", "relu")


@dataclass
class SurrogateNet:
    layer_sizes: list[int]
    activation: str
    weights: list[np.ndarray]  # weights[l] has shape (n_in, n_out)
    biases: list[np.ndarray]   # biases[l] has shape (n_out,)

    def copy(self) -> "SurrogateNet":
        return SurrogateNet(
            layer_sizes=list(self.layer_sizes),
            activation=self.activation,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass(frozen=True)
class LossWeights:
    lambda_physics: float = 0.0
    mu_comfort: float = 0.0
    normalize_losses: bool = False

    def validate(self) -> None:
        if self.lambda_physics < 0 or self.mu_comfort < 0:
            raise ConfigError("loss weights must be >= 0")


@dataclass
class TrainingBatch:
    """Features/targets plus the physics and comfort side channels.

    node_energy[j] is the kWh stored at physics node j over time;
    node_power_in[j] and node_power_loss[j] are the matching kW series
    (one entry shorter than the energy series, or equal length with the
    last entry unused).
    """

    features: np.ndarray
    targets: np.ndarray
    node_energy: list[np.ndarray] = field(default_factory=list)
    node_power_in: list[np.ndarray] = field(default_factory=list)
    node_power_loss: list[np.ndarray] = field(default_factory=list)
    dt_hours: float = 1.0
    desired_temps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    actual_temps: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def validate(self) -> None:
        if self.features.ndim != 2:
            raise InputError("features must be a 2-d matrix")
        if len(self.targets) != len(self.features):
            raise InputError("features and targets disagree on sample count")
        if len(self.features) == 0:
            raise InputError("batch is empty")
        if self.dt_hours <= 0:
            raise InputError("dt_hours must be > 0")
        if not (len(self.node_energy) == len(self.node_power_in) == len(self.node_power_loss)):
            raise InputError("physics node series counts disagree")
        if len(self.desired_temps) != len(self.actual_temps):
            raise InputError("comfort sample counts disagree")


def init_net(layer_sizes: Sequence[int], activation: str = "tanh", seed: int = 0) -> SurrogateNet:
    """Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)]."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise ConfigError("need at least an input and an output layer")
    if any(s < 1 for s in sizes):
        raise ConfigError("layer sizes must be positive")
    if sizes[-1] != 1:
        raise ConfigError("output layer must have width 1")
    if activation not in ACTIVATIONS:
        raise ConfigError(f"activation must be one of {ACTIVATIONS}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(n_in)
        weights.append(rng.uniform(-bound, bound, size=(n_in, n_out)))
        biases.append(rng.uniform(-bound, bound, size=n_out))
    return SurrogateNet(sizes, activation, weights, biases)


def _act(net: SurrogateNet, z: np.ndarray) -> np.ndarray:
    return np.tanh(z) if net.activation == "tanh" else np.maximum(z, 0.0)


def _act_deriv(net: SurrogateNet, z: np.ndarray) -> np.ndarray:
    if net.activation == "tanh":
        return 1.0 - np.tanh(z) ** 2
    return (z > 0.0).astype(float)


def _forward_trace(net: SurrogateNet, features: np.ndarray):
    x = np.asarray(features, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.layer_sizes[0]:
        raise InputError(
            f"feature width {x.shape[1]} does not match input layer {net.layer_sizes[0]}"
        )
    pre, acts = [], [x]
    for idx, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        pre.append(z)
        last = idx == len(net.weights) - 1
        acts.append(z if last else _act(net, z))  # identity output layer
    return pre, acts


def forward(net: SurrogateNet, features: np.ndarray) -> np.ndarray:
    """One prediction per feature row."""
    _, acts = _forward_trace(net, features)
    return acts[-1][:, 0]


def loss_data(predicted: np.ndarray, actual: np.ndarray, normalize: bool = False) -> float:
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise InputError("predicted and actual lengths differ")
    if predicted.size == 0:
        raise InputError("loss_data needs at least one sample")
    total = float(np.sum((predicted - actual) ** 2))
    return total / predicted.size if normalize else total


def loss_physics(
    node_energy: Sequence[np.ndarray],
    node_power_in: Sequence[np.ndarray],
    node_power_loss: Sequence[np.ndarray],
    dt_hours: float,
    normalize: bool = False,
) -> float:
    """Squared energy-conservation residual, forward-differenced:
    ((E[t+1]-E[t])/dt - P_in[t] + P_loss[t])^2 summed over nodes and t."""
    if dt_hours <= 0:
        raise InputError("dt_hours must be > 0")
    total = 0.0
    count = 0
    for energy, p_in, p_loss in zip(node_energy, node_power_in, node_power_loss):
        energy = np.asarray(energy, dtype=float)
        if energy.size < 2:
            raise InputError("each physics node needs at least 2 energy samples")
        steps = energy.size - 1
        p_in = np.asarray(p_in, dtype=float)
        p_loss = np.asarray(p_loss, dtype=float)
        if p_in.size < steps or p_loss.size < steps:
            raise InputError("power series shorter than the energy increments")
        residual = np.diff(energy) / dt_hours - p_in[:steps] + p_loss[:steps]
        total += float(np.sum(residual**2))
        count += steps
    return total / count if (normalize and count) else total


def loss_comfort(desired: np.ndarray, actual: np.ndarray, normalize: bool = False) -> float:
    desired = np.asarray(desired, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if desired.shape != actual.shape:
        raise InputError("desired and actual temperature lengths differ")
    if desired.size == 0:
        raise InputError("loss_comfort needs at least one sample")
    total = float(np.sum((desired - actual) ** 2))
    return total / desired.size if normalize else total


def total_loss(batch: TrainingBatch, net: SurrogateNet, weights: LossWeights) -> float:
    batch.validate()
    weights.validate()
    norm = weights.normalize_losses
    value = loss_data(forward(net, batch.features), batch.targets, norm)
    if batch.node_energy:
        value += weights.lambda_physics * loss_physics(
            batch.node_energy, batch.node_power_in, batch.node_power_loss,
            batch.dt_hours, norm,
        )
    if batch.desired_temps.size:
        value += weights.mu_comfort * loss_comfort(
            batch.desired_temps, batch.actual_temps, norm
        )
    return value


def gradient(
    batch: TrainingBatch, net: SurrogateNet, weights: LossWeights
) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Analytic gradient of total_loss w.r.t. every weight and bias.

    The physics and comfort terms are constants of the batch, so only the
    data term contributes.
    """
    batch.validate()
    weights.validate()
    pre, acts = _forward_trace(net, batch.features)
    residual = acts[-1][:, 0] - np.asarray(batch.targets, dtype=float)
    scale = 2.0 / residual.size if weights.normalize_losses else 2.0
    delta = scale * residual[:, None]
    grad_w: list[np.ndarray] = [np.zeros(0)] * len(net.weights)
    grad_b: list[np.ndarray] = [np.zeros(0)] * len(net.biases)
    for layer in reversed(range(len(net.weights))):
        grad_w[layer] = acts[layer].T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ net.weights[layer].T) * _act_deriv(net, pre[layer - 1])
    return grad_w, grad_b


def train(
    batch: TrainingBatch,
    net: SurrogateNet,
    weights: LossWeights,
    lr: float,
    epochs: int,
    seed: int | None = None,
) -> tuple[SurrogateNet, list[float]]:
    """Full-batch gradient descent. history[e] is the loss after update e.

    Passing a seed re-initializes the parameters before training so the
    whole run is a function of (batch, architecture, weights, lr, epochs,
    seed).
    """
    if lr < 0:
        raise InputError("learning rate must be >= 0")
    if epochs < 1:
        raise InputError("epochs must be >= 1")
    net = net.copy() if seed is None else init_net(net.layer_sizes, net.activation, seed)
    history: list[float] = []
    for epoch in range(epochs):
        grad_w, grad_b = gradient(batch, net, weights)
        for layer in range(len(net.weights)):
            net.weights[layer] -= lr * grad_w[layer]
            net.biases[layer] -= lr * grad_b[layer]
        value = total_loss(batch, net, weights)
        if not math.isfinite(value):
            raise TrainingDivergedError(epoch)
        history.append(value)
    return net, history


def net_to_dict(net: SurrogateNet) -> dict:
    return {
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def net_from_dict(raw: dict) -> SurrogateNet:
    try:
        net = SurrogateNet(
            layer_sizes=[int(s) for s in raw["layer_sizes"]],
            activation=raw["activation"],
            weights=[np.asarray(w, dtype=float) for w in raw["weights"]],
            biases=[np.asarray(b, dtype=float) for b in raw["biases"]],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed network file: {exc}") from exc
    for idx, (n_in, n_out) in enumerate(zip(net.layer_sizes[:-1], net.layer_sizes[1:])):
        if net.weights[idx].shape != (n_in, n_out) or net.biases[idx].shape != (n_out,):
            raise ConfigError(f"layer {idx} shapes do not match layer_sizes")
        if not (np.isfinite(net.weights[idx]).all() and np.isfinite(net.biases[idx]).all()):
            raise ConfigError(f"layer {idx} contains non-finite parameters")
    return net


def save_net(net: SurrogateNet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(net_to_dict(net), sort_keys=True, indent=1))


def load_net(path: str | Path) -> SurrogateNet:
    return net_from_dict(json.loads(Path(path).read_text()))
