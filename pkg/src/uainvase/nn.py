"""
Dense neural-network substrate: forward, exact backward, Adam and a
finite-difference gradient checker.

Weights are stored ``(out, in)`` so a layer computes ``x @ W.T + b``.
Everything is float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DataError, TrainingDivergence, UsageError

ACTIVATIONS = ("relu", "sigmoid", "identity")
CHECKPOINT_FORMAT = "uainvase-dense/1"


def sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ConfigurationError(
                f"weight {self.weight.shape} and bias {self.bias.shape} disagree"
            )

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


@dataclass
class Tape:
    """Activations cached by :meth:`DenseNetwork.forward`."""

    owner: int
    version: int
    inputs: list  # input to each layer
    outputs: list  # post-activation output of each layer


class DenseNetwork:
    """A stack of dense layers, each with its own activation."""

    def __init__(self, layers: Sequence[Layer]):
        if not layers:
            raise ConfigurationError("a network needs at least one layer")
        for k in range(1, len(layers)):
            if layers[k].n_in != layers[k - 1].n_out:
                raise ConfigurationError(
                    f"layer {k} expects {layers[k].n_in} inputs but layer {k - 1} "
                    f"produces {layers[k - 1].n_out}"
                )
        self.layers = list(layers)
        # bumped by every parameter update; lets backward detect stale tapes
        self.version = 0

    @classmethod
    def build(cls, sizes: Sequence[int], activations: Sequence[str], rng=None):
        """Glorot-uniform weights, zero biases.

        ``sizes`` lists the widths including input and output, so
        ``len(activations) == len(sizes) - 1``.
        """
        if len(activations) != len(sizes) - 1:
            raise ConfigurationError("need one activation per layer")
        rng = np.random.default_rng(rng)
        layers = []
        for n_in, n_out, act in zip(sizes[:-1], sizes[1:], activations):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_out, n_in))
            layers.append(Layer(w, np.zeros(n_out), act))
        return cls(layers)

    @property
    def n_in(self) -> int:
        return self.layers[0].n_in

    @property
    def n_out(self) -> int:
        return self.layers[-1].n_out

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in the order ``[W0, b0, W1, b1, ...]``."""
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def copy(self) -> "DenseNetwork":
        return DenseNetwork(
            [Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers]
        )

    def forward(self, batch):
        """Return ``(outputs, tape)`` for a ``(n, n_in)`` batch."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ConfigurationError(
                f"expected a batch of width {self.n_in}, got shape {x.shape}"
            )
        if not np.all(np.isfinite(x)):
            raise DataError("non-finite values in network input")
        inputs, outputs = [], []
        for i, layer in enumerate(self.layers):
            inputs.append(x)
            with np.errstate(over="ignore", invalid="ignore"):
                z = x @ layer.weight.T + layer.bias
            if not np.all(np.isfinite(z)):
                raise TrainingDivergence(f"layer {i} overflowed", layer=i)
            if layer.activation == "relu":
                x = np.maximum(z, 0.0)
            elif layer.activation == "sigmoid":
                x = sigmoid(z)
            else:
                x = z
            outputs.append(x)
        return x, Tape(id(self), self.version, inputs, outputs)

    def __call__(self, batch):
        return self.forward(batch)[0]

    def backward(self, tape: Tape, output_grad):
        """Exact chain rule through the cached tape.

        Returns ``(param_grads, input_grad)`` with ``param_grads`` ordered
        like :meth:`params`.
        """
        if tape.owner != id(self) or tape.version != self.version:
            raise UsageError("tape does not belong to the current network state")
        g = np.asarray(output_grad, dtype=np.float64)
        if g.shape != tape.outputs[-1].shape:
            raise UsageError(
                f"output_grad shape {g.shape} != output shape {tape.outputs[-1].shape}"
            )
        grads = [None] * (2 * len(self.layers))
        for k in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[k]
            y = tape.outputs[k]
            if layer.activation == "relu":
                g = g * (y > 0)
            elif layer.activation == "sigmoid":
                g = g * y * (1.0 - y)
            grads[2 * k] = g.T @ tape.inputs[k]
            grads[2 * k + 1] = g.sum(axis=0)
            g = g @ layer.weight
        return grads, g


@dataclass
class AdamState:
    m: list
    v: list
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], **hyper) -> "AdamState":
        for name, value in hyper.items():
            if value <= 0:
                raise ConfigurationError(f"Adam {name} must be positive, got {value}")
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            **hyper,
        )


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray]):
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(state.m) or len(grads) != len(params):
        raise ConfigurationError("params, grads and optimizer state disagree in length")
    for i, g in enumerate(grads):
        if g.shape != params[i].shape:
            raise ConfigurationError(f"gradient {i} has shape {g.shape}, expected {params[i].shape}")
        # a NaN/Inf entry always makes the sum non-finite
        if not np.isfinite(np.sum(g)):
            raise TrainingDivergence(f"non-finite gradient in layer {i // 2}", layer=i // 2)
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        denom = np.sqrt(v / c2)
        denom += state.eps
        p -= (state.lr / c1) * m / denom
    return params


class Optimizer:
    """Adam bound to one network; keeps the network's version in step."""

    def __init__(self, net: DenseNetwork, **hyper):
        self.net = net
        self.state = AdamState.for_params(net.params(), **hyper)

    def step(self, grads):
        adam_step(self.state, self.net.params(), grads)
        self.net.version += 1
        for i, p in enumerate(self.net.params()):
            if not np.isfinite(np.sum(p)):
                raise TrainingDivergence(f"non-finite parameter in layer {i // 2}", layer=i // 2)


def grad_check(
    model,
    loss_fn: Callable,
    batch,
    eps: float = 1e-5,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``model`` is anything with ``forward``, ``backward`` and ``params`` in the
    style of :class:`DenseNetwork`. ``loss_fn(outputs)`` must return
    ``(loss, d_loss/d_outputs)``.
    """
    if not 0 < eps <= 1e-3:
        raise ConfigurationError(f"eps must lie in (0, 1e-3], got {eps}")
    out, tape = model.forward(batch)
    _, d_out = loss_fn(out)
    analytic, _ = model.backward(tape, d_out)

    worst = 0.0
    for p, a in zip(model.params(), analytic):
        flat = p.reshape(-1)
        a_flat = np.asarray(a).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = loss_fn(model.forward(batch)[0])[0]
            flat[i] = orig - eps
            down = loss_fn(model.forward(batch)[0])[0]
            flat[i] = orig
            numeric = (up - down) / (2 * eps)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst


def network_to_dict(net: DenseNetwork) -> dict:
    return {
        "format": CHECKPOINT_FORMAT,
        "layers": [
            {
                "in": layer.n_in,
                "out": layer.n_out,
                "activation": layer.activation,
                "weight": layer.weight.ravel().tolist(),
                "bias": layer.bias.tolist(),
            }
            for layer in net.layers
        ],
    }


def network_from_dict(doc: dict) -> DenseNetwork:
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ConfigurationError(f"unsupported checkpoint format {doc.get('format')!r}")
    layers = []
    for entry in doc["layers"]:
        w = np.array(entry["weight"], dtype=np.float64)
        if w.size != entry["out"] * entry["in"]:
            raise ConfigurationError("weight length does not match declared dims")
        layers.append(Layer(w.reshape(entry["out"], entry["in"]), entry["bias"], entry["activation"]))
    return DenseNetwork(layers)


def save_network(net: DenseNetwork, path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net)))


def load_network(path) -> DenseNetwork:
    return network_from_dict(json.loads(Path(path).read_text()))
