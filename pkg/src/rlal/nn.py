"""Minimal dense network stack with exact forward/backward passes.

Everything downstream (agents, perturbation crafting, the dynamics
model) runs on these few primitives, so they are written for
verifiability: float64 throughout, no hidden state, and analytic
gradients that are checked against finite differences in the tests.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

RELU = "relu"
IDENTITY = "identity"
ACTIVATIONS = (IDENTITY, RELU)

_MAGIC = b"RLAL-NET\x00"
_FORMAT_VERSION = 1
_ACT_CODES = {IDENTITY: 0, RELU: 1}
_ACT_NAMES = {code: name for name, code in _ACT_CODES.items()}


class NetworkFormatError(ValueError):
    """Raised when a persisted network file cannot be decoded."""


@dataclass
class Layer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray     # (out_dim,)
    activation: str

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list[Layer]

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class GradientBundle:
    """Parameter gradients (mirroring Network layers) plus the input gradient."""

    param_grads: list[tuple[np.ndarray, np.ndarray]]  # (dW, db) per layer
    input_grad: np.ndarray


def init_network(layer_dims: list[int], activations: list[str], seed: int) -> Network:
    """Build a network with uniform [-s, s] weights, s = sqrt(6/(fan_in+fan_out)).

    Identical (layer_dims, activations, seed) yields bit-identical parameters.
    """
    if len(layer_dims) < 2:
        raise ValueError("layer_dims needs at least an input and an output size")
    if any(d <= 0 for d in layer_dims):
        raise ValueError(f"layer_dims must be positive, got {layer_dims}")
    n_layers = len(layer_dims) - 1
    if len(activations) != n_layers:
        raise ValueError(
            f"expected {n_layers} activations for {len(layer_dims)} dims, got {len(activations)}"
        )
    for act in activations:
        if act not in ACTIVATIONS:
            raise ValueError(f"unknown activation {act!r}")
    rng = np.random.default_rng(seed)
    layers = []
    for in_dim, out_dim, act in zip(layer_dims[:-1], layer_dims[1:], activations):
        scale = np.sqrt(6.0 / (in_dim + out_dim))
        weights = rng.uniform(-scale, scale, size=(out_dim, in_dim))
        bias = np.zeros(out_dim)
        layers.append(Layer(weights, bias, act))
    return Network(layers)


def _check_input(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"input shape {x.shape} != ({net.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite values")
    return x


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    x = _check_input(net, x)
    h = x
    for layer in net.layers:
        z = layer.weights @ h + layer.bias
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
    return h


def forward_batch(net: Network, xs: np.ndarray) -> np.ndarray:
    """Vectorized forward over rows of xs, shape (n, input_dim) -> (n, output_dim)."""
    h = np.asarray(xs, dtype=float)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise ValueError(f"batch shape {h.shape} incompatible with input_dim {net.input_dim}")
    for layer in net.layers:
        z = h @ layer.weights.T + layer.bias
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
    return h


def backward(net: Network, x: np.ndarray, output_grad: np.ndarray) -> GradientBundle:
    """Exact gradients of <forward(net, x), output_grad> w.r.t. parameters and x."""
    x = _check_input(net, x)
    output_grad = np.asarray(output_grad, dtype=float)
    if output_grad.shape != (net.output_dim,):
        raise ValueError(f"output_grad shape {output_grad.shape} != ({net.output_dim},)")
    param_grads, input_grads = backward_batch(net, x[None, :], output_grad[None, :])
    return GradientBundle(param_grads, input_grads[0])


def backward_batch(
    net: Network, xs: np.ndarray, output_grads: np.ndarray
) -> tuple[list[tuple[np.ndarray, np.ndarray]], np.ndarray]:
    """Batched backward pass; parameter gradients are summed over the batch."""
    activations = [np.asarray(xs, dtype=float)]
    pre = []
    h = activations[0]
    for layer in net.layers:
        z = h @ layer.weights.T + layer.bias
        pre.append(z)
        h = np.maximum(z, 0.0) if layer.activation == RELU else z
        activations.append(h)
    g = np.asarray(output_grads, dtype=float)
    param_grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if layer.activation == RELU:
            g = g * (pre[i] > 0.0)
        dw = g.T @ activations[i]
        db = g.sum(axis=0)
        param_grads[i] = (dw, db)
        g = g @ layer.weights
    return param_grads, g


def sgd_step(net: Network, grads, lr: float) -> Network:
    """Return the network with every parameter moved by -lr * gradient.

    ``grads`` may be a GradientBundle or a bare param_grads list.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    param_grads = grads.param_grads if isinstance(grads, GradientBundle) else grads
    if len(param_grads) != len(net.layers):
        raise ValueError("gradient/layer count mismatch")
    layers = []
    for layer, (dw, db) in zip(net.layers, param_grads):
        if dw.shape != layer.weights.shape or db.shape != layer.bias.shape:
            raise ValueError("gradient shape mismatch")
        if not (np.all(np.isfinite(dw)) and np.all(np.isfinite(db))):
            raise ValueError("non-finite gradients (training diverged)")
        layers.append(Layer(layer.weights - lr * dw, layer.bias - lr * db, layer.activation))
    return Network(layers)


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Numerically stable softmax of logits / temperature."""
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=float) / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError("logits contain non-finite values")
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def save_network(net: Network, path) -> None:
    """Write the versioned flat binary format (little-endian, row-major float64)."""
    chunks = [_MAGIC, struct.pack("<I", _FORMAT_VERSION), struct.pack("<I", len(net.layers))]
    for layer in net.layers:
        chunks.append(struct.pack("<IIB", layer.in_dim, layer.out_dim, _ACT_CODES[layer.activation]))
        chunks.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise NetworkFormatError(f"truncated network file (needed {n} bytes at offset {off})")
        out = data[off : off + n]
        off += n
        return out

    if take(len(_MAGIC)) != _MAGIC:
        raise NetworkFormatError("bad magic; not a network file")
    (version,) = struct.unpack("<I", take(4))
    if version != _FORMAT_VERSION:
        raise NetworkFormatError(f"unsupported format version {version}")
    (n_layers,) = struct.unpack("<I", take(4))
    layers = []
    for _ in range(n_layers):
        in_dim, out_dim, act_code = struct.unpack("<IIB", take(9))
        if act_code not in _ACT_NAMES:
            raise NetworkFormatError(f"unknown activation code {act_code}")
        weights = np.frombuffer(take(8 * in_dim * out_dim), dtype="<f8").reshape(out_dim, in_dim).copy()
        bias = np.frombuffer(take(8 * out_dim), dtype="<f8").copy()
        layers.append(Layer(weights, bias, _ACT_NAMES[act_code]))
    if off != len(data):
        raise NetworkFormatError(f"{len(data) - off} trailing bytes after network payload")
    if not layers:
        raise NetworkFormatError("network file holds no layers")
    for a, b in zip(layers[:-1], layers[1:]):
        if a.out_dim != b.in_dim:
            raise NetworkFormatError("layer dimensions do not chain")
    return Network(layers)
