"""Dense MLPs with hand-written reverse-mode gradients and an Adam optimizer.

Everything runs in float64. Networks accept a single input vector or a batch
of row vectors; parameter gradients are summed over the batch rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HIDDEN_ACTIVATIONS = ("relu", "tanh")
OUTPUT_ACTIVATIONS = ("linear", "tanh", "sigmoid")

BCE_CLAMP = 1e-7


class ShapeError(ValueError):
    """Input or gradient width does not match the network layout."""


class NonFiniteError(FloatingPointError):
    """A gradient, loss or parameter became NaN/inf."""


@dataclass
class Mlp:
    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    hidden_activation: str = "relu"
    output_activation: str = "linear"

    def __post_init__(self):
        if len(self.layer_dims) < 2 or any(int(d) < 1 for d in self.layer_dims):
            raise ShapeError(f"bad layer_dims {self.layer_dims}")
        if self.hidden_activation not in HIDDEN_ACTIVATIONS:
            raise ValueError(f"unknown hidden activation {self.hidden_activation!r}")
        if self.output_activation not in OUTPUT_ACTIVATIONS:
            raise ValueError(f"unknown output activation {self.output_activation!r}")
        self.layer_dims = [int(d) for d in self.layer_dims]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[l + 1], self.layer_dims[l]) or b.shape != (self.layer_dims[l + 1],):
                raise ShapeError(f"layer {l}: weight {w.shape}, bias {b.shape} vs dims {self.layer_dims}")
        if len(self.weights) != len(self.layer_dims) - 1:
            raise ShapeError("one weight matrix per layer transition required")

    @classmethod
    def create(cls, layer_dims, rng: np.random.Generator, hidden_activation="relu",
               output_activation="linear") -> "Mlp":
        """Uniform fan-in initialisation, U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
        weights, biases = [], []
        for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(list(layer_dims), weights, biases, hidden_activation, output_activation)

    @classmethod
    def zeros(cls, layer_dims, hidden_activation="relu", output_activation="linear") -> "Mlp":
        weights = [np.zeros((o, i)) for i, o in zip(layer_dims[:-1], layer_dims[1:])]
        biases = [np.zeros(o) for o in layer_dims[1:]]
        return cls(list(layer_dims), weights, biases, hidden_activation, output_activation)

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in snapshot order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "Mlp":
        return Mlp(list(self.layer_dims), [w.copy() for w in self.weights],
                   [b.copy() for b in self.biases], self.hidden_activation, self.output_activation)

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def set_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float64)
        pos = 0
        for p in self.params():
            p[...] = vec[pos:pos + p.size].reshape(p.shape)
            pos += p.size
        if pos != vec.size:
            raise ShapeError(f"flat vector has {vec.size} entries, network has {pos}")

    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def assert_finite(self) -> None:
        for i, p in enumerate(self.params()):
            if not np.all(np.isfinite(p)):
                raise NonFiniteError(f"parameter array {i} holds non-finite values")

    def __call__(self, x):
        return forward(self, x)


@dataclass
class GradientTape:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input_gradient: np.ndarray

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params()])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params())


@dataclass
class Trace:
    """Per-layer activations cached by a forward pass, consumed by backward."""
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    output: np.ndarray
    squeeze: bool


def _as_batch(net: Mlp, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ShapeError(f"input shape {x.shape[1:] if x.ndim == 2 else x.shape} does not match width {net.in_dim}")
    return x, squeeze


def _hidden(kind: str, z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else np.tanh(z)


def _output(kind: str, z: np.ndarray) -> np.ndarray:
    if kind == "linear":
        return z
    if kind == "tanh":
        return np.tanh(z)
    return 1.0 / (1.0 + np.exp(-z))


def trace_forward(net: Mlp, x) -> Trace:
    h, squeeze = _as_batch(net, x)
    inputs, pre = [], []
    last = net.n_layers - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        inputs.append(h)
        z = h @ w.T + b
        pre.append(z)
        h = _output(net.output_activation, z) if l == last else _hidden(net.hidden_activation, z)
    return Trace(inputs, pre, h, squeeze)


def forward(net: Mlp, x) -> np.ndarray:
    tr = trace_forward(net, x)
    return tr.output[0] if tr.squeeze else tr.output


def backward(net: Mlp, x, output_gradient, trace: Trace | None = None) -> GradientTape:
    """Gradients of sum(output * output_gradient) w.r.t. parameters and input.

    ``trace`` may be passed to reuse a forward pass over the same ``x``.
    """
    if trace is None:
        trace = trace_forward(net, x)
    g = np.asarray(output_gradient, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.output.shape:
        raise ShapeError(f"output_gradient shape {g.shape} vs output {trace.output.shape}")

    last = net.n_layers - 1
    z = trace.pre[last]
    if net.output_activation == "tanh":
        g = g * (1.0 - trace.output ** 2)
    elif net.output_activation == "sigmoid":
        g = g * trace.output * (1.0 - trace.output)

    gw = [None] * net.n_layers
    gb = [None] * net.n_layers
    for l in range(last, -1, -1):
        if l != last:
            z = trace.pre[l]
            if net.hidden_activation == "relu":
                g = g * (z > 0.0)
            else:
                g = g * (1.0 - trace.inputs[l + 1] ** 2)
        gw[l] = g.T @ trace.inputs[l]
        gb[l] = g.sum(axis=0)
        g = g @ net.weights[l]
    inp = g[0] if trace.squeeze else g
    return GradientTape(gw, gb, inp)


@dataclass
class AdamState:
    learning_rate: float
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_div: float = 1e-8
    step_count: int = 0

    @classmethod
    def for_net(cls, net: Mlp, learning_rate: float, beta1=0.9, beta2=0.999, epsilon_div=1e-8) -> "AdamState":
        if not (learning_rate > 0 and np.isfinite(learning_rate)):
            raise ValueError(f"learning rate must be positive, got {learning_rate}")
        zeros = [np.zeros_like(p) for p in net.params()]
        return cls(learning_rate, zeros, [z.copy() for z in zeros], beta1, beta2, epsilon_div)


def adam_apply(net: Mlp, state: AdamState, tape: GradientTape, direction: str = "minimize") -> None:
    """One bias-corrected Adam step. ``direction='maximize'`` ascends."""
    if direction not in ("minimize", "maximize"):
        raise ValueError(f"direction must be minimize or maximize, got {direction!r}")
    grads = tape.params()
    params = net.params()
    if len(grads) != len(params) or any(g.shape != p.shape for g, p in zip(grads, params)):
        raise ShapeError("gradient tape is not congruent with the network")
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NonFiniteError(f"update rejected: gradient array {i} has {bad} non-finite entries "
                                 f"(step {state.step_count})")

    state.step_count += 1
    t = state.step_count
    sign = -1.0 if direction == "minimize" else 1.0
    step = state.learning_rate / (1.0 - state.beta1 ** t)
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p += sign * step * m / (np.sqrt(v / bc2) + state.epsilon_div)
    net.assert_finite()


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("mse_loss of empty vectors")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def bce_loss(pred, target) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"pred {pred.shape} vs target {target.shape}")
    if pred.size == 0:
        raise ShapeError("bce_loss of empty vectors")
    if not np.all((target == 0.0) | (target == 1.0)):
        raise ValueError("bce_loss targets must be 0 or 1")
    p = np.clip(pred, BCE_CLAMP, 1.0 - BCE_CLAMP)
    n = p.size
    loss = -np.mean(target * np.log(p) + (1.0 - target) * np.log1p(-p))
    grad = (p - target) / (p * (1.0 - p)) / n
    # clamping has zero slope outside the bounds
    grad = np.where((pred < BCE_CLAMP) | (pred > 1.0 - BCE_CLAMP), 0.0, grad)
    return float(loss), grad


def soft_update(net: Mlp, target: Mlp, eps: float) -> None:
    """target <- eps * net + (1 - eps) * target, parameter by parameter."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError(f"soft update rate must lie in [0, 1], got {eps}")
    if net.layer_dims != target.layer_dims:
        raise ShapeError("soft update between networks of different layout")
    for p, q in zip(net.params(), target.params()):
        q[...] = eps * p + (1.0 - eps) * q


def save_snapshot(net: Mlp, path) -> None:
    """Header line ``mlp AxBxC hidden out`` then little-endian float64 W0,b0,W1,b1,..."""
    header = f"mlp {'x'.join(str(d) for d in net.layer_dims)} {net.hidden_activation} {net.output_activation}\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(net.flat().astype("<f8").tobytes())


def load_snapshot(path) -> Mlp:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    parts = raw[:nl].decode("ascii").split()
    if len(parts) != 4 or parts[0] != "mlp":
        raise ValueError(f"{path}: not an mlp snapshot")
    dims = [int(d) for d in parts[1].split("x")]
    net = Mlp.zeros(dims, parts[2], parts[3])
    body = np.frombuffer(raw[nl + 1:], dtype="<f8")
    if body.size != net.n_params():
        raise ValueError(f"{path}: expected {net.n_params()} floats, found {body.size}")
    net.set_flat(body.astype(np.float64))
    return net


@dataclass
class BoxHead:
    """Affine map of a tanh output onto a per-dimension box [low, high]."""
    low: np.ndarray
    high: np.ndarray
    center: np.ndarray = field(init=False)
    half: np.ndarray = field(init=False)

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=np.float64)
        self.high = np.asarray(self.high, dtype=np.float64)
        if np.any(self.high < self.low):
            raise ValueError("box high below low")
        self.center = 0.5 * (self.low + self.high)
        self.half = 0.5 * (self.high - self.low)

    def scale(self, y: np.ndarray) -> np.ndarray:
        return self.center + self.half * y

    def unscale(self, x: np.ndarray) -> np.ndarray:
        half = np.where(self.half > 0, self.half, 1.0)
        return (x - self.center) / half

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.low, self.high)
