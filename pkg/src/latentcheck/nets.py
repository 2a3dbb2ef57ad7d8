"""Dense feed-forward networks with manual reverse-mode differentiation.

Conventions used across the package:
  * tensors are float64 numpy arrays, row-major; a batch is (N, dim), a
    single sample is (dim,)
  * layer math is y = act(W @ x + b) with W laid out (out, in)
  * relu'(0) == 0, fixed so gradient tests are deterministic
  * every public entry point rejects non-finite values with NumericFailure
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, InputError, NumericFailure, StateError

ACTIVATIONS = ("identity", "relu", "tanh", "sigmoid")


def _act(name: str, pre: np.ndarray) -> np.ndarray:
    if name == "identity":
        return pre
    if name == "relu":
        return np.maximum(pre, 0.0)
    if name == "tanh":
        return np.tanh(pre)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-pre))
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, pre: np.ndarray, post: np.ndarray) -> np.ndarray:
    """d post / d pre, elementwise, from the retained forward values."""
    if name == "identity":
        return np.ones_like(pre)
    if name == "relu":
        return (pre > 0.0).astype(np.float64)
    if name == "tanh":
        return 1.0 - post * post
    if name == "sigmoid":
        return post * (1.0 - post)
    raise ValueError(f"unknown activation {name!r}")


def require_finite(name: str, arr: np.ndarray, context: str = "") -> None:
    if not np.all(np.isfinite(arr)):
        where = f" ({context})" if context else ""
        raise NumericFailure(f"non-finite values in {name}{where}")


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2 or self.bias.ndim != 1:
            raise DimensionError("weights must be 2-d and bias 1-d")
        if self.weights.shape[0] != self.bias.shape[0]:
            raise DimensionError(
                f"weight rows ({self.weights.shape[0]}) != bias length ({self.bias.shape[0]})"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]


@dataclass
class Network:
    layers: list[DenseLayer]
    input_dim: int

    def __post_init__(self):
        if not self.layers:
            raise InputError("network needs at least one layer")
        widths = [self.input_dim] + [l.out_dim for l in self.layers]
        for i, layer in enumerate(self.layers):
            if layer.in_dim != widths[i]:
                raise DimensionError(
                    f"layer {i} expects input width {layer.in_dim}, got {widths[i]}"
                )

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim


@dataclass
class ForwardTrace:
    """Per-layer values retained by forward_trace, consumed by backward."""

    inputs: list[np.ndarray]  # input to each layer, (N, in_i)
    pres: list[np.ndarray]  # pre-activation, (N, out_i)
    posts: list[np.ndarray]  # post-activation, (N, out_i)
    squeezed: bool  # True when the original x was 1-d


def init_network(input_dim: int, layer_sizes: list[int], activations, rng: np.random.Generator) -> Network:
    """Glorot-uniform weights (s = sqrt(6/(fan_in+fan_out))), zero biases."""
    if isinstance(activations, str):
        activations = [activations] * len(layer_sizes)
    if len(activations) != len(layer_sizes):
        raise DimensionError("one activation per layer required")
    layers = []
    fan_in = input_dim
    for size, act in zip(layer_sizes, activations):
        s = math.sqrt(6.0 / (fan_in + size))
        w = rng.uniform(-s, s, size=(size, fan_in))
        layers.append(DenseLayer(w, np.zeros(size), act))
        fan_in = size
    return Network(layers, input_dim)


def _as_batch(net: Network, x: np.ndarray) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    squeezed = x.ndim == 1
    if squeezed:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise DimensionError(
            f"input shape {x.shape} does not match network input_dim {net.input_dim}"
        )
    return x, squeezed


def forward_trace(net: Network, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Evaluate the network and retain everything backward needs."""
    x, squeezed = _as_batch(net, x)
    require_finite("input", x)
    inputs, pres, posts = [], [], []
    h = x
    for layer in net.layers:
        inputs.append(h)
        pre = h @ layer.weights.T + layer.bias
        post = _act(layer.activation, pre)
        pres.append(pre)
        posts.append(post)
        h = post
    require_finite("output", h)
    out = h[0] if squeezed else h
    return out, ForwardTrace(inputs, pres, posts, squeezed)


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    out, _ = forward_trace(net, x)
    return out


def backward(net: Network, trace: ForwardTrace, upstream: np.ndarray,
             from_preactivation: bool = False):
    """Gradients of a scalar loss given dL/d(output).

    Returns (param_grads, input_grad) with param_grads aligned to
    parameters(net): [W0, b0, W1, b1, ...]. Batch contributions are summed,
    so `upstream` must already carry any 1/N for a mean-reduced loss.

    With from_preactivation=True, `upstream` is dL/d(last pre-activation)
    instead; losses fused with the output nonlinearity (sigmoid + cross
    entropy) use this to skip the saturating derivative.
    """
    if trace is None or not trace.inputs:
        raise StateError("backward requires a retained forward trace")
    g = np.asarray(upstream, dtype=np.float64)
    if trace.squeezed and g.ndim == 1:
        g = g[None, :]
    if g.shape != trace.posts[-1].shape:
        raise DimensionError(
            f"upstream shape {g.shape} != output shape {trace.posts[-1].shape}"
        )
    grads: list[np.ndarray] = []
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if from_preactivation and i == len(net.layers) - 1:
            g_pre = g
        else:
            g_pre = g * _act_grad(layer.activation, trace.pres[i], trace.posts[i])
        grads.append(g_pre.sum(axis=0))  # bias
        grads.append(g_pre.T @ trace.inputs[i])  # weights
        g = g_pre @ layer.weights
    grads.reverse()
    for arr in grads:
        require_finite("gradient", arr)
    input_grad = g[0] if trace.squeezed else g
    return grads, input_grad


def parameters(net: Network) -> list[np.ndarray]:
    """Mutable views of all parameters, in backward's gradient order."""
    out: list[np.ndarray] = []
    for layer in net.layers:
        out.append(layer.weights)
        out.append(layer.bias)
    return out


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: list[np.ndarray], lr: float = 1e-3) -> AdamState:
    return AdamState(
        m=[np.zeros_like(p) for p in params],
        v=[np.zeros_like(p) for p in params],
        lr=lr,
    )


def adam_step(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState) -> AdamState:
    """Standard Adam update, in place on params. Returns the mutated state."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise DimensionError("params/grads/state lengths differ")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise DimensionError(f"shape mismatch in adam_step: {p.shape} vs {g.shape}")
    state.step += 1
    t = state.step
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return state


# ---------------------------------------------------------------------------
# Classification head + trainer (used by adequacy baselines and test generation)
# ---------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_loss(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy; returns (loss, dL/dlogits)."""
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.atleast_1d(labels)
    n = logits.shape[0]
    p = softmax(logits)
    nll = -np.log(np.clip(p[np.arange(n), labels], 1e-300, None))
    grad = p.copy()
    grad[np.arange(n), labels] -= 1.0
    return float(nll.mean()), grad / n


@dataclass
class ClassifierConfig:
    num_classes: int
    hidden: tuple[int, ...] = (256, 128)
    activation: str = "relu"
    epochs: int = 20
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0


def train_classifier(x: np.ndarray, y: np.ndarray, cfg: ClassifierConfig):
    """Train a softmax classifier; returns (Network, per-epoch mean loss)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2 or len(x) == 0:
        raise InputError("training data must be a nonempty (N, d) array")
    if len(x) != len(y):
        raise DimensionError("images and labels disagree in length")
    rng = np.random.default_rng(cfg.seed)
    sizes = list(cfg.hidden) + [cfg.num_classes]
    acts = [cfg.activation] * len(cfg.hidden) + ["identity"]
    net = init_network(x.shape[1], sizes, acts, rng)
    params = parameters(net)
    state = init_adam(params, lr=cfg.lr)
    history = []
    n = len(x)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            out, trace = forward_trace(net, x[idx])
            loss, dlogits = cross_entropy_loss(out, y[idx])
            if not math.isfinite(loss):
                raise NumericFailure(
                    f"classifier loss diverged at epoch {epoch}, batch {start // cfg.batch_size}"
                )
            grads, _ = backward(net, trace, dlogits)
            adam_step(params, grads, state)
            total += loss * len(idx)
        history.append(total / n)
    return net, history


def accuracy(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    pred = forward(net, x).argmax(axis=1)
    return float((pred == np.asarray(y)).mean())


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def finite_difference(f, params: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of scalar f() w.r.t. arrays it closes over.

    Perturbs each element in place; restores the original values exactly.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + h
            hi = f()
            flat_p[i] = orig - h
            lo = f()
            flat_p[i] = orig
            flat_g[i] = (hi - lo) / (2.0 * h)
        grads.append(g)
    return grads


def max_relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    """max over elements of |a - n| / max(1e-12, |a| + |n|)."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(1e-12, np.abs(a) + np.abs(n))
        worst = max(worst, float((np.abs(a - n) / denom).max()))
    return worst


def gradient_check(net: Network, loss, x: np.ndarray, h: float = 1e-5) -> float:
    """Compare backprop against central differences for all parameters.

    `loss` maps the network output to (scalar, dL/doutput).
    """
    out, trace = forward_trace(net, x)
    _, dout = loss(out)
    analytic, _ = backward(net, trace, dout)
    numeric = finite_difference(lambda: loss(forward(net, x))[0], parameters(net), h=h)
    return max_relative_error(analytic, numeric)
