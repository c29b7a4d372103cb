"""Dense multilayer perceptrons with hand-written backpropagation and Adam.

Batches are row-major: an input of shape ``(batch, in)`` maps to
``(batch, out)``. Layer ``l`` computes ``act(x @ W.T + b)`` with ``W`` of shape
``(out, in)``. Everything runs in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, InputShapeError, NumericError

ACTIVATION_TAGS = {"identity": 0, "leaky_relu": 1, "tanh": 2, "sigmoid": 3}
_TAG_NAMES = {v: k for k, v in ACTIVATION_TAGS.items()}
BCE_CLAMP = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    layer_widths: tuple
    activations: tuple
    leaky_slope: float = 0.2

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        acts = tuple(self.activations)
        object.__setattr__(self, "layer_widths", widths)
        object.__setattr__(self, "activations", acts)
        if len(widths) < 2:
            raise ConfigError("an MLP needs at least an input and an output width")
        if any(w < 1 for w in widths):
            raise ConfigError("layer widths must be >= 1")
        if len(acts) != len(widths) - 1:
            raise ConfigError("need one activation per layer")
        unknown = set(acts) - set(ACTIVATION_TAGS)
        if unknown:
            raise ConfigError(f"unknown activations {sorted(unknown)}")

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]

    @property
    def output_width(self) -> int:
        return self.layer_widths[-1]


@dataclass
class MlpParams:
    weights: list
    biases: list

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def arrays(self) -> list:
        """Weights and biases interleaved per layer: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    @classmethod
    def from_arrays(cls, arrays) -> "MlpParams":
        return cls(list(arrays[0::2]), list(arrays[1::2]))

    @property
    def n_parameters(self) -> int:
        return sum(a.size for a in self.arrays())

    def check(self, spec: MlpSpec):
        if len(self.weights) != spec.n_layers or len(self.biases) != spec.n_layers:
            raise InputShapeError("parameter layer count does not match spec")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            shape = (spec.layer_widths[l + 1], spec.layer_widths[l])
            if w.shape != shape or b.shape != (shape[0],):
                raise InputShapeError(f"layer {l} has shape {w.shape}/{b.shape}, expected {shape}")


def init_params(spec: MlpSpec, seed) -> MlpParams:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(spec.layer_widths[:-1], spec.layer_widths[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def activate(name: str, z, leaky_slope: float = 0.2):
    if name == "leaky_relu":
        return np.where(z > 0, z, leaky_slope * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return _sigmoid(z)
    if name == "identity":
        return z
    raise ConfigError(f"unknown activation {name!r}")


def _activation_grad(name, z, a, leaky_slope):
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, leaky_slope)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class ForwardCache:
    inputs: list = field(default_factory=list)
    preacts: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    squeeze: bool = False


def forward(params: MlpParams, spec: MlpSpec, x):
    """Evaluate the network. Returns ``(output, cache)``."""
    a = np.asarray(x, dtype=np.float64)
    squeeze = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[-1] != spec.input_width:
        raise InputShapeError(f"input width {a.shape[-1]} != {spec.input_width}")
    cache = ForwardCache(squeeze=squeeze)
    for w, b, act in zip(params.weights, params.biases, spec.activations):
        cache.inputs.append(a)
        z = a @ w.T + b
        a = activate(act, z, spec.leaky_slope)
        cache.preacts.append(z)
        cache.outputs.append(a)
    return (a[0] if squeeze else a), cache


def backward(params: MlpParams, spec: MlpSpec, cache: ForwardCache, output_grad):
    """Reverse-mode gradients of a scalar loss.

    ``output_grad`` is dLoss/dOutput with the output's shape. Returns
    ``(param_grads, input_grad)``; the input gradient lets a downstream
    network's gradient flow into an upstream one.
    """
    g = np.atleast_2d(np.asarray(output_grad, dtype=np.float64))
    if len(cache.preacts) != spec.n_layers:
        raise InputShapeError("cache does not come from this network")
    if g.shape != cache.outputs[-1].shape:
        raise InputShapeError(f"output gradient shape {g.shape} != {cache.outputs[-1].shape}")
    w_grads = [None] * spec.n_layers
    b_grads = [None] * spec.n_layers
    for l in range(spec.n_layers - 1, -1, -1):
        dz = g * _activation_grad(spec.activations[l], cache.preacts[l], cache.outputs[l],
                                  spec.leaky_slope)
        w_grads[l] = dz.T @ cache.inputs[l]
        b_grads[l] = dz.sum(axis=0)
        g = dz @ params.weights[l]
    return MlpParams(w_grads, b_grads), (g[0] if cache.squeeze else g)


def bce_loss(pred, label):
    """Mean binary cross-entropy and its gradient with respect to ``pred``.

    Labels may exceed 1 (smoothed real labels); logs are clamped at 1e-12.
    """
    p = np.asarray(pred, dtype=np.float64)
    y = np.broadcast_to(np.asarray(label, dtype=np.float64), p.shape)
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise NumericError("BCE prediction outside [0, 1]")
    pc = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    loss = -(y * np.log(pc) + (1.0 - y) * np.log1p(-pc))
    grad = (-y / pc + (1.0 - y) / (1.0 - pc)) / p.size
    return float(np.mean(loss)), grad


def mse_loss(pred, target):
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise InputShapeError(f"prediction shape {p.shape} != target shape {t.shape}")
    diff = p - t
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, **hyper) -> "AdamState":
        zeros = [np.zeros_like(a) for a in params.arrays()]
        return cls(m=zeros, v=[z.copy() for z in zeros], **hyper)


def adam_step(params: MlpParams, grads: MlpParams, state: AdamState):
    """One bias-corrected Adam update. Returns new ``(params, state)``."""
    p_arr, g_arr = params.arrays(), grads.arrays()
    if len(p_arr) != len(g_arr) or len(p_arr) != len(state.m):
        raise InputShapeError("params, grads and optimizer state disagree")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(p_arr, g_arr, state.m, state.v):
        if p.shape != g.shape:
            raise InputShapeError("gradient shape does not match parameter")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon))
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(new_m, new_v, t, state.lr, state.beta1, state.beta2, state.epsilon)
    return MlpParams.from_arrays(new_p), new_state


# -- binary layout ----------------------------------------------------------
# per network: u32 layer count, then per layer (u32 in, u32 out, u8 activation),
# then per layer row-major f64 weights followed by f64 biases; little-endian.

def write_network(fh, params: MlpParams, spec: MlpSpec):
    fh.write(struct.pack("<I", spec.n_layers))
    for l in range(spec.n_layers):
        fh.write(struct.pack("<IIB", spec.layer_widths[l], spec.layer_widths[l + 1],
                             ACTIVATION_TAGS[spec.activations[l]]))
    for w, b in zip(params.weights, params.biases):
        fh.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def _read_exact(fh, n):
    data = fh.read(n)
    if len(data) != n:
        raise FormatError("unexpected end of file")
    return data


def read_network(fh, leaky_slope: float = 0.2):
    """Read one network. Returns ``(params, spec)``, or ``(None, None)`` for 0 layers."""
    (n_layers,) = struct.unpack("<I", _read_exact(fh, 4))
    if n_layers == 0:
        return None, None
    shapes, acts = [], []
    for _ in range(n_layers):
        n_in, n_out, tag = struct.unpack("<IIB", _read_exact(fh, 9))
        if tag not in _TAG_NAMES:
            raise FormatError(f"unknown activation tag {tag}")
        shapes.append((n_out, n_in))
        acts.append(_TAG_NAMES[tag])
    for (o, _), (_, i) in zip(shapes[:-1], shapes[1:]):
        if o != i:
            raise FormatError("consecutive layer widths do not chain")
    widths = [shapes[0][1]] + [s[0] for s in shapes]
    weights, biases = [], []
    for n_out, n_in in shapes:
        w = np.frombuffer(_read_exact(fh, 8 * n_out * n_in), dtype="<f8")
        b = np.frombuffer(_read_exact(fh, 8 * n_out), dtype="<f8")
        weights.append(w.reshape(n_out, n_in).astype(np.float64))
        biases.append(b.astype(np.float64))
    return MlpParams(weights, biases), MlpSpec(tuple(widths), tuple(acts), leaky_slope)
