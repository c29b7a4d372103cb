"""Conditional-GAN channel surrogate and its FCNN baseline.

The generator sees ``[noise | condition]`` where the condition is a window of
transmitted samples around the current symbol (past, current and future
symbols, real/imaginary parts interleaved per sample). It emits the received
samples of the current symbol. The discriminator scores
``[condition | candidate]``.

Data are normalized to [-1, 1] by one global max-abs scale before training;
the generator's tanh output is mapped back through the same scale.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import (
    ConfigError,
    DegenerateInputError,
    FormatError,
    InputShapeError,
    TrainingDivergedError,
    WindowOutOfRangeError,
)
from .nncore import (
    AdamState,
    MlpParams,
    MlpSpec,
    adam_step,
    backward,
    bce_loss,
    forward,
    init_params,
    mse_loss,
    read_network,
    write_network,
)
from .sigproc import ComplexSignal

log = logging.getLogger(__name__)

MODEL_MAGIC = b"FGNN"
MODEL_VERSION = 1


@dataclass(frozen=True)
class WindowGeometry:
    past_symbols: int = 10
    future_symbols: int = 10
    sps: int = 4
    current_symbols: int = 1

    def __post_init__(self):
        if self.past_symbols < 0 or self.future_symbols < 0:
            raise ConfigError("past/future symbol counts must be >= 0")
        if self.sps < 1 or self.current_symbols < 1:
            raise ConfigError("sps and current_symbols must be >= 1")

    @property
    def window_symbols(self) -> int:
        return self.past_symbols + self.current_symbols + self.future_symbols

    @property
    def condition_dim(self) -> int:
        return 2 * self.sps * self.window_symbols

    @property
    def current_dim(self) -> int:
        return 2 * self.sps * self.current_symbols


@dataclass(frozen=True)
class Scaler:
    """Affine map ``x -> (x - offset) / scale``."""

    scale: float
    offset: float = 0.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("scale must be positive")

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.scale

    def invert(self, y):
        return np.asarray(y, dtype=np.float64) * self.scale + self.offset


def fit_scaler(*arrays) -> Scaler:
    """Global max-abs scaler so every component of every array lies in [-1, 1]."""
    parts = [np.asarray(a, dtype=np.float64) for a in arrays if np.size(a)]
    if not parts:
        raise DegenerateInputError("no training data to fit a scaler on")
    peak = max(float(np.max(np.abs(p))) for p in parts)
    if peak == 0:
        raise DegenerateInputError("training data are all zero")
    return Scaler(scale=peak, offset=0.0)


def _interleave(samples) -> np.ndarray:
    s = np.asarray(samples, dtype=np.complex128)
    out = np.empty(s.shape[:-1] + (2 * s.shape[-1],))
    out[..., 0::2] = s.real
    out[..., 1::2] = s.imag
    return out


def _deinterleave(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[..., 0::2] + 1j * x[..., 1::2]


def _samples_1d(signal) -> np.ndarray:
    s = signal.samples if isinstance(signal, ComplexSignal) else np.asarray(signal)
    if s.ndim != 1:
        raise InputShapeError("expected a single 1-D block")
    return s


def valid_symbol_range(n_samples: int, geometry: WindowGeometry) -> range:
    """Symbol indices whose full window lies inside a block of ``n_samples``."""
    n_sym = n_samples // geometry.sps
    stop = n_sym - geometry.future_symbols - geometry.current_symbols + 1
    return range(geometry.past_symbols, max(stop, geometry.past_symbols))


def _check_index(n_samples, symbol_index, geometry):
    r = valid_symbol_range(n_samples, geometry)
    if symbol_index not in r:
        raise WindowOutOfRangeError(
            f"symbol {symbol_index} needs {geometry.past_symbols} symbols before and "
            f"{geometry.future_symbols} after inside a block of {n_samples // geometry.sps}"
        )


def build_condition(tx_samples, symbol_index: int, geometry: WindowGeometry = WindowGeometry()):
    """Condition vector for one symbol: [past | current | future], re/im interleaved."""
    s = _samples_1d(tx_samples)
    _check_index(s.size, symbol_index, geometry)
    start = (symbol_index - geometry.past_symbols) * geometry.sps
    return _interleave(s[start : start + geometry.window_symbols * geometry.sps])


def build_target(rx_samples, symbol_index: int, geometry: WindowGeometry = WindowGeometry()):
    """Received samples of the current symbol, re/im interleaved."""
    s = _samples_1d(rx_samples)
    _check_index(s.size, symbol_index, geometry)
    start = symbol_index * geometry.sps
    return _interleave(s[start : start + geometry.current_symbols * geometry.sps])


def build_conditions(tx_samples, symbol_indices, geometry: WindowGeometry = WindowGeometry()):
    """Stack of condition vectors, one row per symbol index (vectorized)."""
    s = _samples_1d(tx_samples)
    idx = np.asarray(symbol_indices, dtype=np.intp)
    r = valid_symbol_range(s.size, geometry)
    if idx.size and (idx.min() < r.start or idx.max() >= r.stop):
        raise WindowOutOfRangeError("symbol index too close to the block edge")
    inter = _interleave(s)
    width = geometry.condition_dim
    windows = sliding_window_view(inter, width)[:: 2 * geometry.sps]
    return np.array(windows[idx - geometry.past_symbols])


def build_targets(rx_samples, symbol_indices, geometry: WindowGeometry = WindowGeometry()):
    s = _samples_1d(rx_samples)
    idx = np.asarray(symbol_indices, dtype=np.intp)
    r = valid_symbol_range(s.size, geometry)
    if idx.size and (idx.min() < r.start or idx.max() >= r.stop):
        raise WindowOutOfRangeError("symbol index too close to the block edge")
    n_cur = geometry.current_symbols * geometry.sps
    cols = idx[:, None] * geometry.sps + np.arange(n_cur)
    return _interleave(s[cols])


def interior_indices(n_samples: int, geometry: WindowGeometry, edge_symbols: int = 0) -> np.ndarray:
    """Symbols at least ``edge_symbols`` from both ends with a full window."""
    r = valid_symbol_range(n_samples, geometry)
    n_sym = n_samples // geometry.sps
    lo = max(r.start, edge_symbols)
    hi = min(r.stop, n_sym - edge_symbols)
    return np.arange(lo, max(hi, lo))


# -- configuration and model --------------------------------------------------

GENERATOR_HIDDEN = (288, 256, 64)
DISCRIMINATOR_HIDDEN = (256, 256, 64)


@dataclass(frozen=True)
class CganConfig:
    noise_dim: int = 10
    geometry: WindowGeometry = WindowGeometry()
    epochs: int = 2000
    batch_size: int = 64
    real_label_range: tuple = (0.7, 1.2)
    fake_label_range: tuple = (0.0, 0.3)
    d_steps_per_g_step: int = 1
    seed: int = 0
    lr: float = 2e-4
    adam_beta1: float = 0.5
    adam_beta2: float = 0.999
    leaky_slope: float = 0.2
    generator_hidden: tuple = GENERATOR_HIDDEN
    discriminator_hidden: tuple = DISCRIMINATOR_HIDDEN
    checkpoint_every: int = 0
    freeze_generator: bool = False

    def __post_init__(self):
        if self.noise_dim < 1:
            raise ConfigError("noise_dim must be >= 1")
        if self.epochs < 0 or self.batch_size < 1 or self.d_steps_per_g_step < 1:
            raise ConfigError("epochs, batch_size and d_steps_per_g_step must be positive")
        for lo, hi in (self.real_label_range, self.fake_label_range):
            if not lo <= hi:
                raise ConfigError("label ranges must be ordered")

    def generator_spec(self) -> MlpSpec:
        g = self.geometry
        widths = (self.noise_dim + g.condition_dim, *self.generator_hidden, g.current_dim)
        acts = ("leaky_relu",) * len(self.generator_hidden) + ("tanh",)
        return MlpSpec(widths, acts, self.leaky_slope)

    def discriminator_spec(self) -> MlpSpec:
        g = self.geometry
        widths = (g.condition_dim + g.current_dim, *self.discriminator_hidden, 1)
        acts = ("leaky_relu",) * len(self.discriminator_hidden) + ("sigmoid",)
        return MlpSpec(widths, acts, self.leaky_slope)


@dataclass
class CganModel:
    """Trained surrogate. ``discriminator`` is None for an FCNN baseline."""

    generator: MlpParams
    generator_spec: MlpSpec
    discriminator: Optional[MlpParams]
    discriminator_spec: Optional[MlpSpec]
    scaler: Scaler
    geometry: WindowGeometry
    noise_dim: int

    def __post_init__(self):
        g = self.geometry
        if self.generator_spec.input_width != self.noise_dim + g.condition_dim:
            raise ConfigError("generator input width must equal noise_dim + condition_dim")
        if self.generator_spec.output_width != g.current_dim:
            raise ConfigError("generator output width must equal current_dim")
        self.generator.check(self.generator_spec)
        if self.discriminator is not None:
            if self.discriminator_spec.input_width != g.condition_dim + g.current_dim:
                raise ConfigError("discriminator input width must equal condition_dim + current_dim")
            if self.discriminator_spec.output_width != 1:
                raise ConfigError("discriminator must output one value")
            self.discriminator.check(self.discriminator_spec)

    @property
    def is_fcnn(self) -> bool:
        return self.discriminator is None


@dataclass
class TrainResult:
    model: CganModel
    losses: np.ndarray  # (epochs, 2) for CGAN [d_loss, g_loss]; (epochs, 1) for FCNN
    checkpoints: list = field(default_factory=list)


def _check_dataset(conditions, targets, config: CganConfig):
    c = np.asarray(conditions, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if c.ndim != 2 or t.ndim != 2 or c.shape[0] == 0:
        raise ConfigError("training set is empty")
    if c.shape[0] != t.shape[0]:
        raise InputShapeError("conditions and targets differ in count")
    g = config.geometry
    if c.shape[1] != g.condition_dim or t.shape[1] != g.current_dim:
        raise InputShapeError(
            f"expected widths {g.condition_dim}/{g.current_dim}, got {c.shape[1]}/{t.shape[1]}"
        )
    return c, t


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    bs = min(batch_size, n)
    for k in range(n // bs):
        yield order[k * bs : (k + 1) * bs]


def train_cgan(conditions, targets, config: CganConfig = CganConfig(),
               on_checkpoint: Callable[[int, CganModel], None] | None = None) -> TrainResult:
    """Adversarial training with smoothed, randomized labels.

    Per batch the discriminator takes ``d_steps_per_g_step`` BCE steps on
    real pairs (labels ~ U[real_label_range]) and generated pairs (labels ~
    U[fake_label_range]); then the generator takes one step pushing
    D(condition, G(noise, condition)) toward 1. The loss is not expected to
    converge; the epoch budget is the only stopping rule.

    With ``config.freeze_generator`` only the discriminator learns; the
    generator loss is still evaluated and recorded.
    """
    c_raw, t_raw = _check_dataset(conditions, targets, config)
    scaler = fit_scaler(c_raw, t_raw)
    cond = scaler.apply(c_raw)
    real = scaler.apply(t_raw)

    g_spec, d_spec = config.generator_spec(), config.discriminator_spec()
    ss_g, ss_d, ss_train = np.random.SeedSequence(config.seed).spawn(3)
    gen = init_params(g_spec, ss_g)
    disc = init_params(d_spec, ss_d)
    hyper = dict(lr=config.lr, beta1=config.adam_beta1, beta2=config.adam_beta2)
    g_opt = AdamState.for_params(gen, **hyper)
    d_opt = AdamState.for_params(disc, **hyper)
    rng = np.random.default_rng(ss_train)
    cdim = config.geometry.condition_dim
    losses = np.zeros((config.epochs, 2))
    checkpoints = []

    def model_now():
        return CganModel(gen, g_spec, disc, d_spec, scaler, config.geometry, config.noise_dim)

    for epoch in range(config.epochs):
        d_sum = g_sum = 0.0
        n_batches = 0
        for idx in _batches(len(cond), config.batch_size, rng):
            c, x = cond[idx], real[idx]
            bs = len(idx)
            for _ in range(config.d_steps_per_g_step):
                z = rng.standard_normal((bs, config.noise_dim))
                fake, _ = forward(gen, g_spec, np.hstack([z, c]))
                d_in = np.vstack([np.hstack([c, x]), np.hstack([c, fake])])
                labels = np.concatenate([
                    rng.uniform(*config.real_label_range, size=bs),
                    rng.uniform(*config.fake_label_range, size=bs),
                ])[:, None]
                pred, d_cache = forward(disc, d_spec, d_in)
                d_loss, d_grad = bce_loss(pred, labels)
                d_grads, _ = backward(disc, d_spec, d_cache, d_grad)
                disc, d_opt = adam_step(disc, d_grads, d_opt)

            z = rng.standard_normal((bs, config.noise_dim))
            fake, g_cache = forward(gen, g_spec, np.hstack([z, c]))
            pred, d_cache = forward(disc, d_spec, np.hstack([c, fake]))
            g_loss, g_grad = bce_loss(pred, np.ones_like(pred))
            _, d_in_grad = backward(disc, d_spec, d_cache, g_grad)
            if not config.freeze_generator:
                g_grads, _ = backward(gen, g_spec, g_cache, d_in_grad[:, cdim:])
                gen, g_opt = adam_step(gen, g_grads, g_opt)

            d_sum += d_loss
            g_sum += g_loss
            n_batches += 1
        losses[epoch] = d_sum / n_batches, g_sum / n_batches
        if not np.all(np.isfinite(losses[epoch])):
            raise TrainingDivergedError(epoch)
        log.debug("epoch %d d_loss %.4f g_loss %.4f", epoch, *losses[epoch])
        if config.checkpoint_every and (epoch + 1) % config.checkpoint_every == 0:
            snap = model_now()
            checkpoints.append((epoch + 1, snap))
            if on_checkpoint is not None:
                on_checkpoint(epoch + 1, snap)
    return TrainResult(model_now(), losses, checkpoints)


def train_fcnn(conditions, targets, config: CganConfig = CganConfig()) -> TrainResult:
    """Generator-shaped MLP fit by MSE, with the noise inputs held at zero."""
    c_raw, t_raw = _check_dataset(conditions, targets, config)
    scaler = fit_scaler(c_raw, t_raw)
    cond = scaler.apply(c_raw)
    real = scaler.apply(t_raw)
    spec = config.generator_spec()
    ss_init, ss_train = np.random.SeedSequence(config.seed).spawn(2)
    net = init_params(spec, ss_init)
    opt = AdamState.for_params(net, lr=config.lr, beta1=config.adam_beta1,
                               beta2=config.adam_beta2)
    rng = np.random.default_rng(ss_train)
    zeros = np.zeros((len(cond), config.noise_dim))
    inputs = np.hstack([zeros, cond])
    losses = np.zeros((config.epochs, 1))
    for epoch in range(config.epochs):
        total, n_batches = 0.0, 0
        for idx in _batches(len(cond), config.batch_size, rng):
            out, cache = forward(net, spec, inputs[idx])
            loss, grad = mse_loss(out, real[idx])
            grads, _ = backward(net, spec, cache, grad)
            net, opt = adam_step(net, grads, opt)
            total += loss
            n_batches += 1
        losses[epoch, 0] = total / n_batches
        if not np.isfinite(losses[epoch, 0]):
            raise TrainingDivergedError(epoch)
    model = CganModel(net, spec, None, None, scaler, config.geometry, config.noise_dim)
    return TrainResult(model, losses)


def generator_raw_output(model: CganModel, conditions, seed=None, noise=None):
    """Generator output in the normalized domain for raw (unscaled) conditions."""
    c = model.scaler.apply(conditions)
    if model.is_fcnn:
        z = np.zeros((len(c), model.noise_dim))
    elif noise is not None:
        z = np.asarray(noise, dtype=np.float64)
    else:
        z = np.random.default_rng(seed).standard_normal((len(c), model.noise_dim))
    out, _ = forward(model.generator, model.generator_spec, np.hstack([z, c]))
    return out


def sample_outputs(model: CganModel, conditions, seed=None, noise=None):
    """Surrogate channel output (raw units) for each condition row."""
    return model.scaler.invert(generator_raw_output(model, conditions, seed, noise))


def generate_channel_output(model: CganModel, tx_samples, seed: int = 0) -> ComplexSignal:
    """Replace the fiber: synthesize received samples for each interior symbol.

    Symbols without a complete condition window (the first ``past`` and last
    ``future`` of every block) are left at zero. For 2-D input each block
    draws its noise from a generator keyed by ``(seed, block index)``.
    """
    if not isinstance(tx_samples, ComplexSignal):
        raise InputShapeError("tx_samples must be a ComplexSignal")
    g = model.geometry
    blocks = np.atleast_2d(tx_samples.samples)
    n = blocks.shape[-1]
    idx = np.arange(valid_symbol_range(n, g).start, valid_symbol_range(n, g).stop)
    if idx.size == 0:
        raise InputShapeError("signal is shorter than one condition window")
    n_cur = g.current_symbols * g.sps
    cols = (idx[:, None] * g.sps + np.arange(n_cur)).ravel()
    out = np.zeros_like(blocks)
    for b, block in enumerate(blocks):
        cond = build_conditions(block, idx, g)
        if model.is_fcnn:
            noise = None
        else:
            rng = np.random.default_rng(np.random.SeedSequence([seed, b]))
            noise = rng.standard_normal((idx.size, model.noise_dim))
        y = sample_outputs(model, cond, noise=noise)
        out[b, cols] = _deinterleave(y).ravel()
    if tx_samples.samples.ndim == 1:
        out = out[0]
    return tx_samples.with_samples(out)


# -- model file ---------------------------------------------------------------
# "FGNN", u32 version, generator network, discriminator network (0 layers for
# FCNN), f64 scale, f64 offset, u32 past, u32 current, u32 future, u32 sps,
# u32 noise_dim. Network layout is defined in nncore.

def save_model(model: CganModel, path):
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", MODEL_VERSION))
        write_network(fh, model.generator, model.generator_spec)
        if model.discriminator is None:
            fh.write(struct.pack("<I", 0))
        else:
            write_network(fh, model.discriminator, model.discriminator_spec)
        fh.write(struct.pack("<dd", model.scaler.scale, model.scaler.offset))
        g = model.geometry
        fh.write(struct.pack("<IIIII", g.past_symbols, g.current_symbols, g.future_symbols,
                             g.sps, model.noise_dim))


def load_model(path, leaky_slope: float = 0.2) -> CganModel:
    with open(path, "rb") as fh:
        if fh.read(4) != MODEL_MAGIC:
            raise FormatError(f"{path} is not a model file")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != MODEL_VERSION:
            raise FormatError(f"unsupported model version {version}")
        gen, g_spec = read_network(fh, leaky_slope)
        if gen is None:
            raise FormatError("model has no generator")
        disc, d_spec = read_network(fh, leaky_slope)
        tail = fh.read(16 + 20)
        if len(tail) != 36 or fh.read(1):
            raise FormatError("bad scaler/geometry trailer")
    scale, offset = struct.unpack("<dd", tail[:16])
    past, current, future, sps, noise_dim = struct.unpack("<IIIII", tail[16:])
    geometry = WindowGeometry(past, future, sps, current)
    return CganModel(gen, g_spec, disc, d_spec, Scaler(scale, offset), geometry, noise_dim)


def model_kind(model: CganModel) -> str:
    return "fcnn" if model.is_fcnn else "cgan"


__all__ = [
    "WindowGeometry", "Scaler", "fit_scaler", "build_condition", "build_target",
    "build_conditions", "build_targets", "interior_indices", "valid_symbol_range",
    "CganConfig", "CganModel", "TrainResult", "train_cgan", "train_fcnn",
    "generate_channel_output", "sample_outputs", "generator_raw_output",
    "save_model", "load_model", "model_kind",
]
