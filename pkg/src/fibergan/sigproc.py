"""Transmitter-side signal handling: bits, 16QAM mapping, pulse shaping, power.

Signals are carried as :class:`ComplexSignal`. Samples may be 1-D (one
waveform) or 2-D with shape ``(n_blocks, n_samples)``; every operation here
works along the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateInputError, InputShapeError

# decided level index (-3, -1, +1, +3) -> bit pair
_LEVEL_BITS = np.array([[0, 0], [0, 1], [1, 1], [1, 0]], dtype=np.uint8)
# bit pair as integer 2*b0 + b1 -> level
_PAIR_TO_LEVEL = np.array([-3.0, -1.0, 3.0, 1.0])
QAM16_SCALE = np.sqrt(10.0)


@dataclass(frozen=True)
class ComplexSignal:
    """Uniformly sampled complex baseband waveform.

    ``samples`` are in sqrt(W); ``sample_rate_hz`` is the sampling rate.
    The array is stored read-only.
    """

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        arr = np.array(self.samples, dtype=np.complex128)
        if arr.ndim not in (1, 2) or arr.size == 0:
            raise InputShapeError("samples must be a non-empty 1-D or 2-D array")
        if not np.all(np.isfinite(arr)):
            raise InputShapeError("samples must be finite")
        if not self.sample_rate_hz > 0:
            raise ConfigError("sample_rate_hz must be positive")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate_hz", float(self.sample_rate_hz))

    def __len__(self):
        return self.samples.shape[-1]

    def with_samples(self, samples) -> "ComplexSignal":
        return ComplexSignal(samples, self.sample_rate_hz)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate_hz


@dataclass(frozen=True)
class TxConfig:
    symbol_rate_baud: float = 3.0e10
    sps: int = 4
    rolloff: float = 0.1
    rrc_span_symbols: int = 32
    launch_power_dbm: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.sps < 2:
            raise ConfigError("sps must be >= 2")
        if not self.symbol_rate_baud > 0:
            raise ConfigError("symbol_rate_baud must be positive")
        if not 0 < self.rolloff <= 1:
            raise ConfigError("rolloff must lie in (0, 1]")
        if self.rrc_span_symbols <= 0 or self.rrc_span_symbols % 2:
            raise ConfigError("rrc_span_symbols must be a positive even integer")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    @property
    def sample_rate_hz(self) -> float:
        return self.symbol_rate_baud * self.sps

    @property
    def n_taps(self) -> int:
        return self.rrc_span_symbols * self.sps + 1


class BitErrorCount(NamedTuple):
    errors: int
    total: int
    ber: float


def random_bits(n: int, seed: int) -> np.ndarray:
    """Uniform random bits from a PCG64 generator seeded with ``seed``."""
    rng = np.random.Generator(np.random.PCG64(seed))
    return rng.integers(0, 2, size=n, dtype=np.uint8)


def map_bits_to_qam16(bits) -> np.ndarray:
    """Gray-map groups of 4 bits to unit-energy 16QAM symbols.

    Bits ``b0 b1`` select the in-phase level and ``b2 b3`` the quadrature
    level, each via 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by 1/sqrt(10).
    """
    b = np.asarray(bits, dtype=np.uint8)
    if b.ndim != 1 or b.size % 4:
        raise InputShapeError("bit count must be a multiple of 4")
    if np.any(b > 1):
        raise InputShapeError("bits must be 0 or 1")
    groups = b.reshape(-1, 4).astype(np.intp)
    i_level = _PAIR_TO_LEVEL[2 * groups[:, 0] + groups[:, 1]]
    q_level = _PAIR_TO_LEVEL[2 * groups[:, 2] + groups[:, 3]]
    return (i_level + 1j * q_level) / QAM16_SCALE


def _decide_levels(x: np.ndarray) -> np.ndarray:
    # thresholds at -2, 0, 2 in level units; ties go to the lower level
    return (x > -2.0).astype(np.intp) + (x > 0.0) + (x > 2.0)


def demap_qam16(symbols) -> np.ndarray:
    """Hard-decision demapping of unit-energy 16QAM symbols to bits."""
    s = np.asarray(symbols, dtype=np.complex128).ravel() * QAM16_SCALE
    i_idx = _decide_levels(s.real)
    q_idx = _decide_levels(s.imag)
    out = np.empty((s.size, 4), dtype=np.uint8)
    out[:, 0:2] = _LEVEL_BITS[i_idx]
    out[:, 2:4] = _LEVEL_BITS[q_idx]
    return out.ravel()


def qam16_constellation() -> np.ndarray:
    """The 16 constellation points, indexed by the integer value of their 4 bits."""
    codes = np.arange(16)
    bits = ((codes[:, None] >> np.arange(3, -1, -1)) & 1).astype(np.uint8)
    return map_bits_to_qam16(bits.ravel())


def nearest_symbol_index(symbols) -> np.ndarray:
    """Index into :func:`qam16_constellation` of the nearest point."""
    bits = demap_qam16(symbols).reshape(-1, 4).astype(np.intp)
    return bits @ np.array([8, 4, 2, 1])


def upsample(symbols, sps: int, symbol_rate_baud: float = 3.0e10) -> ComplexSignal:
    """Zero-insertion upsampling by ``sps``."""
    if sps < 2:
        raise ConfigError("sps must be >= 2")
    s = np.asarray(symbols, dtype=np.complex128)
    out = np.zeros(s.shape[:-1] + (s.shape[-1] * sps,), dtype=np.complex128)
    out[..., ::sps] = s
    return ComplexSignal(out, symbol_rate_baud * sps)


def rrc_taps(rolloff: float, span_symbols: int, sps: int) -> np.ndarray:
    """Root-raised-cosine impulse response with unit energy.

    Returns ``span_symbols * sps + 1`` symmetric taps. The points t = 0 and
    t = +-T/(4*rolloff) use their analytic limits.
    """
    if not 0 < rolloff <= 1:
        raise ConfigError("rolloff must lie in (0, 1]")
    if span_symbols <= 0 or span_symbols % 2:
        raise ConfigError("span_symbols must be a positive even integer")
    if sps < 1:
        raise ConfigError("sps must be positive")
    b = float(rolloff)
    half = span_symbols * sps // 2
    n = np.arange(-half, half + 1)
    t = n / sps
    h = np.empty(t.shape)

    at_zero = n == 0
    # removable singularity at t = +-1/(4b)
    at_pole = np.isclose(np.abs(4.0 * b * t), 1.0, rtol=0.0, atol=1e-12)
    regular = ~(at_zero | at_pole)

    h[at_zero] = 1.0 - b + 4.0 * b / np.pi
    h[at_pole] = (b / np.sqrt(2.0)) * (
        (1.0 + 2.0 / np.pi) * np.sin(np.pi / (4.0 * b))
        + (1.0 - 2.0 / np.pi) * np.cos(np.pi / (4.0 * b))
    )
    tr = t[regular]
    h[regular] = (
        np.sin(np.pi * tr * (1.0 - b)) + 4.0 * b * tr * np.cos(np.pi * tr * (1.0 + b))
    ) / (np.pi * tr * (1.0 - (4.0 * b * tr) ** 2))

    # enforce exact symmetry before normalizing
    h = 0.5 * (h + h[::-1])
    return h / np.sqrt(np.sum(h * h))


def _as_array(signal):
    if isinstance(signal, ComplexSignal):
        return signal.samples
    return np.asarray(signal, dtype=np.complex128)


def _rewrap(template, samples):
    if isinstance(template, ComplexSignal):
        return template.with_samples(samples)
    return samples


def fir_filter(signal, taps, circular: bool = False, method: str = "direct"):
    """Filter along the last axis with the group delay removed.

    The output has the input's length. Sample ``n`` of the output is
    ``sum_k taps[k] * x[n + d - k]`` with ``d = (len(taps) - 1) // 2``. With
    ``circular=True`` the input is treated as one period of a periodic
    waveform; otherwise samples outside the input are zero.

    ``method`` selects direct (``"direct"``) or FFT (``"fft"``) convolution.
    """
    h = np.asarray(taps, dtype=np.float64)
    if h.ndim != 1 or h.size == 0:
        raise InputShapeError("taps must be a non-empty 1-D sequence")
    x = _as_array(signal)
    n_taps = h.size
    d = (n_taps - 1) // 2
    length = x.shape[-1]

    if method == "direct":
        if circular:
            pad = (n_taps - 1 - d, d)
            xp = np.pad(x, [(0, 0)] * (x.ndim - 1) + [pad], mode="wrap")
            conv = lambda row: np.convolve(row, h, mode="valid")
            y = np.apply_along_axis(conv, -1, xp)
        else:
            conv = lambda row: np.convolve(row, h, mode="full")[d : d + length]
            y = np.apply_along_axis(conv, -1, x)
    elif method == "fft":
        if circular:
            kernel = np.zeros(length)
            # tap k sits at lag (k - d) mod length
            np.add.at(kernel, (np.arange(n_taps) - d) % length, h)
            y = np.fft.ifft(np.fft.fft(x, axis=-1) * np.fft.fft(kernel), axis=-1)
        else:
            nfft = 1 << int(np.ceil(np.log2(length + n_taps - 1)))
            full = np.fft.ifft(
                np.fft.fft(x, nfft, axis=-1) * np.fft.fft(h, nfft), axis=-1
            )
            y = full[..., d : d + length]
    else:
        raise ConfigError(f"unknown convolution method {method!r}")
    return _rewrap(signal, y)


def mean_power(signal) -> float:
    """Mean |x|^2 in watts over all samples."""
    x = _as_array(signal)
    return float(np.mean(np.abs(x) ** 2))


def dbm_to_watts(power_dbm: float) -> float:
    return 10.0 ** (power_dbm / 10.0) / 1000.0


def watts_to_dbm(power_w: float) -> float:
    return 10.0 * np.log10(power_w * 1000.0)


def set_average_power(signal, power_dbm: float):
    """Scale by one positive real factor so the mean power equals ``power_dbm``."""
    x = _as_array(signal)
    p = np.mean(np.abs(x) ** 2)
    if p == 0:
        raise DegenerateInputError("cannot normalize an all-zero signal")
    return _rewrap(signal, x * np.sqrt(dbm_to_watts(power_dbm) / p))


def downsample(signal, sps: int, phase_offset: int = 0) -> np.ndarray:
    """Take samples ``phase_offset + k*sps`` along the last axis."""
    if sps < 1:
        raise ConfigError("sps must be positive")
    if not 0 <= phase_offset < sps:
        raise ConfigError("phase_offset must lie in [0, sps)")
    return np.array(_as_array(signal)[..., phase_offset::sps])


def count_bit_errors(tx_bits, rx_bits) -> BitErrorCount:
    tx = np.asarray(tx_bits).ravel()
    rx = np.asarray(rx_bits).ravel()
    if tx.shape != rx.shape:
        raise InputShapeError(f"bit streams differ in length: {tx.size} vs {rx.size}")
    if tx.size == 0:
        raise InputShapeError("bit streams are empty")
    errors = int(np.count_nonzero(tx != rx))
    return BitErrorCount(errors, tx.size, errors / tx.size)


def transmit(bits, cfg: TxConfig, circular: bool = True) -> ComplexSignal:
    """Map -> upsample -> RRC -> launch-power normalization.

    ``bits`` may be 1-D or shaped ``(n_blocks, n_bits)``; blocks are shaped
    independently. With ``circular=True`` each block is pulse-shaped as one
    period of a periodic waveform, matching the fiber's periodic boundary.
    Power is normalized per block.
    """
    b = np.asarray(bits, dtype=np.uint8)
    symbols = np.stack([map_bits_to_qam16(row) for row in np.atleast_2d(b)])
    if b.ndim == 1:
        symbols = symbols[0]
    up = upsample(symbols, cfg.sps, cfg.symbol_rate_baud)
    taps = rrc_taps(cfg.rolloff, cfg.rrc_span_symbols, cfg.sps)
    shaped = fir_filter(up, taps, circular=circular).samples
    p = np.mean(np.abs(shaped) ** 2, axis=-1, keepdims=True)
    if np.any(p == 0):
        raise DegenerateInputError("shaped block has zero power")
    shaped = shaped * np.sqrt(dbm_to_watts(cfg.launch_power_dbm) / p)
    return ComplexSignal(shaped, cfg.sample_rate_hz)
