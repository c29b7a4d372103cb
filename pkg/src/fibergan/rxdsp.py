"""Receiver DSP: matched filter, CD compensation, digital backpropagation, decisions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fft as _fft
from .errors import ConfigError, InputShapeError
from .fiber import FiberParams, dispersion_phase, split_step, step_sizes
from .sigproc import (
    ComplexSignal,
    TxConfig,
    count_bit_errors,
    demap_qam16,
    downsample,
    fir_filter,
    map_bits_to_qam16,
    rrc_taps,
)

MODES = ("none", "cd_only", "dbp")


@dataclass(frozen=True)
class DspMode:
    mode: str = "none"
    dbp_steps_per_km: float = 100.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "dbp" and not self.dbp_steps_per_km > 0:
            raise ConfigError("dbp_steps_per_km must be positive")


@dataclass(frozen=True)
class RxResult:
    bits: np.ndarray
    errors: int
    total: int
    ber: float
    constellation: np.ndarray
    scale: complex


def cd_compensate(signal: ComplexSignal, beta2: float, length_m: float,
                  backend: str = "numpy") -> ComplexSignal:
    """Undo accumulated dispersion beta2*length in one frequency-domain pass."""
    if length_m == 0:
        return signal
    x = signal.samples
    h = dispersion_phase(x.shape[-1], signal.sample_rate_hz, -beta2, length_m)
    return signal.with_samples(_fft.ifft(_fft.fft(x, backend) * h, backend))


def dbp(signal: ComplexSignal, params: FiberParams, steps_per_km: float = 100.0,
        backend: str = "numpy") -> ComplexSignal:
    """Digital backpropagation over ``params.length_km``.

    Uses steps of ``1/steps_per_km`` km (last one short), run in reverse with
    negated beta2 and gamma and inverse attenuation. When the step grid
    matches the forward run, this is the forward solver's exact inverse.
    """
    if not steps_per_km > 0:
        raise ConfigError("steps_per_km must be positive")
    steps = step_sizes(params.length_km, 1.0 / steps_per_km)
    out = split_step(signal.samples, signal.sample_rate_hz, steps, params.beta2,
                     params.gamma, params.alpha, inverse=True, backend=backend)
    return signal.with_samples(out)


def align_and_decide(rx_symbols, ref_symbols):
    """Apply the least-squares complex gain <ref, rx>/<rx, rx>, then demap.

    Returns ``(scaled_symbols, bits, gain)``.
    """
    rx = np.asarray(rx_symbols, dtype=np.complex128).ravel()
    ref = np.asarray(ref_symbols, dtype=np.complex128).ravel()
    if rx.shape != ref.shape:
        raise InputShapeError("rx and reference symbol counts differ")
    if rx.size < 64:
        raise InputShapeError("need at least 64 symbols to align")
    energy = np.vdot(rx, rx).real
    gain = np.vdot(rx, ref) / energy if energy > 0 else 1.0 + 0j
    scaled = gain * rx
    return scaled, demap_qam16(scaled), complex(gain)


def matched_filter(signal: ComplexSignal, tx: TxConfig, circular: bool = True) -> ComplexSignal:
    return fir_filter(signal, rrc_taps(tx.rolloff, tx.rrc_span_symbols, tx.sps),
                      circular=circular)


def equalize(signal: ComplexSignal, mode: DspMode, tx: TxConfig, params: FiberParams,
             backend: str = "numpy") -> np.ndarray:
    """Compensation per ``mode`` and matched filter; returns symbol-rate samples.

    DBP runs at the full sample rate before the matched filter.
    """
    if mode.mode == "dbp":
        signal = dbp(signal, params, mode.dbp_steps_per_km, backend)
    elif mode.mode == "cd_only":
        signal = cd_compensate(signal, params.beta2, params.length_m, backend)
    return downsample(matched_filter(signal, tx), tx.sps, 0)


def run_rx_chain(signal: ComplexSignal, mode: DspMode, tx: TxConfig, params: FiberParams,
                 ref_bits, keep=None, backend: str = "numpy") -> RxResult:
    """Matched filter, compensation, symbol sampling, alignment, BER.

    ``ref_bits`` are the transmitted bits of the whole signal. ``keep``
    optionally selects the symbols (a slice, index array or boolean mask over
    the flattened symbol sequence) that enter the alignment and the count.
    2-D signals are processed block by block with one shared gain.
    """
    symbols = equalize(signal, mode, tx, params, backend).ravel()
    ref_bits = np.asarray(ref_bits, dtype=np.uint8).ravel()
    ref = map_bits_to_qam16(ref_bits)
    if ref.size != symbols.size:
        raise InputShapeError("reference bits do not match the received symbol count")
    if keep is not None:
        symbols = symbols[keep]
        ref = ref[keep]
        ref_bits = ref_bits.reshape(-1, 4)[keep].ravel()
    scaled, bits, gain = align_and_decide(symbols, ref)
    errors, total, ber = count_bit_errors(ref_bits, bits)
    return RxResult(bits, errors, total, ber, scaled, gain)
