"""Power-of-two FFT used by the split-step solver and receiver DSP.

Convention: ``fft`` is unnormalized, ``ifft`` carries the 1/N factor, so
``ifft(fft(x)) == x`` and ``sum|x|^2 == sum|X|^2 / N``. Both transforms act on
the last axis.

Two kernels sit behind the same contract: an iterative radix-2
decimation-in-time transform written here (``backend="radix2"``) and numpy's
pocketfft (``backend="numpy"``, the default, several times faster at the
4096-point sizes the solver runs thousands of times).
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import ConfigError, InputShapeError

BACKENDS = ("numpy", "radix2")


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def _check_length(n: int):
    if not is_power_of_two(n):
        raise InputShapeError(f"FFT length must be a power of two, got {n}")


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.flags.writeable = False
    return rev


@lru_cache(maxsize=64)
def _twiddles(size: int, sign: int) -> np.ndarray:
    k = np.arange(size // 2)
    w = np.exp(sign * 2j * np.pi * k / size)
    w.flags.writeable = False
    return w


def radix2_fft(x, inverse: bool = False) -> np.ndarray:
    """Iterative radix-2 DIT transform along the last axis (no 1/N scaling)."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    _check_length(n)
    lead = a.shape[:-1]
    a = a[..., _bit_reversal(n)]
    sign = 1 if inverse else -1
    size = 2
    while size <= n:
        half = size // 2
        blocks = a.reshape(lead + (n // size, size))
        even = blocks[..., :half]
        odd = blocks[..., half:] * _twiddles(size, sign)
        a = np.concatenate((even + odd, even - odd), axis=-1).reshape(lead + (n,))
        size *= 2
    return a


def fft(x, backend: str = "numpy") -> np.ndarray:
    a = np.asarray(x, dtype=np.complex128)
    _check_length(a.shape[-1])
    if backend == "numpy":
        return np.fft.fft(a, axis=-1)
    if backend == "radix2":
        return radix2_fft(a)
    raise ConfigError(f"unknown FFT backend {backend!r}")


def ifft(spectrum, backend: str = "numpy") -> np.ndarray:
    a = np.asarray(spectrum, dtype=np.complex128)
    n = a.shape[-1]
    _check_length(n)
    if backend == "numpy":
        return np.fft.ifft(a, axis=-1)
    if backend == "radix2":
        return radix2_fft(a, inverse=True) / n
    raise ConfigError(f"unknown FFT backend {backend!r}")


def angular_frequencies(n: int, sample_rate_hz: float) -> np.ndarray:
    """Angular frequency (rad/s) of each FFT bin, in FFT order."""
    return 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / sample_rate_hz)
