"""Single-polarization fiber channel solved by the symmetric split-step Fourier method.

The field envelope A(z, t) (sqrt(W)) obeys

    dA/dz = -(alpha/2) A - i (beta2/2) d2A/dt2 + i gamma |A|^2 A

Each step of length dz applies half the dispersion in the frequency domain,
the full nonlinear phase (with the attenuation folded into an effective
length) in the time domain, then the other half of the dispersion. Adjacent
half-steps are merged so a step costs one FFT pair. Boundaries are periodic.

All functions work along the last axis, so a ``(n_blocks, n_samples)``
stack propagates every block at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import fft as _fft
from .errors import ConfigError, DegenerateInputError
from .sigproc import ComplexSignal

SPEED_OF_LIGHT = 299_792_458.0
_DB_PER_NEPER_POWER = 10.0 * math.log10(math.e)


@dataclass(frozen=True)
class FiberParams:
    length_km: float = 0.0
    step_km: float = 0.01
    dispersion_ps_nm_km: float = 16.75
    gamma_per_w_km: float = 1.3
    alpha_db_km: float = 0.2
    wavelength_nm: float = 1550.0

    def __post_init__(self):
        if self.length_km < 0:
            raise ConfigError("length_km must be >= 0")
        if not self.step_km > 0:
            raise ConfigError("step_km must be positive")
        if self.length_km > 0 and self.step_km > self.length_km:
            raise ConfigError("step_km must not exceed length_km")
        if self.gamma_per_w_km < 0:
            raise ConfigError("gamma_per_w_km must be >= 0")
        if self.alpha_db_km < 0:
            raise ConfigError("alpha_db_km must be >= 0")
        if not self.wavelength_nm > 0:
            raise ConfigError("wavelength_nm must be positive")
        for name in ("length_km", "step_km", "dispersion_ps_nm_km",
                     "gamma_per_w_km", "alpha_db_km", "wavelength_nm"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def beta2(self) -> float:
        """Group-velocity dispersion in s^2/m."""
        return beta2_from_dispersion(self.dispersion_ps_nm_km, self.wavelength_nm)

    @property
    def gamma(self) -> float:
        """Nonlinear coefficient in 1/(W m)."""
        return self.gamma_per_w_km * 1e-3

    @property
    def alpha(self) -> float:
        """Power attenuation coefficient in 1/m."""
        return self.alpha_db_km / _DB_PER_NEPER_POWER * 1e-3

    @property
    def length_m(self) -> float:
        return self.length_km * 1e3

    def steps_m(self) -> np.ndarray:
        return step_sizes(self.length_km, self.step_km)

    @property
    def n_steps(self) -> int:
        return len(self.steps_m())


@dataclass(frozen=True)
class NoiseConfig:
    enabled: bool = True
    snr_db: float = 26.0
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError("snr_db must be finite (or +inf to disable)")
        if self.seed < 0:
            raise ConfigError("seed must be unsigned")

    @property
    def active(self) -> bool:
        return self.enabled and self.snr_db != math.inf


NO_NOISE = NoiseConfig(enabled=False)


def step_sizes(length_km: float, step_km: float) -> np.ndarray:
    """Step lengths in metres: ``ceil(length/step)`` steps, the last possibly short."""
    if length_km <= 0:
        return np.zeros(0)
    if not step_km > 0:
        raise ConfigError("step_km must be positive")
    ratio = length_km / step_km
    # 80/0.01 evaluates to 7999.999...; snap ratios within rounding of an integer
    n = round(ratio) if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) else math.ceil(ratio)
    n = max(n, 1)
    steps = np.full(n, step_km * 1e3)
    steps[-1] = length_km * 1e3 - step_km * 1e3 * (n - 1)
    return steps


def beta2_from_dispersion(dispersion_ps_nm_km: float, wavelength_nm: float) -> float:
    """beta2 = -D lambda^2 / (2 pi c), returned in s^2/m."""
    if not wavelength_nm > 0:
        raise ConfigError("wavelength_nm must be positive")
    d_si = dispersion_ps_nm_km * 1e-6  # ps/(nm km) -> s/m^2
    lam = wavelength_nm * 1e-9
    return -d_si * lam**2 / (2.0 * math.pi * SPEED_OF_LIGHT)


def _samples(signal):
    if isinstance(signal, ComplexSignal):
        return signal.samples
    return np.asarray(signal, dtype=np.complex128)


def dispersion_phase(n: int, sample_rate_hz: float, beta2: float, dz_m: float) -> np.ndarray:
    """All-pass transfer function exp(i beta2/2 w^2 dz) in FFT bin order."""
    w = _fft.angular_frequencies(n, sample_rate_hz)
    return np.exp(0.5j * beta2 * dz_m * w**2)


def dispersion_step(signal: ComplexSignal, beta2: float, dz_m: float,
                    backend: str = "numpy") -> ComplexSignal:
    x = signal.samples
    h = dispersion_phase(x.shape[-1], signal.sample_rate_hz, beta2, dz_m)
    return signal.with_samples(_fft.ifft(_fft.fft(x, backend) * h, backend))


def effective_length(alpha: float, dz_m: float) -> float:
    if alpha == 0:
        return dz_m
    return -math.expm1(-alpha * dz_m) / alpha


def _nl_forward(a, gamma, dz_m, alpha):
    if gamma:
        a = a * np.exp(1j * gamma * effective_length(alpha, dz_m) * (a.real**2 + a.imag**2))
    if alpha:
        a = a * math.exp(-0.5 * alpha * dz_m)
    return a


def _nl_inverse(a, gamma, dz_m, alpha):
    # gain first restores |A| at the start of the forward step
    if alpha:
        a = a * math.exp(0.5 * alpha * dz_m)
    if gamma:
        a = a * np.exp(-1j * gamma * effective_length(alpha, dz_m) * (a.real**2 + a.imag**2))
    return a


def nonlinear_step(signal: ComplexSignal, gamma: float, dz_m: float,
                   alpha: float = 0.0) -> ComplexSignal:
    """SPM phase rotation over ``dz_m`` with attenuation.

    ``gamma`` is in 1/(W m) and ``alpha`` is the power attenuation in 1/m.
    The phase uses the attenuation-weighted effective length
    ``(1 - exp(-alpha dz)) / alpha``; the field amplitude then drops by
    ``exp(-alpha dz / 2)``.
    """
    return signal.with_samples(_nl_forward(signal.samples, gamma, dz_m, alpha))


def split_step(samples, sample_rate_hz: float, steps_m, beta2: float, gamma: float,
               alpha: float, inverse: bool = False, backend: str = "numpy") -> np.ndarray:
    """Run the symmetric split-step loop over ``steps_m``.

    With ``inverse=True`` the steps run in reverse order with every sub-step
    replaced by its exact inverse (negated beta2 and gamma, gain instead of
    loss), which undoes a forward run over the same step list.
    """
    a = np.asarray(samples, dtype=np.complex128)
    steps = np.asarray(steps_m, dtype=np.float64)
    if steps.size == 0:
        return a.copy()
    _fft._check_length(a.shape[-1])
    if inverse:
        steps = steps[::-1]
        sign, nl = -1.0, _nl_inverse
    else:
        sign, nl = 1.0, _nl_forward

    w2 = _fft.angular_frequencies(a.shape[-1], sample_rate_hz) ** 2
    cache: dict[float, np.ndarray] = {}

    def phase(dz):
        h = cache.get(dz)
        if h is None:
            h = cache[dz] = np.exp(0.5j * sign * beta2 * dz * w2)
        return h

    n = steps.size
    a = _fft.ifft(_fft.fft(a, backend) * phase(0.5 * steps[0]), backend)
    for i in range(n):
        dz = float(steps[i])
        a = nl(a, gamma, dz, alpha)
        half = 0.5 * dz + (0.5 * float(steps[i + 1]) if i + 1 < n else 0.0)
        if beta2 != 0.0:
            a = _fft.ifft(_fft.fft(a, backend) * phase(half), backend)
    return a


def add_awgn(signal, snr_db: float, seed: int):
    """Add circular complex Gaussian noise at ``snr_db`` per sample.

    The noise variance is ``mean_power / 10**(snr_db/10)`` where the mean
    power is taken per row along the last axis. ``snr_db = inf`` returns the
    input unchanged.
    """
    x = _samples(signal)
    if snr_db == math.inf:
        return signal
    p = np.mean(x.real**2 + x.imag**2, axis=-1, keepdims=True)
    if np.any(p == 0):
        raise DegenerateInputError("cannot set an SNR on an all-zero signal")
    rng = np.random.default_rng(seed)
    sigma = np.sqrt(p / 10.0 ** (snr_db / 10.0) / 2.0)
    noise = sigma * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    y = x + noise
    if isinstance(signal, ComplexSignal):
        return signal.with_samples(y)
    return y


def propagate_ssfm(signal: ComplexSignal, params: FiberParams,
                   noise: NoiseConfig = NO_NOISE, backend: str = "numpy") -> ComplexSignal:
    """Propagate through the fiber and optionally add receiver noise.

    Runs ``ceil(length/step)`` symmetric steps. If ``noise`` is active,
    AWGN is added once at the output, referenced to the output mean power.
    """
    if not isinstance(params, FiberParams):
        raise ConfigError("params must be a FiberParams")
    out = split_step(signal.samples, signal.sample_rate_hz, params.steps_m(),
                     params.beta2, params.gamma, params.alpha, backend=backend)
    result = signal.with_samples(out)
    if noise.active:
        result = add_awgn(result, noise.snr_db, noise.seed)
    return result
