import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fibergan.errors import ConfigError, DegenerateInputError, InputShapeError
from fibergan.sigproc import (
    ComplexSignal,
    TxConfig,
    count_bit_errors,
    demap_qam16,
    downsample,
    fir_filter,
    map_bits_to_qam16,
    mean_power,
    qam16_constellation,
    random_bits,
    rrc_taps,
    set_average_power,
    transmit,
    upsample,
)

S10 = np.sqrt(10.0)


def test_map_corner_symbols():
    assert map_bits_to_qam16([0, 0, 0, 0])[0] == (-3 - 3j) / S10
    assert map_bits_to_qam16([1, 1, 1, 1])[0] == (1 + 1j) / S10


def test_gray_levels_per_axis():
    table = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}
    for (b0, b1), level in table.items():
        s = map_bits_to_qam16([b0, b1, 0, 0])[0]
        assert s.real * S10 == pytest.approx(level)
        s = map_bits_to_qam16([0, 0, b0, b1])[0]
        assert s.imag * S10 == pytest.approx(level)


def test_unit_mean_energy():
    assert np.mean(np.abs(qam16_constellation()) ** 2) == pytest.approx(1.0, abs=1e-15)


def test_map_rejects_bad_length():
    with pytest.raises(InputShapeError):
        map_bits_to_qam16([0, 1, 1])


def test_demap_round_trip_all_4_symbol_patterns():
    # every 16-bit pattern, i.e. all 65536 4-symbol words
    codes = np.arange(1 << 16, dtype=np.uint32)
    bits = ((codes[:, None] >> np.arange(15, -1, -1)) & 1).astype(np.uint8).ravel()
    assert np.array_equal(demap_qam16(map_bits_to_qam16(bits)), bits)


def test_demap_nearest_point():
    assert list(demap_qam16([(0.9 + 0.9j) / S10])) == [1, 1, 1, 1]


def test_demap_tie_goes_to_lower_level():
    # I = 0 lies between -1 and +1; Q = +1 level
    bits = demap_qam16([(0.0 + 1.0j) / S10])
    assert list(bits[:2]) == [0, 1]  # -1 level
    assert list(bits[2:]) == [1, 1]


def test_upsample_definition():
    out = upsample([1 + 1j, 2 - 1j], 4)
    assert np.array_equal(out.samples, [1 + 1j, 0, 0, 0, 2 - 1j, 0, 0, 0])
    assert out.sample_rate_hz == 1.2e11


def test_upsample_energy_and_sps_check():
    s = np.exp(1j * np.arange(50))
    assert np.sum(np.abs(upsample(s, 4).samples) ** 2) == pytest.approx(np.sum(np.abs(s) ** 2))
    with pytest.raises(ConfigError):
        upsample(s, 1)


def _rrc_reference(beta, t):
    # textbook form evaluated point by point; limits from L'Hopital
    if t == 0:
        return 1 - beta + 4 * beta / np.pi
    if abs(abs(4 * beta * t) - 1) < 1e-12:
        return beta / np.sqrt(2) * ((1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                                    + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta)))
    return (np.sin(np.pi * t * (1 - beta)) + 4 * beta * t * np.cos(np.pi * t * (1 + beta))) / (
        np.pi * t * (1 - (4 * beta * t) ** 2))


@pytest.mark.parametrize("beta,span,sps", [(0.1, 32, 4), (0.25, 8, 4), (0.5, 16, 8), (1.0, 6, 2)])
def test_rrc_shape_symmetry_energy(beta, span, sps):
    h = rrc_taps(beta, span, sps)
    assert h.size == span * sps + 1
    assert np.array_equal(h, h[::-1])
    assert np.sum(h**2) == pytest.approx(1.0, abs=1e-12)
    ref = np.array([_rrc_reference(beta, n / sps) for n in range(-(span * sps // 2), span * sps // 2 + 1)])
    np.testing.assert_allclose(h, ref / np.linalg.norm(ref), rtol=1e-9, atol=1e-14)


def test_rrc_singular_points_are_continuous():
    # rolloff 0.25 with sps 4 hits t = 1/(4*0.25) = 1 exactly
    h = rrc_taps(0.25, 8, 4)
    c = h.size // 2
    k = 4
    near = _rrc_reference(0.25, 1 + 1e-7) / _rrc_reference(0.25, 0) * h[c]
    assert h[c + k] == pytest.approx(near, rel=1e-5)


def test_rrc_rejects_bad_rolloff():
    with pytest.raises(ConfigError):
        rrc_taps(0.0, 32, 4)
    with pytest.raises(ConfigError):
        rrc_taps(1.5, 32, 4)


def _cascade_isi(beta, span, sps):
    h = rrc_taps(beta, span, sps)
    c = np.convolve(h, h)
    mid = c.size // 2
    off = np.concatenate([c[mid::-sps][1:], c[mid::sps][1:]])
    return np.max(np.abs(off)) / c[mid]


def test_rrc_cascade_is_nyquist_up_to_truncation():
    # brute-force convolution oracle; the frozen value is the truncation ISI
    # of a 32-symbol rolloff-0.1 RRC pair (peak at the 16-symbol lag)
    isi = _cascade_isi(0.1, 32, 4)
    assert isi == pytest.approx(3.4173e-3, rel=1e-3)
    # ISI falls as the span grows
    assert _cascade_isi(0.1, 128, 4) < _cascade_isi(0.1, 64, 4) < isi
    assert _cascade_isi(0.1, 128, 4) < 1e-3


@pytest.mark.xfail(strict=True, reason="a 32-symbol rolloff-0.1 RRC pair has 3.4e-3 truncation ISI")
def test_rrc_cascade_isi_below_1e_3_at_span_32():
    assert _cascade_isi(0.1, 32, 4) < 1e-3


def _sig(x):
    return ComplexSignal(x, 1.0)


def test_fir_identity_cases():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(33) + 1j * rng.standard_normal(33)
    np.testing.assert_array_equal(fir_filter(_sig(x), [1.0]).samples, x)
    np.testing.assert_allclose(fir_filter(_sig(x), [0.0, 1.0, 0.0]).samples, x, atol=0)


def test_fir_impulse_returns_centered_taps():
    taps = np.array([0.1, 0.2, 0.5, 0.2, 0.1])
    x = np.zeros(11, complex)
    x[5] = 1
    y = fir_filter(_sig(x), taps).samples
    np.testing.assert_allclose(y[3:8].real, taps)
    assert np.all(y[:3] == 0) and np.all(y[8:] == 0)


@pytest.mark.parametrize("circular", [False, True])
def test_fir_direct_and_fft_agree(circular):
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 500)) + 1j * rng.standard_normal((3, 500))
    h = rrc_taps(0.1, 32, 4)
    a = fir_filter(x, h, circular=circular, method="direct")
    b = fir_filter(x, h, circular=circular, method="fft")
    assert np.linalg.norm(a - b) <= 1e-10 * np.linalg.norm(a)


def test_fir_circular_matches_periodic_extension():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    h = rng.standard_normal(9)
    long = fir_filter(np.tile(x, 5), h)
    np.testing.assert_allclose(fir_filter(x, h, circular=True), long[128:192], atol=1e-13)


def test_fir_linearity():
    rng = np.random.default_rng(6)
    h = rng.standard_normal(17)
    x = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    y = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    c = 2.5 - 1.5j
    lhs = fir_filter(x + c * y, h)
    rhs = fir_filter(x, h) + c * fir_filter(y, h)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


def test_set_average_power_targets():
    rng = np.random.default_rng(7)
    s = _sig(rng.standard_normal(1000) + 1j * rng.standard_normal(1000))
    assert mean_power(set_average_power(s, 10)) == pytest.approx(0.010, rel=1e-12)
    assert mean_power(set_average_power(s, 0)) == pytest.approx(0.001, rel=1e-12)
    once = set_average_power(s, 10).samples
    twice = set_average_power(set_average_power(s, 10), 10).samples
    np.testing.assert_allclose(twice, once, rtol=1e-14)
    ratio = once / s.samples
    assert np.allclose(ratio.imag, 0) and np.all(ratio.real > 0)


def test_set_average_power_zero_signal():
    with pytest.raises(DegenerateInputError):
        set_average_power(_sig(np.zeros(8)), 10)


@given(st.floats(-30, 30), st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_set_average_power_property(dbm, seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal(64) + 1j * rng.standard_normal(64)
    p = mean_power(set_average_power(s, dbm))
    assert p == pytest.approx(10 ** (dbm / 10) / 1000, rel=1e-12)


def test_downsample():
    s = np.array([1 + 2j, -1j, 3, 0.5])
    np.testing.assert_array_equal(downsample(upsample(s, 4), 4, 0), s)
    x = np.array([1, 0, 0, 0, 2, 0, 0, 0], complex)
    np.testing.assert_array_equal(downsample(x, 4, 1), [0, 0])
    for n, off in itertools.product([7, 8, 9, 13], [0, 1, 3]):
        assert downsample(np.zeros(n), 4, off).size == (n - off + 3) // 4
    with pytest.raises(ConfigError):
        downsample(x, 4, 4)


def test_count_bit_errors():
    rng = np.random.default_rng(8)
    b = rng.integers(0, 2, 400000).astype(np.uint8)
    assert count_bit_errors(b, b) == (0, 400000, 0.0)
    flipped = b.copy()
    flipped[12345] ^= 1
    assert count_bit_errors(b, flipped).ber == 2.5e-6
    assert count_bit_errors(b, 1 - b).ber == 1.0
    with pytest.raises(InputShapeError):
        count_bit_errors(b, b[:-1])


def test_random_bits_deterministic():
    assert np.array_equal(random_bits(1000, 5), random_bits(1000, 5))
    assert not np.array_equal(random_bits(1000, 5), random_bits(1000, 6))


def test_tx_config_defaults():
    cfg = TxConfig()
    assert cfg.sample_rate_hz == 1.2e11
    assert cfg.n_taps == 129
    with pytest.raises(ConfigError):
        TxConfig(sps=1)


def _chain_error(circular, span=32):
    cfg = TxConfig(rrc_span_symbols=span)
    bits = random_bits(4 * 2048, 11)
    sym = map_bits_to_qam16(bits)
    h = rrc_taps(cfg.rolloff, cfg.rrc_span_symbols, cfg.sps)
    tx = fir_filter(upsample(sym, 4), h, circular=circular)
    rx = downsample(fir_filter(tx, h, circular=circular), 4, 0)
    sl = slice(None) if circular else slice(40, -40)
    return np.linalg.norm(rx[sl] - sym[sl]) / np.linalg.norm(sym[sl])


def test_tx_rx_chain_back_to_back():
    # truncation of the 32-symbol filters is the only error source
    assert _chain_error(circular=True) < 8e-3
    assert _chain_error(circular=False) < 8e-3
    assert _chain_error(circular=True, span=128) < 1e-3


@pytest.mark.xfail(strict=True, reason="32-symbol RRC truncation leaves ~6.7e-3 relative error")
def test_tx_rx_chain_error_below_1e_3_at_span_32():
    assert _chain_error(circular=True) < 1e-3


def test_transmit_sets_launch_power_per_block():
    cfg = TxConfig(launch_power_dbm=10.0)
    bits = np.stack([random_bits(4 * 256, s) for s in range(3)])
    sig = transmit(bits, cfg)
    assert sig.samples.shape == (3, 1024)
    np.testing.assert_allclose(np.mean(np.abs(sig.samples) ** 2, axis=-1), 0.01, rtol=1e-12)


def test_complex_signal_validation():
    with pytest.raises(InputShapeError):
        ComplexSignal([], 1.0)
    with pytest.raises(InputShapeError):
        ComplexSignal([np.nan], 1.0)
    with pytest.raises(ConfigError):
        ComplexSignal([1.0], 0.0)
    s = ComplexSignal([1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        s.samples[0] = 3
