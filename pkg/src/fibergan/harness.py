"""Dataset generation, evaluation and benchmarking around the fiber channel and surrogate.

A dataset is a list of blocks. Each block is an independently seeded,
periodically pulse-shaped waveform whose length in samples is a power of two,
paired with its channel output. ``n_symbols`` is split into full blocks of
``block_symbols`` plus, for any remainder, its binary decomposition into
smaller power-of-two blocks, so the stored sample count is exact.

Symbols within ``edge_symbols`` of a block end are excluded from training
pairs and from every reported metric.
"""

from __future__ import annotations

import csv
import io
import os
import struct
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import fft as _fft
from .errors import ConfigError, FormatError, InputShapeError
from .fiber import FiberParams, NoiseConfig, add_awgn, split_step
from .rxdsp import DspMode, align_and_decide, equalize
from .sigproc import (
    ComplexSignal,
    TxConfig,
    count_bit_errors,
    map_bits_to_qam16,
    random_bits,
    transmit,
)
from .surrogate import CganModel, WindowGeometry, build_conditions, build_targets, generate_channel_output

DATASET_MAGIC = b"FGDS"
DATASET_VERSION = 1
DEFAULT_BLOCK_SYMBOLS = 1024
MIN_EDGE_SYMBOLS = 16
_BITS_STREAM = 0

PUBLISHED_TIMING_ANCHORS = {
    "ssfm_80km_s": 459.0,
    "cgan_s_low": 2.0,
    "cgan_s_high": 3.0,
}

REPORT_HEADER = [
    "distance_km", "ber_ssfm", "ber_surrogate", "delta_ber", "err_ssfm",
    "err_surrogate", "total_bits", "t_ssfm_s", "t_surrogate_s",
]

SOURCE_KINDS = {"ssfm": 0, "cgan": 1, "fcnn": 2}
_KIND_NAMES = {v: k for k, v in SOURCE_KINDS.items()}
_INT_COLUMNS = {"err_ssfm", "err_surrogate", "total_bits"}


def worker_count() -> int:
    """Worker cap from FIBERGAN_THREADS (0 or unset means one per CPU)."""
    raw = os.environ.get("FIBERGAN_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"FIBERGAN_THREADS must be an integer, got {raw!r}") from exc
    if n < 0:
        raise ConfigError("FIBERGAN_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def default_edge_symbols(geometry: WindowGeometry = WindowGeometry()) -> int:
    return max(MIN_EDGE_SYMBOLS, geometry.past_symbols + geometry.future_symbols)


def block_layout(n_symbols: int, block_symbols: int, sps: int) -> list:
    """Symbol count of every block, in order."""
    if block_symbols < 1 or not _fft.is_power_of_two(block_symbols * sps):
        raise ConfigError("block_symbols * sps must be a power of two")
    if n_symbols < block_symbols:
        raise ConfigError("n_symbols must be at least block_symbols")
    sizes = [block_symbols] * (n_symbols // block_symbols)
    rest = n_symbols % block_symbols
    if rest:
        if not _fft.is_power_of_two(sps):
            raise ConfigError("a partial final block needs a power-of-two sps")
        for bit in range(rest.bit_length() - 1, -1, -1):
            if rest >> bit & 1:
                sizes.append(1 << bit)
    return sizes


def block_bits(seed: int, block_index: int, n_symbols: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, _BITS_STREAM, block_index])
    return random_bits(4 * n_symbols, ss)


def block_noise_seed(noise_seed: int, block_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([noise_seed, block_index])


@dataclass
class DatasetFile:
    """Paired tx/rx blocks plus everything needed to regenerate them."""

    tx_cfg: TxConfig
    fiber: FiberParams
    noise: NoiseConfig
    n_symbols: int
    block_symbols: int
    seed: int
    edge_symbols: int
    tx: list
    rx: list
    source: str = "ssfm"
    source_seed: int = 0
    source_name: str = ""

    def __post_init__(self):
        if len(self.tx) != len(self.rx):
            raise InputShapeError("tx and rx block counts differ")
        for t, r in zip(self.tx, self.rx):
            if t.shape != r.shape:
                raise InputShapeError("tx and rx block lengths differ")
        if self.source not in SOURCE_KINDS:
            raise ConfigError(f"unknown source {self.source!r}")

    @property
    def n_blocks(self) -> int:
        return len(self.tx)

    @property
    def sample_rate_hz(self) -> float:
        return self.tx_cfg.sample_rate_hz

    def block_symbol_counts(self) -> list:
        return [len(t) // self.tx_cfg.sps for t in self.tx]

    def bits(self, block_index: int) -> np.ndarray:
        n_sym = len(self.tx[block_index]) // self.tx_cfg.sps
        return block_bits(self.seed, block_index, n_sym)

    def interior(self, block_index: int) -> np.ndarray:
        n_sym = len(self.tx[block_index]) // self.tx_cfg.sps
        return np.arange(self.edge_symbols, max(n_sym - self.edge_symbols, self.edge_symbols))

    def tx_signal(self, block_index: int) -> ComplexSignal:
        return ComplexSignal(self.tx[block_index], self.sample_rate_hz)

    def rx_signal(self, block_index: int) -> ComplexSignal:
        return ComplexSignal(self.rx[block_index], self.sample_rate_hz)

    def with_rx(self, rx_blocks, source: str, source_seed: int = 0, source_name: str = "") -> "DatasetFile":
        return replace(self, rx=[np.asarray(r, dtype=np.complex128) for r in rx_blocks],
                       source=source, source_seed=source_seed, source_name=source_name)


def _propagate_group(tx: np.ndarray, fiber: FiberParams, sample_rate: float, workers: int):
    steps = fiber.steps_m()
    if workers <= 1 or len(tx) == 1:
        return split_step(tx, sample_rate, steps, fiber.beta2, fiber.gamma, fiber.alpha)
    chunks = np.array_split(tx, min(workers, len(tx)))
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = pool.map(lambda c: split_step(c, sample_rate, steps, fiber.beta2,
                                              fiber.gamma, fiber.alpha), chunks)
        return np.concatenate(list(parts))


def generate_dataset(tx_cfg: TxConfig, fiber: FiberParams, noise: NoiseConfig,
                     n_symbols: int, block_symbols: int = DEFAULT_BLOCK_SYMBOLS,
                     seed: int = 0, edge_symbols: int | None = None,
                     workers: int | None = None) -> DatasetFile:
    """Seeded bits -> transmitter -> split-step fiber (-> noise), block by block.

    Block ``b`` draws its bits from ``(seed, b)`` and its noise from
    ``(noise.seed, b)``, so results do not depend on ``workers``.
    """
    sizes = block_layout(n_symbols, block_symbols, tx_cfg.sps)
    if edge_symbols is None:
        edge_symbols = default_edge_symbols()
    workers = worker_count() if workers is None else max(1, workers)
    tx_blocks = [None] * len(sizes)
    rx_blocks = [None] * len(sizes)
    for size in sorted(set(sizes), reverse=True):
        which = [b for b, s in enumerate(sizes) if s == size]
        bits = np.stack([block_bits(seed, b, size) for b in which])
        tx = transmit(bits, tx_cfg).samples
        rx = _propagate_group(tx, fiber, tx_cfg.sample_rate_hz, workers)
        for row, b in enumerate(which):
            tx_blocks[b] = np.array(tx[row])
            out = rx[row]
            if noise.active:
                out = add_awgn(out, noise.snr_db, block_noise_seed(noise.seed, b))
            rx_blocks[b] = np.array(out)
    return DatasetFile(tx_cfg, fiber, noise, n_symbols, block_symbols, seed, edge_symbols,
                       tx_blocks, rx_blocks)


def regenerate_dataset(ds: DatasetFile) -> DatasetFile:
    """Rebuild an SSFM dataset from its metadata alone."""
    return generate_dataset(ds.tx_cfg, ds.fiber, ds.noise, ds.n_symbols, ds.block_symbols,
                            ds.seed, ds.edge_symbols)


def training_pairs(ds: DatasetFile, geometry: WindowGeometry = WindowGeometry(),
                   limit: int | None = None):
    """(conditions, targets) over the interior symbols of every block."""
    conds, targets = [], []
    count = 0
    for b in range(ds.n_blocks):
        idx = ds.interior(b)
        n_sym = len(ds.tx[b]) // geometry.sps
        idx = idx[(idx >= geometry.past_symbols) & (idx < n_sym - geometry.future_symbols)]
        if idx.size == 0:
            continue
        conds.append(build_conditions(ds.tx[b], idx, geometry))
        targets.append(build_targets(ds.rx[b], idx, geometry))
        count += idx.size
        if limit is not None and count >= limit:
            break
    if not conds:
        raise InputShapeError("dataset has no interior symbols")
    c, t = np.vstack(conds), np.vstack(targets)
    if limit is not None:
        c, t = c[:limit], t[:limit]
    return c, t


def surrogate_dataset(model: CganModel, ds: DatasetFile, seed: int = 0, name: str = "") -> DatasetFile:
    """Run the surrogate on every tx block of ``ds``."""
    if model.geometry.sps != ds.tx_cfg.sps:
        raise ConfigError("model sps does not match dataset sps")
    rx = []
    for b in range(ds.n_blocks):
        block_seed = np.random.SeedSequence([seed, b]).generate_state(1)[0]
        rx.append(generate_channel_output(model, ds.tx_signal(b), int(block_seed)).samples)
    kind = "fcnn" if model.is_fcnn else "cgan"
    return ds.with_rx(rx, kind, seed, name)


# -- dataset file -------------------------------------------------------------
# "FGDS", u32 version, then metadata:
#   tx:     f64 symbol_rate, u32 sps, f64 rolloff, u32 rrc_span, f64 power_dbm, u32 seed
#   fiber:  f64 length_km, f64 step_km, f64 D, f64 gamma, f64 alpha, f64 wavelength_nm
#   noise:  u32 enabled, f64 snr_db, u32 seed
#   layout: u32 n_symbols, u32 block_symbols, u32 seed, u32 edge_symbols
#   source: u32 kind (0 ssfm, 1 cgan, 2 fcnn), u32 source seed, u32 name length, utf-8 name
# u32 block count, then per block: u64 sample count, tx (re, im) f64 pairs, rx pairs.

_META = struct.Struct("<dIdIdI" "dddddd" "IdI" "IIII" "II")


def _u32(value, what):
    value = int(value)
    if not 0 <= value < 2**32:
        raise ConfigError(f"{what} must fit in an unsigned 32-bit field")
    return value


def dataset_to_bytes(ds: DatasetFile) -> bytes:
    t, f, n = ds.tx_cfg, ds.fiber, ds.noise
    buf = io.BytesIO()
    buf.write(DATASET_MAGIC)
    buf.write(struct.pack("<I", DATASET_VERSION))
    buf.write(_META.pack(
        t.symbol_rate_baud, t.sps, t.rolloff, t.rrc_span_symbols, t.launch_power_dbm,
        _u32(t.seed, "tx seed"),
        f.length_km, f.step_km, f.dispersion_ps_nm_km, f.gamma_per_w_km, f.alpha_db_km,
        f.wavelength_nm,
        int(n.enabled), n.snr_db, _u32(n.seed, "noise seed"),
        _u32(ds.n_symbols, "n_symbols"), _u32(ds.block_symbols, "block_symbols"),
        _u32(ds.seed, "seed"), _u32(ds.edge_symbols, "edge_symbols"),
        SOURCE_KINDS[ds.source], _u32(ds.source_seed, "source seed"),
    ))
    name = ds.source_name.encode("utf-8")
    buf.write(struct.pack("<I", len(name)))
    buf.write(name)
    buf.write(struct.pack("<I", ds.n_blocks))
    for tx, rx in zip(ds.tx, ds.rx):
        buf.write(struct.pack("<Q", len(tx)))
        buf.write(np.ascontiguousarray(tx, dtype="<c16").tobytes())
        buf.write(np.ascontiguousarray(rx, dtype="<c16").tobytes())
    return buf.getvalue()


def dataset_from_bytes(data: bytes) -> DatasetFile:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("dataset file is truncated")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != DATASET_MAGIC:
        raise FormatError("not a dataset file")
    (version,) = struct.unpack("<I", take(4))
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}")
    m = _META.unpack(take(_META.size))
    tx_cfg = TxConfig(m[0], m[1], m[2], m[3], m[4], m[5])
    fiber = FiberParams(m[6], m[7], m[8], m[9], m[10], m[11])
    noise = NoiseConfig(bool(m[12]), m[13], m[14])
    n_symbols, block_symbols, seed, edge = m[15:19]
    kind, source_seed = m[19], m[20]
    if kind not in _KIND_NAMES:
        raise FormatError(f"unknown source kind {kind}")
    (name_len,) = struct.unpack("<I", take(4))
    name = bytes(take(name_len)).decode("utf-8")
    (n_blocks,) = struct.unpack("<I", take(4))
    tx, rx = [], []
    for _ in range(n_blocks):
        (n,) = struct.unpack("<Q", take(8))
        tx.append(np.frombuffer(take(16 * n), dtype="<c16").astype(np.complex128))
        rx.append(np.frombuffer(take(16 * n), dtype="<c16").astype(np.complex128))
    if pos != len(view):
        raise FormatError("trailing bytes after the last block")
    return DatasetFile(tx_cfg, fiber, noise, n_symbols, block_symbols, seed, edge, tx, rx,
                       _KIND_NAMES[kind], source_seed, name)


def write_dataset(ds: DatasetFile, path):
    Path(path).write_bytes(dataset_to_bytes(ds))


def read_dataset(path) -> DatasetFile:
    return dataset_from_bytes(Path(path).read_bytes())


# -- evaluation ---------------------------------------------------------------

@dataclass
class EvalRow:
    distance_km: float
    ber_ssfm: float
    ber_surrogate: float
    delta_ber: float
    err_ssfm: int
    err_surrogate: int
    total_bits: int
    t_ssfm_s: float = float("nan")
    t_surrogate_s: float = float("nan")

    def __post_init__(self):
        # fixed column types keep write -> read -> write byte-stable
        for name in REPORT_HEADER:
            cast = int if name in _INT_COLUMNS else float
            setattr(self, name, cast(getattr(self, name)))

    def as_list(self):
        return [getattr(self, k) for k in REPORT_HEADER]


@dataclass
class ChainOutput:
    """Aligned interior symbols of every block, concatenated, plus decisions."""

    symbols: np.ndarray
    reference: np.ndarray
    bits: np.ndarray
    ref_bits: np.ndarray
    errors: int
    total: int
    ber: float


def check_pair(ds: DatasetFile, other: DatasetFile):
    if ds.n_blocks != other.n_blocks or any(
        a.shape != b.shape for a, b in zip(ds.tx, other.tx)
    ):
        raise InputShapeError("surrogate output is not aligned with the dataset")
    if ds.tx_cfg != other.tx_cfg or ds.seed != other.seed or ds.edge_symbols != other.edge_symbols:
        raise ConfigError("datasets were generated from different transmitter settings")
    for a, b in zip(ds.tx, other.tx):
        if not np.array_equal(a, b):
            raise ConfigError("datasets carry different transmitted waveforms")


def run_dataset_chain(ds: DatasetFile, mode: DspMode, rx_blocks=None) -> ChainOutput:
    """Apply the receiver chain to every block and decide the interior symbols.

    One least-squares gain is fitted over all interior symbols. Blocks of
    equal length are equalized together.
    """
    rx_blocks = ds.rx if rx_blocks is None else rx_blocks
    if len(rx_blocks) != ds.n_blocks:
        raise InputShapeError("rx block count does not match the dataset")
    rx_sym, ref_sym, ref_bits = [], [], []
    lengths = [len(t) for t in ds.tx]
    for n in sorted(set(lengths), reverse=True):
        which = [b for b in range(ds.n_blocks) if lengths[b] == n]
        keep = [ds.interior(b) for b in which]
        if all(k.size == 0 for k in keep):
            continue
        stack = np.stack([np.asarray(rx_blocks[b], dtype=np.complex128) for b in which])
        if stack.shape[-1] != n:
            raise InputShapeError("rx block length does not match tx block length")
        eq = equalize(ComplexSignal(stack, ds.sample_rate_hz), mode, ds.tx_cfg, ds.fiber)
        for row, b in enumerate(which):
            bits = ds.bits(b).reshape(-1, 4)[keep[row]]
            rx_sym.append(eq[row, keep[row]])
            ref_bits.append(bits.ravel())
            ref_sym.append(map_bits_to_qam16(bits.ravel()))
    if not rx_sym:
        raise InputShapeError("dataset has no interior symbols to evaluate")
    rx_all, ref_all = np.concatenate(rx_sym), np.concatenate(ref_sym)
    ref_bits_all = np.concatenate(ref_bits)
    scaled, bits, _ = align_and_decide(rx_all, ref_all)
    errors, total, ber = count_bit_errors(ref_bits_all, bits)
    return ChainOutput(scaled, ref_all, bits, ref_bits_all, errors, total, ber)


def evaluate_pair(dataset: DatasetFile, surrogate, mode: DspMode) -> EvalRow:
    """Identical receiver DSP on SSFM output and surrogate output.

    ``surrogate`` is a :class:`DatasetFile` sharing ``dataset``'s tx blocks,
    or a list of rx blocks. BER difference is surrogate minus SSFM.
    """
    if isinstance(surrogate, DatasetFile):
        check_pair(dataset, surrogate)
        rx_sur = surrogate.rx
    else:
        rx_sur = list(surrogate)
        if len(rx_sur) != dataset.n_blocks or any(
            np.shape(r) != t.shape for r, t in zip(rx_sur, dataset.tx)
        ):
            raise InputShapeError("surrogate output is not aligned with the dataset")
    a = run_dataset_chain(dataset, mode)
    b = run_dataset_chain(dataset, mode, rx_sur)
    return EvalRow(dataset.fiber.length_km, a.ber, b.ber, b.ber - a.ber,
                   a.errors, b.errors, a.total)


def _fmt(value):
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_report(rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow([_fmt(v) for v in row.as_list()])


def read_report(path) -> list:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != REPORT_HEADER:
            raise FormatError(f"unexpected report header {header}")
        rows = []
        for rec in reader:
            vals = dict(zip(REPORT_HEADER, rec))
            rows.append(EvalRow(
                float(vals["distance_km"]), float(vals["ber_ssfm"]),
                float(vals["ber_surrogate"]), float(vals["delta_ber"]),
                int(vals["err_ssfm"]), int(vals["err_surrogate"]), int(vals["total_bits"]),
                float(vals["t_ssfm_s"]), float(vals["t_surrogate_s"]),
            ))
    return rows


# -- benchmarking ---------------------------------------------------------------

@dataclass
class TimingRow:
    distance_km: float
    n_steps: int
    t_ssfm_s: float
    t_surrogate_s: float


@dataclass
class TimingTable:
    rows: list
    n_samples: int
    repeats: int
    anchors: dict = field(default_factory=lambda: dict(PUBLISHED_TIMING_ANCHORS))

    def ratio(self, column: str, d_hi: float, d_lo: float) -> float:
        by_d = {r.distance_km: getattr(r, column) for r in self.rows}
        return by_d[d_hi] / by_d[d_lo]


def _median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_runtime(distances_km, tx_cfg: TxConfig, fiber: FiberParams, model: CganModel,
                  repeats: int = 3, n_samples: int = 4096, seed: int = 0) -> TimingTable:
    """Median wall time of the split-step channel and of surrogate inference per distance.

    The waveform size is fixed across distances and the model must already be
    loaded. Runs sequentially in the calling thread; noise is left out of the
    SSFM timing.
    """
    if repeats < 3:
        raise ConfigError("repeats must be >= 3")
    if n_samples % tx_cfg.sps or not _fft.is_power_of_two(n_samples):
        raise ConfigError("n_samples must be a power of two and a multiple of sps")
    bits = block_bits(seed, 0, n_samples // tx_cfg.sps)
    tx = transmit(bits, tx_cfg)
    rows = []
    for d in distances_km:
        link = replace(fiber, length_km=float(d))
        steps = link.steps_m()
        run_ssfm = lambda: split_step(tx.samples, tx.sample_rate_hz, steps, link.beta2,
                                      link.gamma, link.alpha)
        run_sur = lambda: generate_channel_output(model, tx, seed)
        # one untimed call each to warm caches
        run_sur()
        rows.append(TimingRow(float(d), len(steps), _median_time(run_ssfm, repeats),
                              _median_time(run_sur, repeats)))
    return TimingTable(rows, n_samples, repeats)


def write_timing(table: TimingTable, path):
    with open(path, "w", newline="") as fh:
        fh.write(f"# n_samples={table.n_samples} repeats={table.repeats}")
        for k, v in table.anchors.items():
            fh.write(f" published_{k}={v}")
        fh.write("\n")
        writer = csv.writer(fh)
        writer.writerow(["distance_km", "n_steps", "t_ssfm_s", "t_surrogate_s"])
        for r in table.rows:
            writer.writerow([_fmt(r.distance_km), r.n_steps, _fmt(r.t_ssfm_s), _fmt(r.t_surrogate_s)])


# -- constellations -------------------------------------------------------------

CONSTELLATION_HEADER = ["stage", "symbol_index", "re", "im"]


def export_constellation(symbols, stage_label: str, path):
    s = np.asarray(symbols, dtype=np.complex128).ravel()
    if s.size == 0:
        raise InputShapeError("no symbols to export")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CONSTELLATION_HEADER)
        for k, v in enumerate(s):
            writer.writerow([stage_label, k, f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_constellation(path):
    """Returns ``(stage_label, symbols)``."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != CONSTELLATION_HEADER:
            raise FormatError("unexpected constellation header")
        stages, values = set(), []
        for stage, _, re, im in reader:
            stages.add(stage)
            values.append(complex(float(re), float(im)))
    if len(stages) > 1:
        raise FormatError("constellation file mixes stages")
    return (stages.pop() if stages else ""), np.array(values)


def export_constellation_grid(ssfm: DatasetFile, surrogates, out_dir,
                              dbp_steps_per_km: float = 100.0) -> list:
    """Write one CSV per (source, DSP stage); sources are ssfm plus each surrogate.

    With CGAN and FCNN surrogates this yields the 3 x 3 grid of stages
    {none, cd_only, dbp} by sources {ssfm, cgan, fcnn}.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sources = [("ssfm", ssfm)] + [(s.source, s) for s in surrogates]
    written = []
    for label, ds in sources:
        if ds is not ssfm:
            check_pair(ssfm, ds)
        for stage in ("none", "cd_only", "dbp"):
            chain = run_dataset_chain(ssfm, DspMode(stage, dbp_steps_per_km), ds.rx)
            path = out / f"{label}_{stage}.csv"
            export_constellation(chain.symbols, f"{label}_{stage}", path)
            written.append(path)
    return written
