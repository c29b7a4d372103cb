"""Command-line entry point: ``fibergan simulate|train|generate|evaluate|bench``.

Settings come from built-in defaults, then an optional INI file given by
``--config`` (sections ``[tx]``, ``[fiber]``, ``[noise]``, ``[cgan]``), then
command-line flags, which win. Every command prints its effective
configuration as JSON and writes it next to each output as ``<output>.json``.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import harness
from .errors import ConfigError, FiberGanError, FormatError
from .fiber import FiberParams, NoiseConfig
from .rxdsp import DspMode
from .sigproc import TxConfig, watts_to_dbm
from .surrogate import CganConfig, WindowGeometry, load_model, save_model, train_cgan, train_fcnn

log = logging.getLogger("fibergan")

DSP_NAMES = {"none": "none", "cd": "cd_only", "dbp": "dbp"}


def _coerce(field_type, text):
    if field_type in (bool, "bool"):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if field_type in (int, "int"):
        return int(text)
    if field_type in (float, "float"):
        return float(text)
    if field_type in (tuple, "tuple"):
        return tuple(float(v) for v in text.split(","))
    return text


def _section(parser: configparser.ConfigParser, name: str, cls, base):
    if not parser.has_section(name):
        return base
    names = {f.name: f.type for f in dataclasses.fields(cls)}
    updates = {}
    for key, raw in parser.items(name):
        if key not in names or key == "geometry":
            raise ConfigError(f"unknown key [{name}] {key}")
        updates[key] = _coerce(names[key], raw)
    return dataclasses.replace(base, **updates)


@dataclasses.dataclass
class RunConfig:
    tx: TxConfig = TxConfig()
    fiber: FiberParams = FiberParams()
    noise: NoiseConfig = NoiseConfig()
    cgan: CganConfig = CganConfig()
    geometry: WindowGeometry = WindowGeometry()
    block_symbols: int = harness.DEFAULT_BLOCK_SYMBOLS

    @classmethod
    def load(cls, path) -> "RunConfig":
        cfg = cls()
        if path is None:
            return cfg
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise OSError(f"cannot read config file {path}")
        cfg.tx = _section(parser, "tx", TxConfig, cfg.tx)
        cfg.fiber = _section(parser, "fiber", FiberParams, cfg.fiber)
        cfg.noise = _section(parser, "noise", NoiseConfig, cfg.noise)
        cfg.geometry = _section(parser, "geometry", WindowGeometry, cfg.geometry)
        cfg.cgan = _section(parser, "cgan", CganConfig, cfg.cgan)
        cfg.cgan = dataclasses.replace(cfg.cgan, geometry=cfg.geometry)
        if parser.has_section("run"):
            cfg.block_symbols = parser.getint("run", "block_symbols", fallback=cfg.block_symbols)
        return cfg

    def as_dict(self):
        return dataclasses.asdict(self)


def _echo(config: dict, outputs):
    text = json.dumps(config, indent=2, sort_keys=True, default=str)
    print(text)
    for out in outputs:
        Path(f"{out}.json").write_text(text + "\n")


def _seed_type(text):
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from exc
    if not 0 <= value < 2**32:
        raise argparse.ArgumentTypeError("seeds must be unsigned 32-bit integers")
    return value


def _distances(text):
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid distance list {text!r}") from exc
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("distances must be a non-empty list of positive numbers")
    return values


# -- subcommands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = RunConfig.load(args.config)
    tx = cfg.tx
    if args.power_dbm is not None:
        tx = dataclasses.replace(tx, launch_power_dbm=args.power_dbm)
    if args.seed is not None:
        tx = dataclasses.replace(tx, seed=args.seed)
    fiber = cfg.fiber
    if args.distance_km is not None:
        fiber = dataclasses.replace(fiber, length_km=args.distance_km)
    if args.step_km is not None:
        fiber = dataclasses.replace(fiber, step_km=args.step_km)
    noise = cfg.noise
    if args.no_noise:
        noise = dataclasses.replace(noise, enabled=False)
    elif args.noise_snr_db is not None:
        noise = dataclasses.replace(noise, enabled=True, snr_db=args.noise_snr_db)
    if args.noise_seed is not None:
        noise = dataclasses.replace(noise, seed=args.noise_seed)
    block = args.block_symbols or cfg.block_symbols
    block = min(block, args.symbols)
    edge = harness.default_edge_symbols(cfg.geometry)

    ds = harness.generate_dataset(tx, fiber, noise, args.symbols, block, tx.seed, edge)
    harness.write_dataset(ds, args.out)
    if harness.read_dataset(args.out).n_blocks != ds.n_blocks:
        raise FormatError("dataset read-back mismatch")

    power = np.mean(np.abs(np.concatenate(ds.tx)) ** 2)
    _echo({"command": "simulate", "tx": dataclasses.asdict(tx),
           "fiber": dataclasses.asdict(fiber), "noise": dataclasses.asdict(noise),
           "n_symbols": args.symbols, "block_symbols": block, "edge_symbols": edge},
          [args.out])
    print(f"symbols: {args.symbols}")
    print(f"blocks: {ds.n_blocks}")
    print(f"mean launch power: {watts_to_dbm(power):.4f} dBm")
    print(f"steps executed: {fiber.n_steps}")
    return 0


def _write_losses(path, losses, kind):
    with open(path, "w") as fh:
        if kind == "cgan":
            fh.write("epoch,d_loss,g_loss\n")
            for e, (d, g) in enumerate(losses, 1):
                fh.write(f"{e},{d!r},{g!r}\n")
        else:
            fh.write("epoch,mse\n")
            for e, (m,) in enumerate(losses, 1):
                fh.write(f"{e},{m!r}\n")


def cmd_train(args) -> int:
    cfg = RunConfig.load(args.config)
    ds = harness.read_dataset(args.data)
    if ds.tx_cfg.sps != cfg.geometry.sps:
        raise ConfigError("dataset sps does not match the window geometry")
    updates = {"geometry": cfg.geometry}
    for key in ("epochs", "seed", "batch_size", "lr"):
        value = getattr(args, key)
        if value is not None:
            updates[key] = value
    if args.checkpoint_every is not None:
        updates["checkpoint_every"] = args.checkpoint_every
    ccfg = dataclasses.replace(cfg.cgan, **updates)
    cond, targets = harness.training_pairs(ds, ccfg.geometry, args.limit)

    def on_checkpoint(epoch, model):
        save_model(model, f"{args.out}.epoch{epoch}")

    if args.model == "cgan":
        result = train_cgan(cond, targets, ccfg, on_checkpoint)
    else:
        result = train_fcnn(cond, targets, ccfg)
    save_model(result.model, args.out)
    load_model(args.out, ccfg.leaky_slope)
    loss_path = args.loss_csv or f"{args.out}.loss.csv"
    _write_losses(loss_path, result.losses, args.model)
    _echo({"command": "train", "model": args.model, "data": str(args.data),
           "pairs": len(cond), "cgan": dataclasses.asdict(ccfg)}, [args.out])
    print(f"pairs: {len(cond)}")
    print(f"final losses: {result.losses[-1].tolist() if len(result.losses) else []}")
    return 0


def cmd_generate(args) -> int:
    model = load_model(args.model)
    ds = harness.read_dataset(args.data)
    if model.geometry.sps != ds.tx_cfg.sps:
        raise ConfigError("model geometry does not match the dataset sps")
    out = harness.surrogate_dataset(model, ds, args.seed, Path(args.model).name)
    harness.write_dataset(out, args.out)
    _echo({"command": "generate", "model": str(args.model), "data": str(args.data),
           "seed": args.seed, "kind": out.source}, [args.out])
    print(f"blocks: {out.n_blocks}")
    return 0


def cmd_evaluate(args) -> int:
    ssfm = harness.read_dataset(args.ssfm)
    gens = [harness.read_dataset(p) for p in args.gen]
    mode = DspMode(DSP_NAMES[args.dsp], args.dbp_steps_per_km)
    rows = []
    for g in gens:
        try:
            harness.check_pair(ssfm, g)
        except FiberGanError as exc:
            raise ConfigError(f"metadata mismatch between --ssfm and --gen: {exc}") from exc
        if g.fiber != ssfm.fiber:
            raise ConfigError("--gen file was produced from a different fiber setup")
        rows.append(harness.evaluate_pair(ssfm, g, mode))
    harness.write_report(rows, args.report)
    outputs = [args.report]
    if args.constellations_dir:
        surrogates = [g for g in gens if g.source != "ssfm"]
        harness.export_constellation_grid(ssfm, surrogates, args.constellations_dir,
                                          args.dbp_steps_per_km)
    _echo({"command": "evaluate", "ssfm": str(args.ssfm), "gen": [str(p) for p in args.gen],
           "dsp": mode.mode, "dbp_steps_per_km": mode.dbp_steps_per_km,
           "rows": [dict(zip(harness.REPORT_HEADER, r.as_list())) for r in rows]}, outputs)
    for r in rows:
        print(f"ber_ssfm={r.ber_ssfm:.6g} ber_surrogate={r.ber_surrogate:.6g} "
              f"delta_ber={r.delta_ber:.6g} total_bits={r.total_bits}")
    return 0


def cmd_bench(args) -> int:
    cfg = RunConfig.load(args.config)
    model = load_model(args.model)
    table = harness.bench_runtime(args.distances, cfg.tx, cfg.fiber, model, args.repeats,
                                  args.samples)
    harness.write_timing(table, args.out)
    _echo({"command": "bench", "distances_km": args.distances, "repeats": args.repeats,
           "samples": args.samples, "fiber": dataclasses.asdict(cfg.fiber),
           "published_anchors": table.anchors}, [args.out])
    for r in table.rows:
        print(f"{r.distance_km:g} km: ssfm {r.t_ssfm_s:.4f} s ({r.n_steps} steps), "
              f"surrogate {r.t_surrogate_s:.4f} s")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fibergan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate an SSFM dataset")
    s.add_argument("--config")
    s.add_argument("--distance-km", type=float)
    s.add_argument("--step-km", type=float)
    s.add_argument("--symbols", type=int, required=True)
    s.add_argument("--block-symbols", type=int)
    s.add_argument("--power-dbm", type=float)
    s.add_argument("--seed", type=_seed_type)
    s.add_argument("--noise-seed", type=_seed_type)
    g = s.add_mutually_exclusive_group()
    g.add_argument("--noise-snr-db", type=float)
    g.add_argument("--no-noise", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a CGAN or FCNN surrogate")
    t.add_argument("--config")
    t.add_argument("--model", choices=("cgan", "fcnn"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--epochs", type=int)
    t.add_argument("--seed", type=_seed_type)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--limit", type=int, help="use at most this many training pairs")
    t.add_argument("--checkpoint-every", type=int)
    t.add_argument("--loss-csv")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    gen = sub.add_parser("generate", help="run a trained surrogate on a dataset's tx blocks")
    gen.add_argument("--model", required=True)
    gen.add_argument("--data", required=True)
    gen.add_argument("--seed", type=_seed_type, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="compare SSFM and surrogate outputs after identical DSP")
    e.add_argument("--ssfm", required=True)
    e.add_argument("--gen", required=True, action="append")
    e.add_argument("--dsp", choices=tuple(DSP_NAMES), default="cd")
    e.add_argument("--dbp-steps-per-km", type=float, default=100.0)
    e.add_argument("--report", required=True)
    e.add_argument("--constellations-dir")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time SSFM against surrogate inference")
    b.add_argument("--config")
    b.add_argument("--distances", type=_distances, required=True)
    b.add_argument("--model", required=True)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--samples", type=int, default=4096)
    b.add_argument("--out", default="timing.csv")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"fibergan: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, FiberGanError) as exc:
        print(f"fibergan: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
