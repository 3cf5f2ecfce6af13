"""Command-line entry point: gen-data, train, sweep, bench.

Each command reads one JSON run config (``--config``), applies flag
overrides and writes its outputs plus a ``<command>_manifest.json`` into the
output directory. Exit codes: 0 ok, 2 config error, 3 I/O or file-format
error, 4 numerical error.
"""

import argparse
import copy
import hashlib
import json
import logging
import math
import os
import sys

import jsonschema
import numpy as np

from . import __version__
from .channel import (SNR_CONVENTION, BlockFadingSpec, ChannelSpec, CorrelationSpec, CsiSpec)
from .detectors import DETECTOR_NAMES, get_detector
from .errors import ConfigError, FormatError, MimoError, ParameterError, SingularMatrixError
from .experiments import (Dataset, SweepConfig, generate_dataset, make_workload, read_dataset,
                          run_ber_sweep, run_throughput_bench, write_dataset)
from .features import feature_width
from .neuralnet import TrainingConfig, build_dnn, load_model, save_model, train
from .numerics import derive_seed

log = logging.getLogger("mimodet")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

# per-purpose seed offsets, XORed into the run seed
SEED_OFFSETS = {"train": 1, "val": 2, "test": 3, "init": 4, "shuffle": 5,
                "sweep": 0x5E00, "bench": 0xBE00}
SPLITS = ("train", "val", "test")

DEFAULT_CONFIG = {
    "system": {"n_t": 4, "n_r": 4, "scheme": "bpsk"},
    "channel": {"rho": 0.0, "period_t": 1, "np_ep": "perfect"},
    "snr": {"train_db": 8.0, "sweep_db": [0, 2, 4, 6, 8, 10, 12], "bench_db": 8.0},
    "data": {"n_train": 540000, "n_val": 180000, "n_test": 720000},
    "training": {"batch_size": 256, "max_epochs": 100, "lr": 1e-3, "early_stop_patience": 10,
                 "beta1": 0.9, "beta2": 0.999, "eps_hat": 1e-8, "mixed_snr_db": None},
    "sweep": {"detectors": ["zf", "mmse", "ml", "dnn"], "bits_per_point": 100000,
              "mmse_equivalent_noise": False},
    "bench": {"detectors": ["zf", "mmse", "ml", "dnn"], "n_symbols": 720000,
              "repetitions": 3, "dnn_batch_size": 16384},
    "paths": {"model": None, "out_dir": "out", "train_data": None, "val_data": None},
    "seed": 2019,
}

_num = {"type": "number"}
_pos_int = {"type": "integer", "minimum": 1}
_detectors = {"type": "array", "items": {"enum": list(DETECTOR_NAMES)}, "minItems": 1}
_path = {"type": ["string", "null"]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False,
            "required": list(required)}


CONFIG_SCHEMA = _obj({
    "system": _obj({"n_t": _pos_int, "n_r": _pos_int, "scheme": {"enum": ["bpsk", "qpsk"]}}),
    "channel": _obj({
        "rho": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "period_t": _pos_int,
        "np_ep": {"anyOf": [{"const": "perfect"}, {"type": "number", "exclusiveMinimum": 0}]},
    }),
    "snr": _obj({
        "train_db": _num,
        "sweep_db": {"anyOf": [_num, {"type": "array", "items": _num, "minItems": 1}]},
        "bench_db": _num,
    }),
    "data": _obj({"n_train": _pos_int, "n_val": _pos_int, "n_test": _pos_int}),
    "training": _obj({
        "batch_size": {"type": "integer", "minimum": 2}, "max_epochs": _pos_int,
        "lr": {"type": "number", "exclusiveMinimum": 0}, "early_stop_patience": _pos_int,
        "beta1": _num, "beta2": _num, "eps_hat": _num,
        "mixed_snr_db": {"anyOf": [{"type": "null"},
                                   {"type": "array", "items": _num, "minItems": 1}]},
    }),
    "sweep": _obj({"detectors": _detectors,
                   "bits_per_point": {"type": "integer", "minimum": 10000},
                   "mmse_equivalent_noise": {"type": "boolean"}}),
    "bench": _obj({"detectors": _detectors, "n_symbols": _pos_int, "repetitions": _pos_int,
                   "dnn_batch_size": _pos_int}),
    "paths": _obj({"model": _path, "out_dir": {"type": "string"},
                   "train_data": _path, "val_data": _path}),
    "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
})


def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate_config(doc):
    """Check a user config against the schema, naming the offending key."""
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        err = errors[0]
        where = ".".join(str(p) for p in err.path) or "<root>"
        raise ConfigError(f"config error at {where}: {err.message}")


def load_config(path=None, overrides=None):
    doc = {}
    if path is not None:
        try:
            with open(path) as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    validate_config(doc)
    cfg = _merge(DEFAULT_CONFIG, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
        validate_config(cfg)
    if isinstance(cfg["snr"]["sweep_db"], (int, float)):
        cfg["snr"]["sweep_db"] = [cfg["snr"]["sweep_db"]]
    return cfg


def git_blob_hash(path):
    """Content hash in git's blob format: sha1(b"blob <len>\\0" + data)."""
    with open(path, "rb") as fh:
        data = fh.read()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


# -- config -> library objects -------------------------------------------------

def _channel_spec(cfg):
    s, c = cfg["system"], cfg["channel"]
    return ChannelSpec(s["n_t"], s["n_r"], CorrelationSpec(c["rho"]), BlockFadingSpec(c["period_t"]))


def _csi_spec(cfg):
    np_ep = cfg["channel"]["np_ep"]
    return CsiSpec(math.inf if np_ep == "perfect" else float(np_ep))


def _seed(cfg, purpose):
    return derive_seed(cfg["seed"], SEED_OFFSETS[purpose])


def _model_path(cfg):
    return cfg["paths"]["model"] or os.path.join(cfg["paths"]["out_dir"], "model.json")


def _write_manifest(cfg, command, extra):
    s = cfg["system"]
    csi = _csi_spec(cfg)
    manifest = {
        "command": command,
        "package_version": __version__,
        "config": cfg,
        "seeds": {"run": cfg["seed"], **{k: _seed(cfg, k) for k in SEED_OFFSETS}},
        "snr_convention": SNR_CONVENTION,
        "sigma_e_sq": csi.sigma_e_sq(s["n_t"]),
        **extra,
    }
    path = os.path.join(cfg["paths"]["out_dir"], f"{command.replace('-', '_')}_manifest.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _split_dataset(cfg, split, n_samples=None):
    n = n_samples or cfg["data"][f"n_{split}"]
    spec, csi, scheme = _channel_spec(cfg), _csi_spec(cfg), cfg["system"]["scheme"]
    mixed = cfg["training"]["mixed_snr_db"]
    seed = _seed(cfg, split)
    if split == "test" or not mixed:
        return generate_dataset(n, cfg["snr"]["train_db"], csi, spec, scheme, seed)
    # extension: training data spread evenly over several SNRs
    parts = []
    for i, snr in enumerate(mixed):
        k = n // len(mixed) + (1 if i < n % len(mixed) else 0)
        if k:
            parts.append(generate_dataset(k, snr, csi, spec, scheme, derive_seed(seed, 0x100 + i)))
    header = dict(parts[0].header, snr_db=None, mixed_snr_db=list(mixed), n_samples=n)
    fields = ("features", "bits", "snr_db", "csi_error_variance", "channel_index")
    return Dataset(*(np.concatenate([getattr(p, f) for p in parts]) for f in fields), header)


# -- commands ------------------------------------------------------------------

def cmd_gen_data(cfg, split="train", n_samples=None, out_path=None):
    ds = _split_dataset(cfg, split, n_samples)
    out_path = out_path or os.path.join(cfg["paths"]["out_dir"], f"{split}.bin")
    write_dataset(ds, out_path)
    _write_manifest(cfg, "gen-data", {"split": split, "n_samples": len(ds),
                                      "outputs": [out_path]})
    print(f"wrote {len(ds)} samples to {out_path}")
    return out_path


def _load_or_generate(cfg, split):
    path = cfg["paths"][f"{split}_data"]
    if path:
        ds = read_dataset(path)
        s = cfg["system"]
        h = ds.header
        if (h["n_t"], h["n_r"], h["scheme"]) != (s["n_t"], s["n_r"], s["scheme"]):
            raise ConfigError(f"{path} was generated for a different system "
                              f"({h['n_t']}x{h['n_r']} {h['scheme']})")
        return ds
    return _split_dataset(cfg, split)


def cmd_train(cfg):
    s = cfg["system"]
    train_ds, val_ds = _load_or_generate(cfg, "train"), _load_or_generate(cfg, "val")
    model = build_dnn(s["n_t"], s["n_r"], s["scheme"], seed=_seed(cfg, "init"))
    for ds in (train_ds, val_ds):
        if ds.features.shape[1] != model.input_width:
            raise ConfigError(f"dataset width {ds.features.shape[1]} does not match the "
                              f"architecture input width {model.input_width}")
    t = cfg["training"]
    tcfg = TrainingConfig(t["batch_size"], t["max_epochs"], t["lr"], t["early_stop_patience"],
                          _seed(cfg, "shuffle"), cfg["snr"]["train_db"],
                          t["beta1"], t["beta2"], t["eps_hat"])
    best, history = train(model, train_ds, val_ds, tcfg)
    model_path = _model_path(cfg)
    save_model(best, model_path)
    hist_path = os.path.join(cfg["paths"]["out_dir"], "history.csv")
    with open(hist_path, "w") as fh:
        fh.write(history.to_csv())
    _write_manifest(cfg, "train", {
        "model_hash": git_blob_hash(model_path), "best_epoch": history.best_epoch,
        "best_val_loss": history.best_val_loss, "outputs": [model_path, hist_path]})
    print(f"best validation loss {history.best_val_loss:.6f} (epoch {history.best_epoch})")
    return best, history


def _models_for(cfg, detectors):
    if "dnn" not in detectors:
        return {}, None
    path = _model_path(cfg)
    if not os.path.exists(path):
        raise FileNotFoundError(f"model file {path} not found; run `train` first")
    model = load_model(path)
    s = cfg["system"]
    if model.input_width != feature_width(s["n_t"], s["n_r"]):
        raise ConfigError(f"model {path} expects input width {model.input_width}, the "
                          f"configured system produces {feature_width(s['n_t'], s['n_r'])}")
    return {"dnn": model}, path


def cmd_sweep(cfg, threads=1):
    s, sw = cfg["system"], cfg["sweep"]
    models, model_path = _models_for(cfg, sw["detectors"])
    config = SweepConfig(
        s["n_t"], s["n_r"], s["scheme"], [float(v) for v in cfg["snr"]["sweep_db"]],
        bits_per_point=sw["bits_per_point"], detectors=list(sw["detectors"]),
        np_ep=_csi_spec(cfg).np_ep, correlation=CorrelationSpec(cfg["channel"]["rho"]),
        block_fading=BlockFadingSpec(cfg["channel"]["period_t"]), seed=_seed(cfg, "sweep"),
        mmse_equivalent_noise=sw["mmse_equivalent_noise"])
    result = run_ber_sweep(config, models, threads=threads)
    csv_path = os.path.join(cfg["paths"]["out_dir"], "ber.csv")
    with open(csv_path, "w") as fh:
        fh.write(result.to_csv())
    extra = {"outputs": [csv_path],
             "erased_slots": {f"{p.detector}@{p.snr_db}": p.erased_slots
                              for p in result.points if p.erased_slots}}
    if model_path:
        extra["model_hash"] = git_blob_hash(model_path)
    _write_manifest(cfg, "sweep", extra)
    print(result.to_csv(), end="")
    return result


def cmd_bench(cfg):
    s, b = cfg["system"], cfg["bench"]
    models, model_path = _models_for(cfg, b["detectors"])
    dets = {name: get_detector(name, model=models.get(name), dnn_batch_size=b["dnn_batch_size"])
            for name in b["detectors"]}
    workload = make_workload(b["n_symbols"], cfg["snr"]["bench_db"], _channel_spec(cfg),
                             _csi_spec(cfg), s["scheme"], _seed(cfg, "bench"))
    result = run_throughput_bench(dets, workload, repetitions=b["repetitions"])
    csv_path = os.path.join(cfg["paths"]["out_dir"], "throughput.csv")
    with open(csv_path, "w") as fh:
        fh.write(result.to_csv())
    extra = {"outputs": [csv_path]}
    if model_path:
        extra["model_hash"] = git_blob_hash(model_path)
    _write_manifest(cfg, "bench", extra)
    print(f"{'detector':<10}{'bits':>12}{'median s':>12}{'Kbps':>14}")
    for r in result.rows:
        print(f"{r.detector:<10}{r.detected_bits:>12}{r.wall_seconds:>12.4f}"
              f"{r.throughput_kbps:>14.1f}")
    return result


# -- argument parsing ----------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run config")
    common.add_argument("--seed", type=int, help="override the run seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker cap; 1 is the sequential path")
    common.add_argument("--model", help="model file path")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="mimodet", description=__doc__.splitlines()[0],
                                     parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", parents=[common], help="write a dataset file")
    gen.add_argument("--split", choices=SPLITS, default="train")
    gen.add_argument("--samples", type=int, help="override the split size")
    gen.add_argument("--output", help="dataset file path (default <out>/<split>.bin)")

    tr = sub.add_parser("train", parents=[common], help="train the DNN detector")
    tr.add_argument("--train-data")
    tr.add_argument("--val-data")
    tr.add_argument("--epochs", type=int)

    sw = sub.add_parser("sweep", parents=[common], help="BER vs SNR sweep")
    sw.add_argument("--detectors", help="comma-separated detector names")
    sw.add_argument("--bits", type=int, help="bits per SNR point")

    be = sub.add_parser("bench", parents=[common], help="throughput benchmark")
    be.add_argument("--detectors", help="comma-separated detector names")
    be.add_argument("--symbols", type=int)
    be.add_argument("--repetitions", type=int)
    return parser


def _overrides(args):
    o = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    if args.seed is not None:
        o["seed"] = args.seed
    put("paths", "out_dir", args.out)
    put("paths", "model", args.model)
    if args.command == "train":
        put("paths", "train_data", args.train_data)
        put("paths", "val_data", args.val_data)
        put("training", "max_epochs", args.epochs)
    if args.command in ("sweep", "bench"):
        section = args.command
        if args.detectors:
            put(section, "detectors", [d.strip() for d in args.detectors.split(",")])
    if args.command == "sweep":
        put("sweep", "bits_per_point", args.bits)
    if args.command == "bench":
        put("bench", "n_symbols", args.symbols)
        put("bench", "repetitions", args.repetitions)
    return o


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = load_config(args.config, _overrides(args))
        os.makedirs(cfg["paths"]["out_dir"], exist_ok=True)
        if args.command == "gen-data":
            cmd_gen_data(cfg, args.split, args.samples, args.output)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "sweep":
            cmd_sweep(cfg, threads=args.threads)
        else:
            cmd_bench(cfg)
    except (ConfigError, ParameterError) as exc:
        print(f"mimodet: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FormatError) as exc:
        print(f"mimodet: {exc}", file=sys.stderr)
        return EXIT_IO
    except SingularMatrixError as exc:
        print(f"mimodet: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except MimoError as exc:
        print(f"mimodet: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK
