"""Command-line entry point.

Subcommands: gen-data, train, gradcheck, boundary, orders, multi-seed,
rnn-train. Every run is deterministic given its flags; rerunning a
command reproduces its output files byte for byte. Plots are out of
scope: commands emit CSV/JSON that any plotting tool can consume.

Exit codes: 0 success, 1 check or assertion failure, 2 usage error,
3 I/O or format error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .core import Rng, FormatError, ShapeError
from .network import Network, grad_check, kink_margin, \
    lp_layer, linear, maxout_layer, dropout
from . import data as dt
from . import train as tr
from . import boundary as bd
from .recurrent import DtRnnParams, rnn_states
from .lp import inject_fault

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2
EXIT_IO = 3

GRADCHECK_BOUND = 1e-4


def worker_threads() -> int:
    """Worker-thread cap from LP_UNITS_THREADS (default 1)."""
    raw = os.environ.get("LP_UNITS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"LP_UNITS_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def parse_arch(text: str) -> list:
    """Layer list from a compact string, comma-separated.

    lp:U:N        pooling layer, U units over groups of N, learned order
    lp:U:N:p      same with the order frozen at p
    maxout:U:N    maxout layer
    linear:D[:a]  linear layer to D outputs, optional activation a
    dropout:r     inverted dropout at rate r
    """
    specs = []
    if not text.strip():
        return specs
    for item in text.split(","):
        parts = item.strip().split(":")
        kind = parts[0]
        try:
            if kind == "lp" and len(parts) in (3, 4):
                units, group = int(parts[1]), int(parts[2])
                if len(parts) == 4:
                    specs.append(lp_layer(units, group, learn_order=False,
                                          init_order=float(parts[3])))
                else:
                    specs.append(lp_layer(units, group))
            elif kind == "maxout" and len(parts) == 3:
                specs.append(maxout_layer(int(parts[1]), int(parts[2])))
            elif kind == "linear" and len(parts) in (2, 3):
                act = parts[2] if len(parts) == 3 else None
                specs.append(linear(int(parts[1]), act))
            elif kind == "dropout" and len(parts) == 2:
                specs.append(dropout(float(parts[1])))
            else:
                raise ValueError(f"cannot parse layer {item!r}")
        except ValueError as exc:
            raise ValueError(f"bad arch item {item!r}: {exc}") from exc
    return specs


def echo_config(config: dict) -> None:
    print(json.dumps({"resolved_config": config}, sort_keys=True))


# -- gen-data ----------------------------------------------------------------

DATA_KINDS = ("gauss2", "gauss3", "curvature", "pianoroll")
_DEFAULT_N = {"gauss2": 1000, "gauss3": 1200, "curvature": 5000, "pianoroll": 200}


def make_dataset(kind: str, n: int, seed: int):
    if kind == "gauss2":
        return dt.gen_gaussian_mixture(dt.gauss2_components(n // 2), seed=seed)
    if kind == "gauss3":
        return dt.gen_gaussian_mixture(dt.gauss3_components(n // 3), seed=seed)
    if kind == "curvature":
        return dt.gen_curvature_dataset(n, seed=seed)
    raise ValueError(f"unknown dataset kind {kind!r}")


def cmd_gen_data(args) -> int:
    n = args.n if args.n is not None else _DEFAULT_N[args.kind]
    echo_config({"command": "gen-data", "kind": args.kind, "n": n,
                 "seed": args.seed, "out": args.out})
    if args.kind == "pianoroll":
        batch = dt.gen_periodic_pianoroll(n_seq=n, length=args.length,
                                          seed=args.seed)
        dt.save_pianoroll(batch, args.out)
        print(f"wrote {len(batch)} sequences to {args.out}")
    else:
        ds = make_dataset(args.kind, n, args.seed)
        dt.save_csv(ds, args.out)
        print(f"wrote {len(ds)} rows to {args.out}")
    return EXIT_OK


# -- train -------------------------------------------------------------------

_TRAIN_CONFIG_FIELDS = {
    "data": str, "arch": str, "learning_rate": float, "momentum": float,
    "batch_size": int, "epochs": int, "seed": int, "patience": int,
    "clip_threshold": float, "init_order": float, "lr_decay": bool,
    "holdout_frac": float, "n": int, "data_seed": int,
}


def load_config_file(path) -> dict:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not a JSON document: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: config must be a JSON object")
    for key, value in doc.items():
        if key not in _TRAIN_CONFIG_FIELDS:
            raise FormatError(f"{path}: unknown config field {key!r}")
        want = _TRAIN_CONFIG_FIELDS[key]
        ok = isinstance(value, want) or (want is float and isinstance(value, int)
                                         and not isinstance(value, bool))
        if want is int and isinstance(value, bool):
            ok = False
        if not ok:
            raise FormatError(f"{path}: field {key!r} must be {want.__name__}, "
                              f"got {type(value).__name__}")
    return doc


def _resolve_train_config(args) -> dict:
    config = {"data": "gauss2", "arch": "lp:1:2", "learning_rate": 0.1,
              "momentum": 0.9, "batch_size": 32, "epochs": 50, "seed": 0,
              "patience": 0, "clip_threshold": 0.0, "init_order": 3.0,
              "lr_decay": False, "holdout_frac": 0.2, "n": 0, "data_seed": -1}
    if args.config:
        config.update(load_config_file(args.config))
    for key in _TRAIN_CONFIG_FIELDS:
        flag = getattr(args, key, None)
        if flag is not None:
            config[key] = flag
    return config


def _load_train_data(config):
    name = config["data"]
    if name in ("gauss2", "gauss3", "curvature"):
        seed = config["data_seed"] if config["data_seed"] >= 0 else config["seed"]
        n = config["n"] or _DEFAULT_N[name]
        return make_dataset(name, n, seed)
    return dt.load_csv(name)


def cmd_train(args) -> int:
    config = _resolve_train_config(args)
    echo_config({"command": "train", **config, "out_dir": args.out_dir})
    dataset = _load_train_data(config)
    specs = parse_arch(config["arch"]) + [linear(dataset.class_count)]
    net = Network.build(dataset.dim, specs, Rng(config["seed"]).substream("init"))
    train_cfg = tr.TrainConfig(
        learning_rate=config["learning_rate"], momentum=config["momentum"],
        batch_size=config["batch_size"], epochs=config["epochs"],
        seed=config["seed"], patience=config["patience"],
        clip_threshold=config["clip_threshold"], init_order=config["init_order"],
        lr_decay=config["lr_decay"], holdout_frac=config["holdout_frac"])
    report = tr.train(net, dataset, train_cfg)
    report.config = {**config}
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "report.json")
    model_path = os.path.join(args.out_dir, "model.json")
    report.save(report_path)
    net.save(model_path)
    print(f"final: {json.dumps(report.final, sort_keys=True)}")
    print(f"wrote {report_path} and {model_path}")
    if report.wall_time_s is not None:
        print(f"wall time: {report.wall_time_s:.2f}s", file=sys.stderr)
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------

def _gradcheck_batch(net: Network, rng: Rng, batch_size: int, margin: float = 1e-2):
    """A batch clear of activation kinks, resampled as needed."""
    for attempt in range(200):
        sub = rng.substream(f"batch{attempt}")
        X = sub.normal(batch_size * net.input_dim).reshape(batch_size, net.input_dim)
        y = sub.integers(0, max(net.out_dim, 2), batch_size)
        if net.out_dim == net.input_dim and not net.specs:
            y = sub.integers(0, net.input_dim, batch_size)
        if kink_margin(net, X) > margin:
            return X, y
    raise RuntimeError("could not find a batch away from activation kinks")


def cmd_gradcheck(args) -> int:
    if args.layers is not None:
        if args.layers == 0:
            specs = []
        else:
            specs = []
            for _ in range(args.layers):
                specs += parse_arch("lp:4:2")
            specs.append(linear(args.classes))
    else:
        specs = parse_arch(args.arch)
        if specs or args.arch.strip():
            specs = specs + [linear(args.classes)]
    echo_config({"command": "gradcheck", "arch": args.arch,
                 "layers": args.layers, "input_dim": args.input_dim,
                 "classes": args.classes, "batch": args.batch,
                 "seed": args.seed, "epsilon": args.epsilon,
                 "mutate": args.mutate})
    rng = Rng(args.seed)
    net = Network.build(args.input_dim, specs, rng.substream("init"))
    if not specs:
        print("0")
        return EXIT_OK
    X, y = _gradcheck_batch(net, rng, args.batch)
    if args.mutate:
        with inject_fault(args.mutate):
            err = grad_check(net, X, y, epsilon=args.epsilon)
    else:
        err = grad_check(net, X, y, epsilon=args.epsilon)
    print(f"{err:.6e}")
    return EXIT_OK if err < GRADCHECK_BOUND else EXIT_CHECK


# -- boundary ----------------------------------------------------------------

def cmd_boundary(args) -> int:
    echo_config({"command": "boundary", "model": args.model, "nx": args.nx,
                 "ny": args.ny, "x_range": args.x_range, "y_range": args.y_range,
                 "out": args.out, "fit_conic": args.fit_conic})
    net = Network.load(args.model)
    grid = bd.grid_eval(net, nx=args.nx, ny=args.ny,
                        x_range=tuple(args.x_range), y_range=tuple(args.y_range))
    bd.save_boundary_csv(grid, args.out)
    print(f"wrote {grid['points'].shape[0]} rows to {args.out}")
    if args.fit_conic:
        level = bd.decision_threshold(net)
        pts = bd.extract_level_crossings(grid, 0, level)
        coeffs, residual = bd.fit_conic(pts)
        print(json.dumps({"threshold": level, "n_points": int(pts.shape[0]),
                          "coeffs": [float(c) for c in coeffs],
                          "residual": residual}, sort_keys=True))
        if residual >= 1e-2:
            return EXIT_CHECK
    return EXIT_OK


# -- orders ------------------------------------------------------------------

def _histogram_rows(hist: dict) -> list:
    rows = []
    for i, count in enumerate(hist["counts"]):
        lo = hist["start"] + i * hist["bin_width"]
        rows.append((lo, lo + hist["bin_width"], count))
    return rows


def render_orders_text(orders: dict) -> str:
    lines = []
    for phase in ("initial", "learned"):
        block = orders[phase]
        lines.append(f"{phase} orders: mean {block['mean']:.3f}  "
                     f"std {block['std']:.3f}  n {block['count']}")
        for lo, hi, count in _histogram_rows(block["histogram"]):
            bar = "#" * count
            lines.append(f"  [{lo:5.2f}, {hi:5.2f})  {count:4d}  {bar}")
    lines.append("reference order statistics (full-scale corpora):")
    for name, stats in sorted(orders["reference"].items()):
        lines.append(f"  {name:10s}  {stats['mean']:.2f} +/- {stats['std']:.2f}")
    return "\n".join(lines)


def cmd_orders(args) -> int:
    report = tr.TrainReport.load(args.report)
    if report.orders is None:
        print("report has no pooling units", file=sys.stderr)
        return EXIT_CHECK
    echo_config({"command": "orders", "report": args.report, "out": args.out})
    print(render_orders_text(report.orders))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(report.orders, fh, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}")
    return EXIT_OK


# -- multi-seed --------------------------------------------------------------

def cmd_multi_seed(args) -> int:
    echo_config({"command": "multi-seed", "experiment": args.experiment,
                 "kind": args.kind, "units": args.units, "group": args.group,
                 "seeds": args.seeds, "base_seed": args.base_seed,
                 "out": args.out})

    def one(seed: int) -> dict:
        if args.experiment == "curvature":
            return tr.curvature_experiment(seed, kind=args.kind,
                                           units=args.units, group=args.group)
        result, _ = tr.two_gaussian_experiment(seed)
        return result

    threads = worker_threads()
    seeds = [args.base_seed + k for k in range(args.seeds)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outcomes = list(pool.map(one, seeds))
    else:
        outcomes = [one(s) for s in seeds]
    successes = sum(1 for o in outcomes if o["success"])
    summary = {"experiment": args.experiment, "kind": args.kind,
               "units": args.units, "group": args.group,
               "n_seeds": args.seeds, "success_count": successes,
               "failure_rate": (args.seeds - successes) / args.seeds,
               "outcomes": outcomes}
    print(json.dumps({k: summary[k] for k in
                      ("experiment", "kind", "n_seeds", "success_count",
                       "failure_rate")}, sort_keys=True))
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(summary, fh, sort_keys=True)
            fh.write("\n")
        print(f"wrote {args.out}")
    return EXIT_OK


# -- rnn-train ---------------------------------------------------------------

def cmd_rnn_train(args) -> int:
    echo_config({"command": "rnn-train", "data": args.data, "n_seq": args.n_seq,
                 "length": args.length, "dim": args.dim, "seed": args.seed,
                 "state_dim": args.state_dim, "units": args.units,
                 "group": args.group, "kind": args.kind, "epochs": args.epochs,
                 "learning_rate": args.learning_rate, "batch_size": args.batch_size,
                 "clip_threshold": args.clip_threshold, "out_dir": args.out_dir})
    t0 = time.monotonic()
    if args.data:
        batch = dt.load_pianoroll(args.data)
        params = DtRnnParams.build(batch.dim, args.state_dim, args.units,
                                   batch.dim, Rng(args.seed).substream("rnn-init"),
                                   kind=args.kind, group=args.group)
        config = tr.TrainConfig(learning_rate=args.learning_rate, momentum=0.9,
                                batch_size=args.batch_size, epochs=args.epochs,
                                seed=args.seed,
                                clip_threshold=args.clip_threshold)
        report = tr.train_rnn(params, batch, config)
        max_h = max(float(np.abs(s).max()) for s in rnn_states(params, batch))
        baseline = batch.dim * float(np.log(2.0))
        out = {"train_per_step_nll": report.final["train_per_step_nll"],
               "valid_per_step_nll": report.final.get("valid_per_step_nll"),
               "baseline_per_step_nll": baseline, "max_abs_state": max_h}
    else:
        result = tr.rnn_experiment(args.seed, n_seq=args.n_seq,
                                   length=args.length, dim=args.dim,
                                   state_dim=args.state_dim, units=args.units,
                                   group=args.group, kind=args.kind,
                                   epochs=args.epochs,
                                   learning_rate=args.learning_rate,
                                   batch_size=args.batch_size,
                                   clip_threshold=args.clip_threshold)
        report = result.pop("report")
        result.pop("params")
        out = result
    os.makedirs(args.out_dir, exist_ok=True)
    report_path = os.path.join(args.out_dir, "report.json")
    report.save(report_path)
    print(json.dumps(out, sort_keys=True))
    print(f"wrote {report_path}")
    print(f"wall time: {time.monotonic() - t0:.2f}s", file=sys.stderr)
    return EXIT_OK


# -- argument plumbing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lpnet",
        description="Learned-order pooling networks: data generation, "
                    "training, gradient checks, boundary dumps.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="write a dataset file")
    p.add_argument("kind", choices=DATA_KINDS)
    p.add_argument("--n", type=int, default=None,
                   help="rows (or sequences for pianoroll); kind-specific default")
    p.add_argument("--length", type=int, default=50, help="pianoroll steps")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a classifier, write report + model")
    p.add_argument("--config", default=None, help="JSON config file")
    p.add_argument("--data", default=None,
                   help="gauss2|gauss3|curvature or a CSV path")
    p.add_argument("--arch", default=None, help="hidden stack, e.g. lp:3:2")
    p.add_argument("--learning-rate", dest="learning_rate", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--clip-threshold", dest="clip_threshold", type=float)
    p.add_argument("--init-order", dest="init_order", type=float)
    p.add_argument("--lr-decay", dest="lr_decay", action="store_const", const=True)
    p.add_argument("--holdout-frac", dest="holdout_frac", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--data-seed", dest="data_seed", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--arch", default="lp:4:2")
    p.add_argument("--layers", type=int, default=None,
                   help="N default pooling layers instead of --arch; 0 = empty net")
    p.add_argument("--input-dim", dest="input_dim", type=int, default=5)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--batch", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--mutate", choices=("rho-grad",), default=None,
                   help="inject a known fault; the check must then fail")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("boundary", help="grid dump of labels and unit activations")
    p.add_argument("--model", required=True)
    p.add_argument("--nx", type=int, default=100)
    p.add_argument("--ny", type=int, default=100)
    p.add_argument("--x-range", dest="x_range", type=float, nargs=2,
                   default=(-3.0, 3.0))
    p.add_argument("--y-range", dest="y_range", type=float, nargs=2,
                   default=(-3.0, 3.0))
    p.add_argument("--out", required=True)
    p.add_argument("--fit-conic", dest="fit_conic", action="store_true",
                   help="fit a conic to the first unit's decision-level curve")
    p.set_defaults(func=cmd_boundary)

    p = sub.add_parser("orders", help="order histograms from a report")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default=None, help="also write the block as JSON")
    p.set_defaults(func=cmd_orders)

    p = sub.add_parser("multi-seed", help="seeded success-rate experiment")
    p.add_argument("--experiment", choices=("curvature", "gauss2"),
                   default="curvature")
    p.add_argument("--kind", choices=tr.CURVATURE_KINDS, default="lp")
    p.add_argument("--units", type=int, default=3)
    p.add_argument("--group", type=int, default=2)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--base-seed", dest="base_seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_multi_seed)

    p = sub.add_parser("rnn-train", help="train the recurrent model")
    p.add_argument("--data", default=None, help="pianoroll JSON; default synthetic")
    p.add_argument("--n-seq", dest="n_seq", type=int, default=200)
    p.add_argument("--length", type=int, default=50)
    p.add_argument("--dim", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--state-dim", dest="state_dim", type=int, default=32)
    p.add_argument("--units", type=int, default=16)
    p.add_argument("--group", type=int, default=2)
    p.add_argument("--kind", choices=("lp", "tanh"), default="lp")
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.01)
    p.add_argument("--batch-size", dest="batch_size", type=int, default=20)
    p.add_argument("--clip-threshold", dest="clip_threshold", type=float,
                   default=25.0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_rnn_train)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except tr.TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ShapeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
