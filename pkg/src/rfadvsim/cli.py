"""Command-line entry point wiring dataset generation, training, experiments,
and plotting into reproducible runs.

Exit codes: 0 success, 2 usage/config errors, 3 I/O or format errors.
Every output artifact gets a sibling <name>.manifest.json written
atomically with the resolved arguments, config hash, seed, and artifact
format versions; a rerun from the manifest reproduces the artifact.
RFADVSIM_SEED in the environment overrides --seed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import eval as evalmod
from . import net, plot, sig
from ._io import atomic_write_text
from .errors import ConfigurationError, FormatError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3

_ARCHES = {
    "default": lambda p, c: net.ModelArch(frame_len=p, n_classes=c),
    "paper": net.paper_scale_arch,
    "small": net.small_arch,
}


def _resolve_seed(arg_seed: int) -> int:
    env = os.environ.get("RFADVSIM_SEED")
    return int(env) if env else int(arg_seed)


def _config_hash(doc: dict) -> str:
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()


def _write_manifest(out_path: str, command: str, config: dict, seed: int) -> None:
    doc = {
        "command": command,
        "config": config,
        "config_sha256": _config_hash(config),
        "seed": seed,
        "versions": {"rfadvsim": __version__, "rfds": sig.RFDS_VERSION,
                     "rfmc": net.RFMC_VERSION},
        "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    atomic_write_text(out_path + ".manifest.json",
                      json.dumps(doc, indent=2, sort_keys=True) + "\n")


def parse_grid(text: str) -> tuple:
    """Grid syntax: 'start:stop:step' (inclusive), 'a,b,c', or a single value."""
    text = text.strip()
    if ":" in text:
        fields = text.split(":")
        if len(fields) != 3:
            raise ConfigurationError(f"bad grid {text!r}; want start:stop:step")
        try:
            start, stop, step = (float(v) for v in fields)
        except ValueError:
            raise ConfigurationError(f"bad grid {text!r}") from None
        if step <= 0:
            raise ConfigurationError("grid step must be positive")
        vals = []
        v = start
        while v <= stop + 1e-9:
            vals.append(round(v, 10))
            v += step
        return tuple(vals)
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise ConfigurationError(f"bad grid {text!r}") from None


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rfadvsim",
                                     description="modulation-classifier attack simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a labeled frame dataset")
    g.add_argument("--out", required=True)
    g.add_argument("--classes", default=",".join(sig.DEFAULT_SCHEMES),
                   help="comma-separated scheme names")
    g.add_argument("--frames-per-class", type=int, default=512)
    g.add_argument("--snr-db", type=float, default=10.0)
    g.add_argument("--sps", type=int, default=8)
    g.add_argument("--frame-len", type=int, default=128)
    g.add_argument("--pulse", choices=("rect", "rrc"), default="rect")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--format", choices=("bin", "csv"), default="bin")

    t = sub.add_parser("train", help="train the classifier on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--arch", choices=sorted(_ARCHES), default="default")
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--lr", type=float, default=0.01)
    t.add_argument("--seed", type=int, default=0)

    a = sub.add_parser("attack-eval", help="run the Monte Carlo attack sweep")
    a.add_argument("--model")
    a.add_argument("--data")
    a.add_argument("--attacks", default="mrpp1")
    a.add_argument("--antennas", default="1")
    a.add_argument("--pnr", default="-16:0:4", help="dB grid: start:stop:step or a,b,c")
    a.add_argument("--rho", default="0")
    a.add_argument("--var", default="1")
    a.add_argument("--trials", type=int, default=500)
    a.add_argument("--snr-db", type=float, default=10.0)
    a.add_argument("--eps-acc-rel", type=float, default=1e-3)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--jobs", type=int, default=1)
    a.add_argument("--config", help="experiment JSON; flags override its paths only")
    a.add_argument("--out", required=True)

    p = sub.add_parser("plot", help="render a results CSV to SVG")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--x", default="pnr_db")
    p.add_argument("--y", default="accuracy")
    p.add_argument("--series", default="attack")
    p.add_argument("--title", default="")
    return parser


def _cmd_gen_data(args) -> int:
    if args.frames_per_class < 1:
        raise ConfigurationError("--frames-per-class must be at least 1")
    if args.sps < 1:
        raise ConfigurationError("--sps must be at least 1")
    seed = _resolve_seed(args.seed)
    cfg = sig.DatasetConfig(
        schemes=tuple(s for s in args.classes.split(",") if s),
        frames_per_class=args.frames_per_class, snr_db=args.snr_db,
        sps=args.sps, frame_len=args.frame_len, pulse=args.pulse, seed=seed,
    )
    train, test = sig.build_dataset(cfg)
    if args.format == "bin":
        sig.save_dataset(args.out, train, test)
    else:
        sig.export_csv(args.out, train, test)
    config = {"classes": cfg.schemes, "frames_per_class": cfg.frames_per_class,
              "snr_db": cfg.snr_db, "sps": cfg.sps, "frame_len": cfg.frame_len,
              "pulse": cfg.pulse, "seed": seed, "format": args.format}
    _write_manifest(args.out, "gen-data", config, seed)
    return EXIT_OK


def _cmd_train(args) -> int:
    if args.epochs < 0:
        raise ConfigurationError("--epochs must be nonnegative")
    seed = _resolve_seed(args.seed)
    train_ds, test_ds = sig.load_dataset(args.data)
    arch = _ARCHES[args.arch](train_ds.frame_len, train_ds.n_classes)
    hyper = net.TrainConfig(epochs=args.epochs, batch_size=args.batch,
                            lr=args.lr, seed=seed)
    t0 = time.perf_counter()
    model = net.train(net.init_model(arch, seed), train_ds, hyper)
    train_seconds = time.perf_counter() - t0
    net.save_model(model, args.out)
    metrics = {
        "final_train_loss": model.final_loss,
        "clean_test_accuracy": net.evaluate_accuracy(model, test_ds),
        "clean_train_accuracy": net.evaluate_accuracy(model, train_ds),
        "epochs": args.epochs,
        "train_seconds": round(train_seconds, 3),
    }
    atomic_write_text(args.out + ".metrics.json",
                      json.dumps(metrics, indent=2, sort_keys=True) + "\n")
    config = {"data": args.data, "arch": args.arch, "epochs": args.epochs,
              "batch": args.batch, "lr": args.lr, "seed": seed}
    _write_manifest(args.out, "train", config, seed)
    return EXIT_OK


def _cmd_attack_eval(args) -> int:
    seed = _resolve_seed(args.seed)
    if args.config:
        cfg = evalmod.load_experiment_config(args.config)
        if args.model:
            cfg = evalmod.ExperimentConfig(**{**cfg.__dict__, "model_path": args.model})
        if args.data:
            cfg = evalmod.ExperimentConfig(**{**cfg.__dict__, "dataset_path": args.data})
    else:
        if not args.model or not args.data:
            raise ConfigurationError("--model and --data are required without --config")
        cfg = evalmod.ExperimentConfig(
            attacks=tuple(a for a in args.attacks.split(",") if a),
            pnr_db=parse_grid(args.pnr),
            m=tuple(int(v) for v in parse_grid(args.antennas)),
            rho=parse_grid(args.rho),
            rayleigh_var=parse_grid(args.var),
            trials=args.trials, seed=seed, snr_db=args.snr_db,
            eps_acc_rel=args.eps_acc_rel,
            model_path=args.model, dataset_path=args.data,
        )
    rows = evalmod.run_experiment(cfg, jobs=max(1, args.jobs))
    evalmod.write_results_csv(args.out, rows)
    _write_manifest(args.out, "attack-eval", json.loads(cfg.to_json()), cfg.seed)
    return EXIT_OK


def _cmd_plot(args) -> int:
    rows = evalmod.read_results_csv(args.infile)
    svg = plot.render_line_chart(rows, args.x, args.y, args.series, title=args.title)
    atomic_write_text(args.out, svg)
    config = {"in": args.infile, "x": args.x, "y": args.y, "series": args.series}
    _write_manifest(args.out, "plot", config, 0)
    return EXIT_OK


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "attack-eval": _cmd_attack_eval,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


def run() -> None:
    sys.exit(main())
