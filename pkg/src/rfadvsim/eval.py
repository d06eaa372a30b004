"""Monte Carlo attack evaluation: PNR calibration, seeded trials, sweep grids.

A cell is one (attack, m, pnr_db, rho, rayleigh_var) combination; each of
its trials takes the next test frame round-robin, samples a fresh channel
realisation, crafts the configured attack, and classifies the frame plus
the received perturbation. The frame's stored noise is the receiver noise,
so a zero-budget trial reproduces the clean prediction exactly.

The power budget is calibrated in expectation at the receiver:
P_max = p * sigma_n^2 * 10**(pnr_db/10) / G with G the mean received
per-tap power gain of the channel, so the expected received perturbation
power per sample over the noise power equals 10**(pnr_db/10). A pnr_db of
-inf yields a zero budget and disables the attack.

Trial randomness is keyed by (seed, trial index) and, inside the channel
sampler, by antenna index, deliberately not by cell index: cells at the
same trial index share channel draws, which pairs the Monte Carlo
comparisons across attacks, antenna counts, correlation, and variance.
Trials are pure functions of their key, so any schedule, serial or
parallel, produces identical rows.

Results CSV: header attack,m,pnr_db,rho,rayleigh_var,trials,accuracy,ci95,
one row per cell, UTF-8, LF line endings. The experiment config mirrors
ExperimentConfig field names as a single JSON document.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, field, replace

import numpy as np

from . import attack as atk
from . import chan, net, sig
from ._io import atomic_write_text
from .errors import ConfigurationError, DegenerateGradientError

_GAUSS_STREAM_TAG = 0x6A0055

CSV_HEADER = "attack,m,pnr_db,rho,rayleigh_var,trials,accuracy,ci95"

_CHANNEL_FIELDS = ("K", "d0", "d", "gamma", "shadow_sigma_db", "rayleigh_var", "rho")


def pnr_to_pmax(pnr_db: float, snr_db: float, params: chan.ChannelParams) -> float:
    """Transmit budget whose expected received power sits pnr_db above the noise."""
    g = chan.mean_received_power_gain(params)
    if g <= 0.0:
        raise ConfigurationError("mean received power gain is zero; check channel params")
    noise_power = 10.0 ** (-snr_db / 10.0)
    return params.p * noise_power * 10.0 ** (pnr_db / 10.0) / g


@dataclass(frozen=True)
class TrialOutcome:
    fooled: bool
    pred: int
    craft_failed: bool


def run_trial(model, frame, params: chan.ChannelParams, kind, m: int, p_max: float,
              eps_acc: float, seed_key) -> TrialOutcome:
    """One seeded attack trial against one frame.

    Samples m antennas, crafts the attack white-box against the stored
    received frame, adds the received perturbation, and classifies. A zero
    budget skips crafting entirely. Crafting failures leave the frame
    unperturbed and are flagged, never silently counted as fooled.
    """
    r = np.asarray(frame.iq, dtype=np.complex128)
    true = int(frame.label)
    if p_max <= 0.0:
        pred = net.predict_label(model, r)
        return TrialOutcome(pred != true, pred, False)
    kind = atk.AttackKind(kind)
    sparams = params.with_(m=m, p=r.shape[0])
    channels = chan.sample_channels(sparams, seed_key)
    cfg = atk.AttackConfig(p_max, eps_acc, kind)
    rng = None
    if kind is atk.AttackKind.GAUSS_EMCG:
        rng = np.random.default_rng([*channels.seed, _GAUSS_STREAM_TAG])
    craft_failed = False
    deltas = np.zeros_like(channels.h)
    try:
        _, deltas = atk.craft(model, r, channels, cfg, true, rng)
    except DegenerateGradientError:
        craft_failed = True
    received = r + np.sum(channels.h * deltas, axis=0)
    pred = net.predict_label(model, received)
    return TrialOutcome(pred != true, pred, craft_failed)


@dataclass(frozen=True)
class ExperimentConfig:
    attacks: tuple
    pnr_db: tuple
    m: tuple = (1,)
    rho: tuple = (0.0,)
    rayleigh_var: tuple = (1.0,)
    trials: int = 500
    seed: int = 0
    snr_db: float = 10.0
    eps_acc_rel: float = atk.DEFAULT_EPS_ACC_REL
    model_path: str | None = None
    dataset_path: str | None = None
    channel: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        for name in ("attacks", "pnr_db", "m", "rho", "rayleigh_var"):
            if len(getattr(self, name)) == 0:
                raise ConfigurationError(f"experiment grid {name} is empty")
        kinds = tuple(a if isinstance(a, str) else a.value for a in self.attacks)
        for a in kinds:
            if a not in atk.ALL_KINDS:
                raise ConfigurationError(
                    f"unknown attack {a!r}; valid kinds: {', '.join(atk.ALL_KINDS)}"
                )
        object.__setattr__(self, "attacks", kinds)
        unknown = set(self.channel) - set(_CHANNEL_FIELDS)
        if unknown:
            raise ConfigurationError(f"unknown channel fields: {sorted(unknown)}")

    def to_json(self) -> str:
        doc = {
            "attacks": list(self.attacks), "pnr_db": list(self.pnr_db),
            "m": list(self.m), "rho": list(self.rho),
            "rayleigh_var": list(self.rayleigh_var), "trials": self.trials,
            "seed": self.seed, "snr_db": self.snr_db,
            "eps_acc_rel": self.eps_acc_rel, "model_path": self.model_path,
            "dataset_path": self.dataset_path, "channel": dict(self.channel),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_experiment_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    kw = dict(doc)
    for name in ("attacks", "pnr_db", "m", "rho", "rayleigh_var"):
        if name in kw:
            kw[name] = tuple(kw[name])
    return ExperimentConfig(**kw)


@dataclass(frozen=True)
class ResultRow:
    attack: str
    m: int
    pnr_db: float
    rho: float
    rayleigh_var: float
    trials: int
    accuracy: float
    ci95: float
    craft_failures: int = 0  # informational; not part of the CSV schema

    def csv_line(self) -> str:
        return (f"{self.attack},{self.m},{self.pnr_db!r},{self.rho!r},"
                f"{self.rayleigh_var!r},{self.trials},{self.accuracy!r},{self.ci95!r}")


def _cells(cfg: ExperimentConfig) -> list:
    return [
        (a, m, pnr, rho, var)
        for a in cfg.attacks
        for m in cfg.m
        for pnr in cfg.pnr_db
        for rho in cfg.rho
        for var in cfg.rayleigh_var
    ]


def _base_params(cfg: ExperimentConfig, frame_len: int) -> chan.ChannelParams:
    return chan.ChannelParams(p=frame_len, **cfg.channel)


def _cell_budget(cfg: ExperimentConfig, params: chan.ChannelParams,
                 pnr_db: float) -> tuple[float, float]:
    p_max = pnr_to_pmax(pnr_db, cfg.snr_db, params)
    eps_acc = cfg.eps_acc_rel * math.sqrt(p_max) if p_max > 0 else 0.0
    return p_max, eps_acc


# Worker state for fork-based pools; populated before the pool spawns.
_POOL = {}


def _run_cell_chunk(task):
    cell_idx, t0, t1 = task
    model = _POOL["model"]
    frames = _POOL["frames"]
    cfg = _POOL["cfg"]
    kind, m, pnr, rho, var = _POOL["cells"][cell_idx]
    params = _POOL["params"].with_(rho=rho, rayleigh_var=var)
    p_max, eps_acc = _cell_budget(cfg, params, pnr)
    fooled = 0
    failures = 0
    for trial in range(t0, t1):
        frame = frames[trial % len(frames)]
        out = run_trial(model, frame, params, kind, m, p_max, eps_acc,
                        (cfg.seed, trial))
        fooled += int(out.fooled)
        failures += int(out.craft_failed)
    return cell_idx, fooled, failures


def run_experiment(cfg: ExperimentConfig, *, model=None, frames=None,
                   jobs: int = 1) -> list:
    """Evaluate the full grid cross-product; returns one ResultRow per cell."""
    if model is None:
        if cfg.model_path is None:
            raise ConfigurationError("no model given and no model_path configured")
        model = net.load_model(cfg.model_path)
    if frames is None:
        if cfg.dataset_path is None:
            raise ConfigurationError("no frames given and no dataset_path configured")
        _, test = sig.load_dataset(cfg.dataset_path)
        frames = test.frames
    if not frames:
        raise ConfigurationError("empty evaluation frame pool")
    cells = _cells(cfg)
    params = _base_params(cfg, int(np.asarray(frames[0].iq).shape[0]))
    _POOL.update(model=model, frames=frames, cfg=cfg, cells=cells, params=params)
    try:
        tasks = []
        if jobs <= 1:
            tasks = [(i, 0, cfg.trials) for i in range(len(cells))]
            results = [_run_cell_chunk(t) for t in tasks]
        else:
            step = max(1, -(-cfg.trials // jobs))
            for i in range(len(cells)):
                for t0 in range(0, cfg.trials, step):
                    tasks.append((i, t0, min(cfg.trials, t0 + step)))
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(jobs) as pool:
                results = pool.map(_run_cell_chunk, tasks)
    finally:
        _POOL.clear()
    fooled = np.zeros(len(cells), dtype=np.int64)
    failures = np.zeros(len(cells), dtype=np.int64)
    for cell_idx, nf, nx in results:
        fooled[cell_idx] += nf
        failures[cell_idx] += nx
    rows = []
    for i, (kind, m, pnr, rho, var) in enumerate(cells):
        acc = 1.0 - fooled[i] / cfg.trials
        ci = 1.96 * math.sqrt(acc * (1.0 - acc) / cfg.trials)
        rows.append(ResultRow(kind, m, float(pnr), float(rho), float(var),
                              cfg.trials, acc, ci, int(failures[i])))
    return rows


def write_results_csv(path, rows) -> None:
    lines = [CSV_HEADER] + [row.csv_line() for row in rows]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_results_csv(path) -> list:
    """Rows as dicts with numeric fields parsed; raises FormatError on bad input."""
    from .errors import FormatError

    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise FormatError(f"{path}: missing results header")
    if len(lines) < 2:
        raise FormatError(f"{path}: no data rows")
    names = CSV_HEADER.split(",")
    out = []
    for ln, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(names):
            raise FormatError(f"{path}:{ln}: expected {len(names)} fields")
        row = dict(zip(names, parts))
        try:
            row["m"] = int(row["m"])
            row["trials"] = int(row["trials"])
            for key in ("pnr_db", "rho", "rayleigh_var", "accuracy", "ci95"):
                row[key] = float(row[key])
        except ValueError as exc:
            raise FormatError(f"{path}:{ln}: {exc}") from None
        out.append(row)
    return out
