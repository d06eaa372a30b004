"""Perturbation crafting for a multi-antenna adversary.

Every strategy searches, per candidate target class, for the smallest
transmit amplitude that flips the classifier on the known received frame.
The search direction for antenna i and class c is the matched-filter
unit vector conj(h_i) * grad_x L(model, r, class c); the amplitude comes
from bisection on [0, sqrt(P_max)]. Strategies differ in how they split
the power budget across antennas and which channel they craft against:

  mrpp1            single antenna, full budget
  saga             per-antenna full-budget search, transmit on the cheapest
  pcg / ipcg       all antennas, weights proportional / inversely
                   proportional to each antenna's channel norm, with a
                   common target class or an independent one per antenna
  emcg             per tap, craft against the elementwise strongest
                   antenna's tap and transmit that element on it
  gauss_emcg       emcg antenna selection but white-noise content
  multi_adversary  k uncoordinated single-antenna attackers splitting the
                   budget evenly

Crafting probes subtract the candidate perturbation from the received
frame; the stored deltas carry that sign, so adding h_i * delta_i at the
receiver reproduces the probed signal. All selection rules break ties
toward the lowest index, and every function is a pure function of its
inputs, so identical calls yield identical perturbation sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import net
from .chan import ChannelSet
from .errors import ConfigurationError, DegenerateGradientError


class AttackKind(str, Enum):
    MRPP1 = "mrpp1"
    SAGA = "saga"
    PCG_COMMON = "pcg_common"
    PCG_IND = "pcg_ind"
    IPCG_COMMON = "ipcg_common"
    IPCG_IND = "ipcg_ind"
    EMCG = "emcg"
    GAUSS_EMCG = "gauss_emcg"
    MULTI_ADV = "multi_adv"


ALL_KINDS = tuple(k.value for k in AttackKind)

DEFAULT_EPS_ACC_REL = 1e-3

_POWER_SLACK = 1.0 + 1e-9


@dataclass(frozen=True)
class AttackConfig:
    """Total transmit power budget and bisection tolerance (amplitude units)."""

    p_max: float
    eps_acc: float
    kind: AttackKind | None = None

    def __post_init__(self):
        if not self.p_max > 0.0:
            raise ConfigurationError("p_max must be positive")
        if not 0.0 < self.eps_acc < math.sqrt(self.p_max):
            raise ConfigurationError("eps_acc must lie in (0, sqrt(p_max))")


def attack_config(p_max: float, eps_acc_rel: float = DEFAULT_EPS_ACC_REL,
                  kind: AttackKind | None = None) -> AttackConfig:
    return AttackConfig(p_max, eps_acc_rel * math.sqrt(p_max), kind)


@dataclass
class PerturbationSet:
    """Transmit-ready per-antenna perturbations under one power budget.

    deltas[i] is what antenna i sends; silent antennas carry zeros and a
    None target. eps_used[i] is the bisection amplitude behind antenna i's
    transmission (post-rescale where one applies).
    """

    deltas: np.ndarray  # (m, p) complex128
    targets: tuple
    eps_used: tuple
    p_max: float
    fooled_in_craft: bool

    def __post_init__(self):
        if self.total_power() > self.p_max * _POWER_SLACK:
            raise ValueError("perturbation set exceeds its power budget")

    @property
    def m(self) -> int:
        return int(self.deltas.shape[0])

    def total_power(self) -> float:
        return float(np.sum(np.abs(self.deltas) ** 2))


@dataclass(frozen=True)
class BisectionResult:
    eps: float
    success: bool
    probes: int


def fgm_direction(model, r, target: int, h) -> np.ndarray:
    """Unit matched-filter direction conj(h) * grad toward the target class."""
    _, g = net.loss_and_input_gradient(model, r, target)
    v = np.conj(np.asarray(h, dtype=np.complex128)) * g
    n = np.linalg.norm(v)
    if n == 0.0:
        raise DegenerateGradientError(f"zero matched gradient for target {target}")
    return v / n


def bisect_min_scale_batch(fooled_at, n: int, p_max: float, eps_acc: float):
    """Vectorized bisection for the smallest fooling amplitude per row.

    fooled_at maps an (n,) amplitude vector to an (n,) bool vector, row i
    evaluated at its own amplitude. Brackets start at [0, sqrt(p_max)];
    success is decided by one initial probe at sqrt(p_max), and the loop
    halves every bracket until its width is at most eps_acc. Returns
    (upper brackets, success flags, probe count).
    """
    root = math.sqrt(p_max)
    hi = np.full(n, root)
    lo = np.zeros(n)
    success = np.array(fooled_at(hi), dtype=bool, copy=True)
    probes = 1
    width = root
    while width > eps_acc:
        mid = 0.5 * (hi + lo)
        fooled = np.asarray(fooled_at(mid), dtype=bool)
        probes += 1
        hi = np.where(fooled, mid, hi)
        lo = np.where(fooled, lo, mid)
        width *= 0.5
    return hi, success, probes


def min_eps_bisection(model, r, apply_fn, p_max: float, eps_acc: float,
                      true_label: int) -> BisectionResult:
    """Smallest amplitude at which apply_fn(eps) is misclassified.

    apply_fn maps an amplitude to the perturbed received frame and must be
    pure with apply_fn(0) == r. A False success flag means even sqrt(p_max)
    did not flip the label, in which case eps is sqrt(p_max).
    """

    def fooled(eps_vec):
        return np.array(
            [net.predict_label(model, apply_fn(float(e))) != true_label for e in eps_vec]
        )

    eps, success, probes = bisect_min_scale_batch(fooled, 1, p_max, eps_acc)
    return BisectionResult(float(eps[0]), bool(success[0]), probes)


def _candidate_classes(n_classes: int, true_label: int) -> list:
    return [c for c in range(n_classes) if c != true_label]


def _directions(model, r, targets, H):
    """Per-antenna unit directions for every candidate class.

    Returns dirs (m, T, p) and norms (m, T); a zero norm marks a degenerate
    (antenna, class) pair whose direction row is left at zero.
    """
    _, grads = net.input_gradients_multi(model, r, targets)   # (T, p) complex128
    v = np.conj(H)[:, None, :] * grads[None, :, :]            # (m, T, p)
    norms = np.linalg.norm(v, axis=2)
    dirs = np.zeros_like(v)
    ok = norms > 0
    dirs[ok] = v[ok] / norms[ok][:, None]
    return dirs, norms


def _fooled_fn(model, r, composites, true_label):
    def fooled(eps):
        x = r[None, :] - eps[:, None] * composites
        return net.predict_labels(model, x) != true_label

    return fooled


def _pick_min(eps, success, positions):
    """Lowest-eps successful row, ties to the first; else the first row."""
    if np.any(success):
        local = int(np.argmin(np.where(success, eps, np.inf)))
    else:
        local = 0
    return positions[local], float(eps[local]), bool(success[local])


def _empty_set(m: int, p: int, cfg: AttackConfig) -> PerturbationSet:
    return PerturbationSet(np.zeros((m, p), dtype=np.complex128), (None,) * m,
                           (0.0,) * m, cfg.p_max, False)


def _replay_fooled(model, r, H, deltas, true_label: int) -> bool:
    received = r + np.sum(H * deltas, axis=0)
    return net.predict_label(model, received) != true_label


def _craft_weighted_common(model, r, H, w, cfg: AttackConfig,
                           true_label: int) -> PerturbationSet:
    m, p = H.shape
    cands = _candidate_classes(model.arch.n_classes, true_label)
    dirs, norms = _directions(model, r, cands, H)
    valid = np.flatnonzero(np.all(norms > 0, axis=0))
    if valid.size == 0:
        return _empty_set(m, p, cfg)
    contrib = w[:, None, None] * (H[:, None, :] * dirs)       # (m, T, p)
    composites = contrib.sum(axis=0)[valid]
    eps_v, suc_v, _ = bisect_min_scale_batch(
        _fooled_fn(model, r, composites, true_label), valid.size, cfg.p_max, cfg.eps_acc
    )
    pos, eps, _ = _pick_min(eps_v, suc_v, valid)
    deltas = (-eps * w)[:, None] * dirs[:, pos, :]
    target = cands[pos]
    fooled = _replay_fooled(model, r, H, deltas, true_label)
    return PerturbationSet(deltas, (target,) * m, (eps,) * m, cfg.p_max, fooled)


def _craft_weighted_independent(model, r, H, w, cfg: AttackConfig,
                                true_label: int) -> PerturbationSet:
    m, p = H.shape
    cands = _candidate_classes(model.arch.n_classes, true_label)
    t = len(cands)
    dirs, norms = _directions(model, r, cands, H)
    contrib = w[:, None, None] * (H[:, None, :] * dirs)
    valid = np.flatnonzero((norms > 0).reshape(m * t))
    if valid.size == 0:
        return _empty_set(m, p, cfg)
    rows = contrib.reshape(m * t, p)[valid]
    eps_v, suc_v, _ = bisect_min_scale_batch(
        _fooled_fn(model, r, rows, true_label), valid.size, cfg.p_max, cfg.eps_acc
    )
    deltas = np.zeros((m, p), dtype=np.complex128)
    targets = [None] * m
    eps_used = [0.0] * m
    for i in range(m):
        mask = (valid >= i * t) & (valid < (i + 1) * t)
        if not np.any(mask):
            continue  # every class degenerate on this antenna: it stays silent
        pos, eps, _ = _pick_min(eps_v[mask], suc_v[mask], valid[mask] - i * t)
        targets[i] = cands[pos]
        eps_used[i] = eps
        deltas[i] = (-eps * w[i]) * dirs[i, pos, :]
    total = float(np.sum(np.abs(deltas) ** 2))
    if total > cfg.p_max:
        scale = math.sqrt(cfg.p_max / total)
        deltas *= scale
        eps_used = [e * scale for e in eps_used]
    fooled = _replay_fooled(model, r, H, deltas, true_label)
    return PerturbationSet(deltas, tuple(targets), tuple(eps_used), cfg.p_max, fooled)


def mrpp_single(model, r, h, cfg: AttackConfig, true_label: int) -> PerturbationSet:
    """Single-antenna minimum-power targeted attack over all candidate classes."""
    h = np.asarray(h, dtype=np.complex128)
    if h.ndim != 1:
        raise ValueError("mrpp_single expects one antenna's tap vector")
    return _craft_weighted_common(model, r, h[None, :], np.ones(1), cfg, true_label)


def weighted_attack(model, r, channels: ChannelSet, weighting: str, targeting: str,
                    cfg: AttackConfig, true_label: int) -> PerturbationSet:
    """Channel-norm power weighting across antennas.

    weighting "pcg" puts more power on stronger channels (w_i proportional
    to ||h_i||), "ipcg" on weaker ones (w_i proportional to 1/||h_i||, then
    normalized to sum to one). targeting "common" bisects the joint
    all-antenna perturbation per class and picks one target for everyone;
    "independent" lets each antenna search classes with its own weighted
    perturbation alone and transmit toward its own cheapest target.
    """
    if weighting not in ("pcg", "ipcg"):
        raise ConfigurationError(f"unknown weighting {weighting!r}")
    if targeting not in ("common", "independent"):
        raise ConfigurationError(f"unknown targeting {targeting!r}")
    H = channels.h
    gains = np.linalg.norm(H, axis=1)
    if np.any(gains == 0.0):
        raise DegenerateGradientError("zero-norm channel; weights undefined")
    w = gains / gains.sum() if weighting == "pcg" else (1.0 / gains) / (1.0 / gains).sum()
    craft = _craft_weighted_common if targeting == "common" else _craft_weighted_independent
    return craft(model, r, H, w, cfg, true_label)


def saga(model, r, channels: ChannelSet, cfg: AttackConfig,
         true_label: int) -> PerturbationSet:
    """Oracle antenna selection: full-budget search per antenna, keep the cheapest."""
    H = channels.h
    m, p = H.shape
    cands = _candidate_classes(model.arch.n_classes, true_label)
    t = len(cands)
    dirs, norms = _directions(model, r, cands, H)
    rows_all = H[:, None, :] * dirs
    valid = np.flatnonzero((norms > 0).reshape(m * t))
    if valid.size == 0:
        return _empty_set(m, p, cfg)
    eps_v, suc_v, _ = bisect_min_scale_batch(
        _fooled_fn(model, r, rows_all.reshape(m * t, p)[valid], true_label),
        valid.size, cfg.p_max, cfg.eps_acc,
    )
    best = []  # (antenna, class position, eps, success)
    for i in range(m):
        mask = (valid >= i * t) & (valid < (i + 1) * t)
        if not np.any(mask):
            continue
        pos, eps, suc = _pick_min(eps_v[mask], suc_v[mask], valid[mask] - i * t)
        best.append((i, pos, eps, suc))
    winners = [b for b in best if b[3]]
    if winners:
        i_star, pos, eps, _ = min(winners, key=lambda b: (b[2], b[0]))
    else:
        i_star, pos, eps, _ = best[0]  # lowest antenna index, full budget
    deltas = np.zeros((m, p), dtype=np.complex128)
    deltas[i_star] = (-eps) * dirs[i_star, pos, :]
    targets = [None] * m
    targets[i_star] = cands[pos]
    eps_used = [0.0] * m
    eps_used[i_star] = eps
    fooled = _replay_fooled(model, r, H, deltas, true_label)
    return PerturbationSet(deltas, tuple(targets), tuple(eps_used), cfg.p_max, fooled)


def emcg_selection(H) -> tuple[np.ndarray, np.ndarray]:
    """Per-tap winning antenna (ties to the lowest index) and the virtual channel."""
    H = np.asarray(H)
    k = np.argmax(np.abs(H), axis=0)
    h_vir = H[k, np.arange(H.shape[1])]
    return k, h_vir


def emcg(model, r, channels: ChannelSet, cfg: AttackConfig,
         true_label: int) -> PerturbationSet:
    """Craft against the elementwise strongest taps, then scatter per tap.

    The virtual channel keeps the winning antenna's complex tap, so the
    scattered element rides exactly the channel it was crafted for.
    """
    H = channels.h
    m, p = H.shape
    k, h_vir = emcg_selection(H)
    vir = _craft_weighted_common(model, r, h_vir[None, :], np.ones(1), cfg, true_label)
    deltas = np.zeros((m, p), dtype=np.complex128)
    deltas[k, np.arange(p)] = vir.deltas[0]
    fooled = _replay_fooled(model, r, H, deltas, true_label)
    return PerturbationSet(deltas, (vir.targets[0],) * m, (vir.eps_used[0],) * m,
                           cfg.p_max, fooled)


def gaussian_emcg(channels: ChannelSet, cfg: AttackConfig,
                  rng: np.random.Generator) -> PerturbationSet:
    """EMCG tap selection but white Gaussian content at the full power budget."""
    H = channels.h
    m, p = H.shape
    k, _ = emcg_selection(H)
    z = rng.standard_normal(p) + 1j * rng.standard_normal(p)
    vir = z * (math.sqrt(cfg.p_max) / np.linalg.norm(z))
    deltas = np.zeros((m, p), dtype=np.complex128)
    deltas[k, np.arange(p)] = vir
    root = math.sqrt(cfg.p_max)
    return PerturbationSet(deltas, (None,) * m, (root,) * m, cfg.p_max, False)


def multi_adversary(model, r, channel_sets, cfg: AttackConfig,
                    true_label: int) -> list:
    """k uncoordinated single-antenna adversaries, each with budget p_max/k."""
    k = len(channel_sets)
    if k < 1:
        raise ConfigurationError("need at least one adversary")
    sub = AttackConfig(cfg.p_max / k, cfg.eps_acc / math.sqrt(k), cfg.kind)
    out = []
    for cs in channel_sets:
        if cs.m != 1:
            raise ConfigurationError("each adversary must have a single antenna")
        out.append(mrpp_single(model, r, cs.h[0], sub, true_label))
    return out


def craft(model, r, channels: ChannelSet, cfg: AttackConfig, true_label: int,
          rng: np.random.Generator | None = None):
    """Dispatch one attack kind; returns (perturbation sets, (m, p) delta matrix).

    The delta matrix rows align with channels.h rows, so the received signal
    is r + sum_i channels.h[i] * deltas[i] for every kind, including the
    multi-adversary split where set j owns row j.
    """
    kind = cfg.kind
    if kind is None:
        raise ConfigurationError("attack config carries no kind")
    if kind is AttackKind.MRPP1:
        psets = [mrpp_single(model, r, channels.h[0], cfg, true_label)]
        deltas = np.zeros_like(channels.h)
        deltas[0] = psets[0].deltas[0]
        return psets, deltas
    if kind is AttackKind.SAGA:
        pset = saga(model, r, channels, cfg, true_label)
        return [pset], pset.deltas
    if kind is AttackKind.EMCG:
        pset = emcg(model, r, channels, cfg, true_label)
        return [pset], pset.deltas
    if kind is AttackKind.GAUSS_EMCG:
        if rng is None:
            raise ConfigurationError("gauss_emcg needs an rng")
        pset = gaussian_emcg(channels, cfg, rng)
        return [pset], pset.deltas
    if kind is AttackKind.MULTI_ADV:
        sets = multi_adversary(model, r, [channels.antenna(i) for i in range(channels.m)],
                               cfg, true_label)
        deltas = np.vstack([s.deltas for s in sets])
        return sets, deltas
    weighting = "pcg" if kind in (AttackKind.PCG_COMMON, AttackKind.PCG_IND) else "ipcg"
    targeting = "common" if kind in (AttackKind.PCG_COMMON, AttackKind.IPCG_COMMON) else "independent"
    pset = weighted_attack(model, r, channels, weighting, targeting, cfg, true_label)
    return [pset], pset.deltas
