"""Adversary-to-receiver channel model.

Each antenna's length-p tap vector is path loss x log-normal shadowing x
per-tap Rayleigh fading:

    h_i[t] = K * (d0/d)**gamma * psi_i * g_i[t]

with psi_i = 10**(X_i/20), X_i ~ Normal(0, shadow_sigma_db**2) drawn once
per antenna per realisation, and g_i[t] zero-mean circular complex Gaussian
with E|g|^2 = rayleigh_var, i.i.d. across taps. Cross-antenna correlation
rho is imposed per tap on the fading component only, by mixing each
antenna's private Gaussian with one shared stream; shadowing stays
independent across antennas.

Antenna i always consumes substream (seed..., i) and the shared mixing
component a fixed tag, so the first antennas of an m=4 realisation equal
an m=2 realisation with the same seed. Paired comparisons across antenna
counts and correlation levels rely on this.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError

_SHARED_FADING_TAG = 0xC0FFEE


@dataclass(frozen=True)
class ChannelParams:
    K: float = 1.0
    d0: float = 1.0
    d: float = 10.0
    gamma: float = 2.7
    shadow_sigma_db: float = 8.0
    rayleigh_var: float = 1.0
    rho: float = 0.0
    m: int = 1
    p: int = 128

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ConfigurationError("rho must lie in [0, 1)")
        if self.rayleigh_var <= 0.0:
            raise ConfigurationError("rayleigh_var must be positive")
        if not self.d >= self.d0 > 0.0:
            raise ConfigurationError("require d >= d0 > 0")
        if self.shadow_sigma_db < 0.0:
            raise ConfigurationError("shadow_sigma_db must be nonnegative")
        if self.m < 1 or self.p < 1:
            raise ConfigurationError("m and p must be at least 1")

    @property
    def amplitude_factor(self) -> float:
        return self.K * (self.d0 / self.d) ** self.gamma

    def with_(self, **kw) -> "ChannelParams":
        return replace(self, **kw)


@dataclass(frozen=True)
class ChannelSet:
    """m per-antenna tap vectors sharing one path-loss/shadowing draw policy."""

    h: np.ndarray  # (m, p) complex128
    params: ChannelParams
    seed: tuple

    @property
    def m(self) -> int:
        return int(self.h.shape[0])

    @property
    def p(self) -> int:
        return int(self.h.shape[1])

    def antenna(self, i: int) -> "ChannelSet":
        return ChannelSet(self.h[i : i + 1], self.params.with_(m=1), self.seed + (i,))


def _complex_normal(rng: np.random.Generator, n: int, var: float) -> np.ndarray:
    scale = math.sqrt(var / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def sample_channels(params: ChannelParams, seed) -> ChannelSet:
    """Draw one channel realisation, reproducible from (params, seed).

    seed is an int or a sequence of ints; antenna i uses substream
    (*seed, i), drawing its shadowing value first and its fading taps
    second.
    """
    base = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(v) for v in seed)
    amp = params.amplitude_factor
    mix_self = math.sqrt(1.0 - params.rho)
    mix_shared = math.sqrt(params.rho)
    shared = None
    if params.rho > 0.0:
        rng_s = np.random.default_rng([*base, _SHARED_FADING_TAG])
        shared = _complex_normal(rng_s, params.p, params.rayleigh_var)
    h = np.empty((params.m, params.p), dtype=np.complex128)
    for i in range(params.m):
        rng = np.random.default_rng([*base, i])
        x_db = rng.normal(0.0, params.shadow_sigma_db) if params.shadow_sigma_db > 0 else 0.0
        psi = 10.0 ** (x_db / 20.0)
        g = _complex_normal(rng, params.p, params.rayleigh_var)
        if shared is not None:
            g = mix_self * g + mix_shared * shared
        h[i] = (amp * psi) * g
    return ChannelSet(h, params, base)


def apply_channel(h, x) -> np.ndarray:
    """Per-tap product h[t] * x[t] (the diagonal channel)."""
    h = np.asarray(h)
    x = np.asarray(x)
    if h.shape != x.shape:
        raise ValueError(f"channel/signal length mismatch: {h.shape} vs {x.shape}")
    return h * x


def channel_gain(h) -> float:
    """Euclidean norm of a tap vector."""
    return float(np.linalg.norm(h))


def mean_received_power_gain(params: ChannelParams) -> float:
    """Expected |h[t]|^2: squared path loss x lognormal second moment x fading power."""
    a = math.log(10.0) / 20.0
    e_psi2 = math.exp(2.0 * (a * params.shadow_sigma_db) ** 2)
    return (params.amplitude_factor**2) * e_psi2 * params.rayleigh_var
