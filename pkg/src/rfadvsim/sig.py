"""Synthetic digital-modulation frames and labeled datasets.

Generates complex baseband frames for eight digital schemes (BPSK, QPSK,
8-PSK, 16/64-QAM, 4-PAM, CPFSK, GFSK). Constellations and waveforms are
normalized to unit average sample power; receiver noise is added per frame
at the configured SNR, so a stored frame is the signal the classifier sees.

Datasets are class-balanced, split half/half into disjoint train/test
pools, and reproducible from a single seed: frame j of class c draws its
bits and noise from a stream keyed by (seed, global frame index), so
generation is order-independent.

Binary container ("RFDS", little-endian): a 16-byte header
(magic, version u16, frame_len u16, n_classes u16, frame count u32,
reserved u16) followed by one record per frame: label u16, snr_db f32,
frame_len interleaved f32 I/Q pairs. Train frames precede test frames;
the boundary is recovered from the per-class ceil(n/2) balance rule.
A CSV export writes one frame per row.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from enum import Enum

import numpy as np

from ._io import atomic_write_bytes, atomic_write_text
from .errors import ConfigurationError, FormatError

RFDS_MAGIC = b"RFDS"
RFDS_VERSION = 1
_HEADER = struct.Struct("<4sHHHIH")
_FRAME_META = struct.Struct("<Hf")

_FSK_MOD_INDEX = 0.5
_GFSK_BT = 0.3
_GFSK_SPAN = 4  # symbols of Gaussian smoothing either side

_TRAIN_SHUFFLE_TAG = 0x545249
_TEST_SHUFFLE_TAG = 0x544553


class ModScheme(str, Enum):
    """Supported digital modulation schemes."""

    BPSK = "BPSK"
    QPSK = "QPSK"
    PSK8 = "PSK8"
    QAM16 = "QAM16"
    QAM64 = "QAM64"
    PAM4 = "PAM4"
    CPFSK = "CPFSK"
    GFSK = "GFSK"

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self]

    @property
    def is_fsk(self) -> bool:
        return self in (ModScheme.CPFSK, ModScheme.GFSK)


_BITS_PER_SYMBOL = {
    ModScheme.BPSK: 1,
    ModScheme.QPSK: 2,
    ModScheme.PSK8: 3,
    ModScheme.QAM16: 4,
    ModScheme.QAM64: 6,
    ModScheme.PAM4: 2,
    ModScheme.CPFSK: 1,
    ModScheme.GFSK: 1,
}

DEFAULT_SCHEMES = tuple(s.value for s in ModScheme)


def _coerce_scheme(scheme) -> ModScheme:
    try:
        return ModScheme(scheme)
    except ValueError:
        raise ConfigurationError(
            f"unsupported modulation scheme {scheme!r}; known: {', '.join(DEFAULT_SCHEMES)}"
        ) from None


def _gray_axis(nbits: int) -> np.ndarray:
    """Amplitude levels of one I or Q axis, indexed by the raw bit value.

    Adjacent levels differ in exactly one bit, and bit value 0 maps to the
    most positive level so that BPSK sends 0 -> +1.
    """
    m = 1 << nbits
    out = np.empty(m)
    for k in range(m):
        out[k ^ (k >> 1)] = float((m - 1) - 2 * k)
    return out


def constellation(scheme) -> np.ndarray:
    """Unit-mean-power point table indexed by the symbol's bit value (MSB first)."""
    scheme = _coerce_scheme(scheme)
    if scheme.is_fsk:
        raise ConfigurationError(f"{scheme.value} is a phase-trajectory scheme; no point table")
    if scheme is ModScheme.BPSK:
        pts = _gray_axis(1).astype(complex)
    elif scheme is ModScheme.QPSK:
        ax = _gray_axis(1)
        pts = np.array([complex(ax[v >> 1], ax[v & 1]) for v in range(4)])
    elif scheme is ModScheme.PSK8:
        pts = np.empty(8, dtype=complex)
        for k in range(8):
            pts[k ^ (k >> 1)] = np.exp(2j * np.pi * k / 8.0)
    elif scheme is ModScheme.QAM16:
        ax = _gray_axis(2)
        pts = np.array([complex(ax[v >> 2], ax[v & 3]) for v in range(16)])
    elif scheme is ModScheme.QAM64:
        ax = _gray_axis(3)
        pts = np.array([complex(ax[v >> 3], ax[v & 7]) for v in range(64)])
    elif scheme is ModScheme.PAM4:
        pts = _gray_axis(2).astype(complex)
    else:  # pragma: no cover
        raise ConfigurationError(f"unsupported modulation scheme {scheme!r}")
    rms = math.sqrt(float(np.mean(np.abs(pts) ** 2)))
    return pts / rms


def bits_needed(scheme, sps: int, frame_len: int) -> int:
    scheme = _coerce_scheme(scheme)
    n_sym = -(-frame_len // sps)
    return n_sym * scheme.bits_per_symbol


def rrc_taps(sps: int, rolloff: float, span_symbols: int = 8) -> np.ndarray:
    """Root-raised-cosine taps scaled so unit-energy symbols keep unit sample power."""
    if not 0.0 < rolloff < 1.0:
        raise ConfigurationError("rrc rolloff must lie in (0, 1)")
    n = span_symbols * sps
    t = (np.arange(n + 1) - n / 2.0) / sps
    b = rolloff
    taps = np.empty_like(t)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            taps[i] = 1.0 - b + 4.0 * b / math.pi
        elif abs(abs(ti) - 1.0 / (4.0 * b)) < 1e-12:
            taps[i] = (b / math.sqrt(2.0)) * (
                (1.0 + 2.0 / math.pi) * math.sin(math.pi / (4.0 * b))
                + (1.0 - 2.0 / math.pi) * math.cos(math.pi / (4.0 * b))
            )
        else:
            taps[i] = (
                math.sin(math.pi * ti * (1.0 - b))
                + 4.0 * b * ti * math.cos(math.pi * ti * (1.0 + b))
            ) / (math.pi * ti * (1.0 - (4.0 * b * ti) ** 2))
    return taps * math.sqrt(sps / float(np.sum(taps**2)))


def _shape_circular(syms: np.ndarray, sps: int, frame_len: int, taps: np.ndarray) -> np.ndarray:
    # Circular pulse shaping: every sample sees full filter support, so the
    # expected per-sample power stays exactly ||taps||^2 / sps.
    if frame_len % sps:
        raise ConfigurationError("rrc pulse shaping needs frame_len divisible by sps")
    if len(taps) > frame_len:
        raise ConfigurationError("rrc span exceeds the frame length")
    imp = np.zeros(frame_len, dtype=complex)
    imp[::sps] = syms[: frame_len // sps]
    kern = np.zeros(frame_len)
    half = len(taps) // 2
    idx = (np.arange(len(taps)) - half) % frame_len
    np.add.at(kern, idx, taps)
    return np.fft.ifft(np.fft.fft(imp) * np.fft.fft(kern))


def _gaussian_freq_kernel(sps: int, bt: float, span: int = _GFSK_SPAN) -> np.ndarray:
    sigma = sps * math.sqrt(math.log(2.0)) / (2.0 * math.pi * bt)
    half = span * sps // 2
    t = np.arange(-half, half + 1, dtype=float)
    k = np.exp(-0.5 * (t / sigma) ** 2)
    return k / k.sum()


def modulate(bits, scheme, sps: int = 8, frame_len: int = 128, pulse: str = "rect",
             rrc_rolloff: float = 0.35) -> np.ndarray:
    """Map a bit vector onto one unit-power complex baseband frame.

    Deterministic in its inputs; consumes the first bits_needed() bits.
    Linear schemes use a rectangular pulse by default, or circular
    root-raised-cosine shaping with pulse="rrc". The FSK schemes integrate
    a rectangular (CPFSK) or Gaussian-smoothed (GFSK) frequency pulse with
    modulation index 0.5.
    """
    scheme = _coerce_scheme(scheme)
    if sps < 1:
        raise ConfigurationError("sps must be at least 1")
    if frame_len < 1:
        raise ConfigurationError("frame_len must be at least 1")
    if pulse not in ("rect", "rrc"):
        raise ConfigurationError(f"unknown pulse {pulse!r}; choose rect or rrc")
    need = bits_needed(scheme, sps, frame_len)
    bits = np.asarray(bits)
    if bits.size < need:
        raise ConfigurationError(f"{scheme.value} frame needs {need} bits, got {bits.size}")
    b = bits.reshape(-1)[:need].astype(np.int64)
    if np.any((b != 0) & (b != 1)):
        raise ConfigurationError("bits must be 0 or 1")

    if scheme.is_fsk:
        nrz = 1.0 - 2.0 * b
        freq = np.repeat(nrz, sps)[:frame_len] / sps
        if scheme is ModScheme.GFSK:
            freq = np.convolve(freq, _gaussian_freq_kernel(sps, _GFSK_BT), mode="same")
        phase = math.pi * _FSK_MOD_INDEX * np.cumsum(freq)
        return np.exp(1j * phase)

    k = scheme.bits_per_symbol
    weights = 1 << np.arange(k - 1, -1, -1)
    vals = b.reshape(-1, k) @ weights
    syms = constellation(scheme)[vals]
    if pulse == "rect":
        return np.repeat(syms, sps)[:frame_len].astype(complex)
    return _shape_circular(syms, sps, frame_len, rrc_taps(sps, rrc_rolloff))


def add_awgn(x, snr_db: float, rng: np.random.Generator) -> np.ndarray:
    """Add circular complex Gaussian noise at per-sample power 10**(-snr_db/10).

    Assumes the input has unit average sample power. snr_db = +inf disables
    the noise and returns a copy.
    """
    x = np.asarray(x)
    if math.isinf(snr_db) and snr_db > 0:
        return x.copy()
    sigma2 = 10.0 ** (-snr_db / 10.0)
    scale = math.sqrt(sigma2 / 2.0)
    noise = rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape)
    return x + scale * noise


@dataclass
class Frame:
    """One classifier input: complex64 samples, class label, and the SNR baked in."""

    iq: np.ndarray
    label: int
    snr_db: float


@dataclass
class Dataset:
    frames: list
    class_names: tuple
    split: str  # "train" | "test"

    def __len__(self) -> int:
        return len(self.frames)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def frame_len(self) -> int:
        return int(self.frames[0].iq.shape[0])

    def labels(self) -> np.ndarray:
        return np.array([f.label for f in self.frames], dtype=np.int64)

    def iq_matrix(self) -> np.ndarray:
        return np.stack([f.iq for f in self.frames])


@dataclass(frozen=True)
class DatasetConfig:
    schemes: tuple = DEFAULT_SCHEMES
    frames_per_class: int = 512
    snr_db: float = 10.0
    sps: int = 8
    frame_len: int = 128
    pulse: str = "rect"
    rrc_rolloff: float = 0.35
    seed: int = 0

    def __post_init__(self):
        if self.frames_per_class < 1:
            raise ConfigurationError("frames_per_class must be at least 1")
        if self.sps < 1:
            raise ConfigurationError("sps must be at least 1")
        names = tuple(_coerce_scheme(s).value for s in self.schemes)
        if len(set(names)) != len(names):
            raise ConfigurationError("duplicate scheme in dataset config")
        object.__setattr__(self, "schemes", names)


def _shuffle_frames(frames: list, key) -> None:
    perm = np.random.default_rng(key).permutation(len(frames))
    frames[:] = [frames[i] for i in perm]


def build_dataset(cfg: DatasetConfig) -> tuple[Dataset, Dataset]:
    """Generate the disjoint train and test splits described by the config.

    Per class, the first ceil(frames_per_class/2) generated frames go to the
    train pool and the rest to test, then each pool is shuffled. Everything
    derives from cfg.seed alone.
    """
    names = cfg.schemes
    fpc = cfg.frames_per_class
    n_train_per = (fpc + 1) // 2
    snr_stored = float(np.float32(cfg.snr_db))
    train: list = []
    test: list = []
    for c, name in enumerate(names):
        need = bits_needed(name, cfg.sps, cfg.frame_len)
        for j in range(fpc):
            rng = np.random.default_rng([cfg.seed, c * fpc + j])
            bits = rng.integers(0, 2, size=need)
            x = modulate(bits, name, cfg.sps, cfg.frame_len, cfg.pulse, cfg.rrc_rolloff)
            y = add_awgn(x, cfg.snr_db, rng)
            frame = Frame(y.astype(np.complex64), c, snr_stored)
            (train if j < n_train_per else test).append(frame)
    _shuffle_frames(train, [cfg.seed, _TRAIN_SHUFFLE_TAG])
    _shuffle_frames(test, [cfg.seed, _TEST_SHUFFLE_TAG])
    return Dataset(train, names, "train"), Dataset(test, names, "test")


def _check_consistent(train: Dataset, test: Dataset) -> tuple[int, int]:
    if train.class_names != test.class_names:
        raise ConfigurationError("train/test class names differ")
    p = train.frame_len
    for ds in (train, test):
        for f in ds.frames:
            if f.iq.shape != (p,):
                raise ConfigurationError("inconsistent frame length in dataset")
    return p, train.n_classes


def save_dataset(path, train: Dataset, test: Dataset) -> None:
    p, n_classes = _check_consistent(train, test)
    frames = list(train.frames) + list(test.frames)
    chunks = [_HEADER.pack(RFDS_MAGIC, RFDS_VERSION, p, n_classes, len(frames), 0)]
    for f in frames:
        chunks.append(_FRAME_META.pack(f.label, f.snr_db))
        inter = np.empty(2 * p, dtype="<f4")
        inter[0::2] = f.iq.real
        inter[1::2] = f.iq.imag
        chunks.append(inter.tobytes())
    atomic_write_bytes(path, b"".join(chunks))


def load_dataset(path) -> tuple[Dataset, Dataset]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, p, n_classes, count, _ = _HEADER.unpack_from(blob, 0)
    if magic != RFDS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RFDS_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    rec = _FRAME_META.size + 8 * p
    if len(blob) != _HEADER.size + count * rec:
        raise FormatError(f"{path}: size mismatch for {count} frames")
    frames = []
    off = _HEADER.size
    for _ in range(count):
        label, snr_db = _FRAME_META.unpack_from(blob, off)
        if label >= n_classes:
            raise FormatError(f"{path}: label {label} out of range")
        raw = np.frombuffer(blob, dtype="<f4", count=2 * p, offset=off + _FRAME_META.size)
        iq = (raw[0::2] + 1j * raw[1::2]).astype(np.complex64)
        frames.append(Frame(iq, int(label), float(snr_db)))
        off += rec
    names = DEFAULT_SCHEMES if n_classes == len(DEFAULT_SCHEMES) else tuple(
        f"class{i}" for i in range(n_classes)
    )
    counts = np.bincount([f.label for f in frames], minlength=n_classes)
    n_train = int(np.sum((counts + 1) // 2))
    return (
        Dataset(frames[:n_train], names, "train"),
        Dataset(frames[n_train:], names, "test"),
    )


def export_csv(path, train: Dataset, test: Dataset) -> None:
    """One frame per row: split, label, snr_db, then interleaved I/Q samples."""
    p, _ = _check_consistent(train, test)
    header = "split,label,snr_db," + ",".join(f"i{t},q{t}" for t in range(p))
    lines = [header]
    for ds in (train, test):
        for f in ds.frames:
            vals = np.empty(2 * p, dtype=np.float64)
            vals[0::2] = f.iq.real
            vals[1::2] = f.iq.imag
            body = ",".join(f"{v:.9g}" for v in vals)
            lines.append(f"{ds.split},{f.label},{f.snr_db:.9g},{body}")
    atomic_write_text(path, "\n".join(lines) + "\n")
