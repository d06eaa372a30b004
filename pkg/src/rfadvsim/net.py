"""Convolutional modulation classifier with exact input gradients.

A complex frame enters as a 2 x p real tensor (row 0 = I, row 1 = Q) and
passes through conv (1 x k) along time, relu, conv (2 x k) across both
rows, relu, a dense relu layer, and a dense softmax head. Training is
plain seeded minibatch SGD on categorical cross-entropy. Parameters are
float32; astype(np.float64) gives a verification mode for gradient tests.

The complex input gradient is packed as g[t] = dL/dI_t + 1j * dL/dQ_t,
computed by backpropagation, never by differencing.

Model file ("RFMC", little-endian): header (magic, version u16, p, C,
conv1 filters/kernel, conv2 filters/kernel, dense width as u16, epochs
u32, final_loss f32) followed by the parameters as raw f32 in the fixed
order w1, b1, w2, b2, w3, b3, w4, b4.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._io import atomic_write_bytes
from .errors import ConfigurationError, FormatError
from .sig import Dataset

RFMC_MAGIC = b"RFMC"
RFMC_VERSION = 1
_HEADER = struct.Struct("<4sHHHHHHHHIf")


@dataclass(frozen=True)
class ModelArch:
    frame_len: int = 128
    n_classes: int = 8
    conv1_filters: int = 32
    conv1_kernel: int = 3
    conv2_filters: int = 16
    conv2_kernel: int = 3
    dense_units: int = 64

    def __post_init__(self):
        for name in ("frame_len", "n_classes", "conv1_filters", "conv1_kernel",
                     "conv2_filters", "conv2_kernel", "dense_units"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"arch field {name} must be at least 1")
        if self.n_classes < 2:
            raise ConfigurationError("need at least 2 classes")
        if self.conv2_len < 1:
            raise ConfigurationError("kernels too long for the frame")

    @property
    def conv1_len(self) -> int:
        return self.frame_len - self.conv1_kernel + 1

    @property
    def conv2_len(self) -> int:
        return self.conv1_len - self.conv2_kernel + 1

    @property
    def flat_len(self) -> int:
        return self.conv2_filters * self.conv2_len


def paper_scale_arch(frame_len: int = 128, n_classes: int = 8) -> ModelArch:
    """The large two-conv/two-dense preset (256 and 80 filters, 256-wide dense)."""
    return ModelArch(frame_len, n_classes, 256, 3, 80, 3, 256)


def small_arch(frame_len: int = 128, n_classes: int = 8) -> ModelArch:
    """Reduced preset for quick experiments and tests."""
    return ModelArch(frame_len, n_classes, 8, 3, 8, 3, 24)


@dataclass
class Model:
    """Classifier parameters; treated as immutable once training finishes."""

    arch: ModelArch
    w1: np.ndarray  # (f1, k1)
    b1: np.ndarray  # (f1,)
    w2: np.ndarray  # (f2, f1, 2, k2)
    b2: np.ndarray  # (f2,)
    w3: np.ndarray  # (dense, flat)
    b3: np.ndarray  # (dense,)
    w4: np.ndarray  # (C, dense)
    b4: np.ndarray  # (C,)
    epochs_trained: int = 0
    final_loss: float = float("nan")

    @property
    def dtype(self):
        return self.w1.dtype

    def params(self) -> tuple:
        return (self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4)

    def param_count(self) -> int:
        return int(sum(a.size for a in self.params()))

    def astype(self, dtype) -> "Model":
        return Model(self.arch, *(a.astype(dtype) for a in self.params()),
                     epochs_trained=self.epochs_trained, final_loss=self.final_loss)

    def copy(self) -> "Model":
        return self.astype(self.dtype)


def init_model(arch: ModelArch, seed: int) -> Model:
    """Fan-in-scaled uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    dt = np.float32

    def uni(shape, fan_in):
        lim = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-lim, lim, size=shape).astype(dt)

    a = arch
    w1 = uni((a.conv1_filters, a.conv1_kernel), a.conv1_kernel)
    w2 = uni((a.conv2_filters, a.conv1_filters, 2, a.conv2_kernel),
             a.conv1_filters * 2 * a.conv2_kernel)
    w3 = uni((a.dense_units, a.flat_len), a.flat_len)
    w4 = uni((a.n_classes, a.dense_units), a.dense_units)
    return Model(arch, w1, np.zeros(a.conv1_filters, dt), w2, np.zeros(a.conv2_filters, dt),
                 w3, np.zeros(a.dense_units, dt), w4, np.zeros(a.n_classes, dt))


def pack_frames(iq, dtype) -> np.ndarray:
    """Complex (..., p) -> real (..., 2, p) with I on row 0 and Q on row 1."""
    x = np.asarray(iq)
    return np.stack((x.real, x.imag), axis=-2).astype(dtype, copy=False)


def _forward(model: Model, X: np.ndarray, want_cache: bool):
    a = model.arch
    B = X.shape[0]
    win1 = sliding_window_view(X, a.conv1_kernel, axis=2)          # (B,2,L1,k1)
    z1 = np.moveaxis(win1 @ model.w1.T + model.b1, 3, 1)           # (B,f1,2,L1)
    a1 = np.maximum(z1, 0)
    win2 = sliding_window_view(a1, a.conv2_kernel, axis=3)         # (B,f1,2,L2,k2)
    cols2 = win2.transpose(0, 3, 1, 2, 4).reshape(B * a.conv2_len, -1)
    w2mat = model.w2.reshape(a.conv2_filters, -1)
    z2 = (cols2 @ w2mat.T).reshape(B, a.conv2_len, a.conv2_filters) + model.b2
    z2 = z2.transpose(0, 2, 1)                                     # (B,f2,L2)
    a2 = np.maximum(z2, 0)
    flat = a2.reshape(B, a.flat_len)
    z3 = flat @ model.w3.T + model.b3
    a3 = np.maximum(z3, 0)
    logits = a3 @ model.w4.T + model.b4
    if not want_cache:
        return logits, None
    cache = {"X": X, "win1": win1, "m1": z1 > 0, "a1": a1, "cols2": cols2,
             "m2": z2 > 0, "flat": flat, "m3": z3 > 0, "a3": a3}
    return logits, cache


def _backward(model: Model, cache, dlogits, want_param_grads: bool):
    a = model.arch
    B = dlogits.shape[0]
    w2mat = model.w2.reshape(a.conv2_filters, -1)

    dz3 = (dlogits @ model.w4) * cache["m3"]
    dz2 = (dz3 @ model.w3).reshape(B, a.conv2_filters, a.conv2_len) * cache["m2"]
    dz2cols = dz2.transpose(0, 2, 1).reshape(B * a.conv2_len, a.conv2_filters)
    dwin2 = (dz2cols @ w2mat).reshape(B, a.conv2_len, a.conv1_filters, 2, a.conv2_kernel)
    da1 = np.zeros((B, a.conv1_filters, 2, a.conv1_len), dtype=dlogits.dtype)
    for k in range(a.conv2_kernel):
        da1[:, :, :, k : k + a.conv2_len] += dwin2[:, :, :, :, k].transpose(0, 2, 3, 1)
    dz1 = da1 * cache["m1"]
    tmp = np.tensordot(dz1, model.w1, axes=([1], [0]))             # (B,2,L1,k1)
    dX = np.zeros((B, 2, a.frame_len), dtype=dlogits.dtype)
    for k in range(a.conv1_kernel):
        dX[:, :, k : k + a.conv1_len] += tmp[:, :, :, k]
    if not want_param_grads:
        return dX, None
    grads = {
        "w4": dlogits.T @ cache["a3"],
        "b4": dlogits.sum(0),
        "w3": dz3.T @ cache["flat"],
        "b3": dz3.sum(0),
        "w2": (dz2cols.T @ cache["cols2"]).reshape(model.w2.shape),
        "b2": dz2.sum(axis=(0, 2)),
        "w1": np.tensordot(dz1, cache["win1"], axes=([0, 2, 3], [0, 1, 2])),
        "b1": dz1.sum(axis=(0, 2, 3)),
    }
    return dX, grads


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    s = logits - logits.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def _check_frame(model: Model, iq: np.ndarray) -> np.ndarray:
    iq = np.asarray(iq)
    if iq.shape[-1] != model.arch.frame_len:
        raise ValueError(f"frame length {iq.shape[-1]} does not match arch "
                         f"{model.arch.frame_len}")
    return iq


def _target_index(target, n_classes: int) -> int:
    """Accept a class index or a one-hot vector."""
    if np.ndim(target) == 0:
        idx = int(target)
    else:
        vec = np.asarray(target)
        if vec.shape != (n_classes,) or vec.sum() != 1 or not np.all((vec == 0) | (vec == 1)):
            raise ValueError("one-hot target must contain exactly one 1")
        idx = int(np.argmax(vec))
    if not 0 <= idx < n_classes:
        raise ValueError(f"target class {idx} out of range [0, {n_classes})")
    return idx


def one_hot(label: int, n_classes: int) -> np.ndarray:
    vec = np.zeros(n_classes)
    vec[label] = 1.0
    return vec


def forward(model: Model, iq) -> tuple[np.ndarray, np.ndarray]:
    """Logits and softmax probabilities for one complex frame."""
    iq = _check_frame(model, iq)
    X = pack_frames(iq[None, :], model.dtype)
    logits, _ = _forward(model, X, want_cache=False)
    probs = np.exp(_log_softmax(logits))
    return logits[0], probs[0]


def predict_labels(model: Model, iq_batch) -> np.ndarray:
    iq_batch = _check_frame(model, np.atleast_2d(iq_batch))
    X = pack_frames(iq_batch, model.dtype)
    logits, _ = _forward(model, X, want_cache=False)
    return logits.argmax(axis=1)


def predict_label(model: Model, iq) -> int:
    return int(predict_labels(model, np.asarray(iq)[None, :])[0])


def input_gradients_multi(model: Model, iq, targets) -> tuple[np.ndarray, np.ndarray]:
    """Per-target loss and complex input gradient for one frame, batched.

    Returns (losses (T,), grads (T, p) complex128) for cross-entropy toward
    each target class.
    """
    iq = _check_frame(model, iq)
    idx = np.array([_target_index(t, model.arch.n_classes) for t in targets])
    T = len(idx)
    X = pack_frames(np.broadcast_to(iq, (T, iq.shape[-1])), model.dtype)
    logits, cache = _forward(model, X, want_cache=True)
    logsm = _log_softmax(logits)
    losses = -logsm[np.arange(T), idx]
    dlogits = np.exp(logsm)
    dlogits[np.arange(T), idx] -= 1.0
    dX, _ = _backward(model, cache, dlogits, want_param_grads=False)
    grads = dX[:, 0, :].astype(np.complex128) + 1j * dX[:, 1, :].astype(np.complex128)
    return losses.astype(np.float64), grads


def loss_and_input_gradient(model: Model, iq, target) -> tuple[float, np.ndarray]:
    """Cross-entropy toward the target class and its packed complex gradient."""
    losses, grads = input_gradients_multi(model, iq, [target])
    return float(losses[0]), grads[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 64
    lr: float = 0.01
    seed: int = 0


def train(model: Model, dataset: Dataset, hyper: TrainConfig = TrainConfig()) -> Model:
    """Seeded minibatch SGD; returns a new model, leaving the input untouched."""
    if dataset.split != "train":
        raise ConfigurationError(f"training needs the train split, got {dataset.split!r}")
    if not dataset.frames:
        raise ConfigurationError("training dataset is empty")
    dt = model.dtype
    X_all = pack_frames(dataset.iq_matrix(), dt)
    y_all = dataset.labels()
    if y_all.max() >= model.arch.n_classes:
        raise ConfigurationError("dataset labels exceed the model's class count")
    out = model.copy()
    rng = np.random.default_rng(hyper.seed)
    n = len(y_all)
    lr = dt.type(hyper.lr)
    epoch_loss = float("nan")
    names = ("w1", "b1", "w2", "b2", "w3", "b3", "w4", "b4")
    for _ in range(hyper.epochs):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, hyper.batch_size):
            idx = perm[start : start + hyper.batch_size]
            xb, yb = X_all[idx], y_all[idx]
            logits, cache = _forward(out, xb, want_cache=True)
            logsm = _log_softmax(logits)
            loss_sum += float(-logsm[np.arange(len(idx)), yb].sum())
            dlogits = np.exp(logsm)
            dlogits[np.arange(len(idx)), yb] -= 1.0
            dlogits /= dt.type(len(idx))
            _, grads = _backward(out, cache, dlogits, want_param_grads=True)
            for name in names:
                getattr(out, name)[...] -= lr * grads[name]
        epoch_loss = loss_sum / n
    out.epochs_trained = model.epochs_trained + hyper.epochs
    out.final_loss = epoch_loss
    return out


def evaluate_accuracy(model: Model, dataset: Dataset, chunk: int = 1024) -> float:
    """Fraction of frames whose argmax matches the label."""
    if not dataset.frames:
        raise ValueError("cannot evaluate on an empty dataset")
    labels = dataset.labels()
    iq = dataset.iq_matrix()
    correct = 0
    for start in range(0, len(labels), chunk):
        pred = predict_labels(model, iq[start : start + chunk])
        correct += int((pred == labels[start : start + chunk]).sum())
    return correct / len(labels)


def save_model(model: Model, path) -> None:
    a = model.arch
    header = _HEADER.pack(RFMC_MAGIC, RFMC_VERSION, a.frame_len, a.n_classes,
                          a.conv1_filters, a.conv1_kernel, a.conv2_filters,
                          a.conv2_kernel, a.dense_units, model.epochs_trained,
                          model.final_loss)
    blob = b"".join(np.ascontiguousarray(arr, dtype="<f4").tobytes()
                    for arr in model.params())
    atomic_write_bytes(path, header + blob)


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, p, nc, f1, k1, f2, k2, dense, epochs, final_loss = _HEADER.unpack_from(data)
    if magic != RFMC_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != RFMC_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    arch = ModelArch(p, nc, f1, k1, f2, k2, dense)
    shapes = [(f1, k1), (f1,), (f2, f1, 2, k2), (f2,), (dense, arch.flat_len),
              (dense,), (nc, dense), (nc,)]
    total = sum(int(np.prod(s)) for s in shapes)
    if len(data) != _HEADER.size + 4 * total:
        raise FormatError(f"{path}: parameter blob size mismatch")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size)
    arrs = []
    off = 0
    for s in shapes:
        n = int(np.prod(s))
        arrs.append(flat[off : off + n].reshape(s).astype(np.float32))
        off += n
    return Model(arch, *arrs, epochs_trained=int(epochs), final_loss=float(final_loss))
