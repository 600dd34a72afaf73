"""Multi-label feedforward classifier over encoded instruction calls.

Fixed architecture 151 -> 150 -> 100 -> 79: two relu hidden layers, logistic
output, one independent probability per exploit label.  Trained with plain
minibatch gradient descent on mean binary cross-entropy.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels

LAYER_SIZES = (151, 150, 100, 79)
N_LABELS = LAYER_SIZES[-1]
PARAM_COUNT = sum(
    LAYER_SIZES[i] * LAYER_SIZES[i + 1] + LAYER_SIZES[i + 1]
    for i in range(len(LAYER_SIZES) - 1)
)  # 45879

_SHAPES = (
    ("w1", (150, 151)),
    ("b1", (150,)),
    ("w2", (100, 150)),
    ("b2", (100,)),
    ("w3", (79, 100)),
    ("b3", (79,)),
)

_MAGIC = b"CWMLP\x00"
_FORMAT_VERSION = 1
_ACT_RELU = 1
_ACT_LOGISTIC = 2
_LOSS_CLAMP = 1e-7


class ModelFormatError(ValueError):
    """Model file is truncated, has a bad header, or corrupt payload."""


class ArchitectureMismatch(ModelFormatError):
    """Model file declares layer sizes other than 151/150/100/79."""


@dataclass(eq=False)
class MlpModel:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    seed: int = 0

    def __post_init__(self):
        for name, shape in _SHAPES:
            arr = np.ascontiguousarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"{name}: non-finite parameter values")
            setattr(self, name, arr)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MlpModel):
            return NotImplemented
        return self.seed == other.seed and all(
            np.array_equal(getattr(self, name), getattr(other, name)) for name, _ in _SHAPES
        )

    def tensors(self):
        return [(name, getattr(self, name)) for name, _ in _SHAPES]

    def param_count(self) -> int:
        return sum(arr.size for _, arr in self.tensors())

    def copy(self) -> "MlpModel":
        return MlpModel(
            *(getattr(self, name).copy() for name, _ in _SHAPES), seed=self.seed
        )


def init_model(seed: int = 0) -> MlpModel:
    """Seeded init: weights uniform in +-sqrt(6/(fan_in+fan_out)), biases zero."""
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(LAYER_SIZES[:-1], LAYER_SIZES[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        params.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        params.append(np.zeros(fan_out))
    return MlpModel(*params, seed=seed)


def forward(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Probabilities for one encoded call, via the active kernel backend."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.shape != (LAYER_SIZES[0],):
        raise ValueError(f"expected input shape ({LAYER_SIZES[0]},), got {x.shape}")
    return kernels.mlp_forward(x, model.w1, model.b1, model.w2, model.b2, model.w3, model.b3)


def forward_batch(model: MlpModel, x: np.ndarray) -> np.ndarray:
    """Vectorized forward pass over an (n, 151) batch (numpy path)."""
    x = np.asarray(x, dtype=np.float64)
    h1 = np.maximum(x @ model.w1.T + model.b1, 0.0)
    h2 = np.maximum(h1 @ model.w2.T + model.b2, 0.0)
    return kernels._sigmoid_stable(h2 @ model.w3.T + model.b3)


@dataclass(frozen=True)
class ExploitPrediction:
    probabilities: np.ndarray
    predicted: frozenset[int]


def predict(model: MlpModel, x: np.ndarray, threshold: float = 0.5) -> ExploitPrediction:
    """Labels whose probability clears the (inclusive) threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"classification threshold must lie in (0, 1), got {threshold}")
    probs = forward(model, x)
    predicted = frozenset(int(i) for i in np.nonzero(probs >= threshold)[0])
    return ExploitPrediction(probabilities=probs, predicted=predicted)


def bce_loss(y: np.ndarray, t: np.ndarray) -> float:
    """Mean binary cross-entropy with probabilities clamped to [1e-7, 1-1e-7]."""
    y = np.clip(np.asarray(y, dtype=np.float64), _LOSS_CLAMP, 1.0 - _LOSS_CLAMP)
    t = np.asarray(t, dtype=np.float64)
    return float(-np.mean(t * np.log(y) + (1.0 - t) * np.log(1.0 - y)))


def loss_and_grads(model: MlpModel, x: np.ndarray, t: np.ndarray):
    """Batch loss plus analytic gradients for every parameter tensor.

    The gradient uses the usual logistic/cross-entropy cancellation, which is
    exact wherever the clamp in :func:`bce_loss` is inactive.
    """
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    n = x.shape[0]
    z1 = x @ model.w1.T + model.b1
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ model.w2.T + model.b2
    h2 = np.maximum(z2, 0.0)
    y = kernels._sigmoid_stable(h2 @ model.w3.T + model.b3)

    dz3 = (y - t) / (n * N_LABELS)
    dw3 = dz3.T @ h2
    db3 = dz3.sum(axis=0)
    dh2 = dz3 @ model.w3
    dz2 = dh2 * (z2 > 0.0)
    dw2 = dz2.T @ h1
    db2 = dz2.sum(axis=0)
    dh1 = dz2 @ model.w2
    dz1 = dh1 * (z1 > 0.0)
    dw1 = dz1.T @ x
    db1 = dz1.sum(axis=0)

    grads = {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2, "w3": dw3, "b3": db3}
    return bce_loss(y, t), grads


@dataclass
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainReport:
    initial_loss: float
    final_loss: float
    epoch_losses: list[float] = field(default_factory=list)


def train(x: np.ndarray, t: np.ndarray, config: TrainConfig) -> tuple[MlpModel, TrainReport]:
    """Minibatch gradient descent from a seeded init.  Deterministic per seed."""
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != LAYER_SIZES[0]:
        raise ValueError(f"training inputs must be (n, {LAYER_SIZES[0]})")
    if t.shape != (x.shape[0], N_LABELS):
        raise ValueError(f"training targets must be (n, {N_LABELS})")
    if x.shape[0] == 0:
        raise ValueError("training set is empty")

    model = init_model(config.seed)
    rng = np.random.default_rng(config.seed)
    initial_loss = bce_loss(forward_batch(model, x), t)
    epoch_losses = []
    n = x.shape[0]
    for _ in range(config.epochs):
        order = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(model, x[idx], t[idx])
            batch_losses.append(loss)
            for name, grad in grads.items():
                setattr(model, name, getattr(model, name) - config.learning_rate * grad)
        epoch_losses.append(float(np.mean(batch_losses)))
    final_loss = bce_loss(forward_batch(model, x), t)
    return model, TrainReport(initial_loss, final_loss, epoch_losses)


def grad_check(
    model: MlpModel,
    x: np.ndarray,
    t: np.ndarray,
    eps: float = 1e-5,
    samples_per_tensor: int = 20,
    seed: int = 0,
    grad_fn=None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Samples ``samples_per_tensor`` coordinates from each of the six parameter
    tensors (120 total by default).  Relative error uses a 1e-6 floor so that
    coordinates with vanishing true gradient do not amplify round-off noise.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    t = np.atleast_2d(np.asarray(t, dtype=np.float64))
    if grad_fn is None:
        grad_fn = lambda m: loss_and_grads(m, x, t)[1]
    grads = grad_fn(model)
    rng = np.random.default_rng(seed)
    work = model.copy()
    worst = 0.0
    for name, arr in work.tensors():
        flat = arr.reshape(-1)
        count = min(samples_per_tensor, flat.size)
        for j in rng.choice(flat.size, size=count, replace=False):
            orig = flat[j]
            flat[j] = orig + eps
            loss_plus = bce_loss(forward_batch(work, x), t)
            flat[j] = orig - eps
            loss_minus = bce_loss(forward_batch(work, x), t)
            flat[j] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * eps)
            analytic = grads[name].reshape(-1)[j]
            err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6)
            worst = max(worst, err)
    return worst


def save_model(model: MlpModel, path: str | Path) -> None:
    """Write the binary model file.

    Layout (little-endian): 6-byte magic ``CWMLP\\x00``, u16 format version,
    four u32 layer sizes, two u8 activation ids (relu=1, logistic=2), u64
    training seed, then the six parameter tensors as row-major float64 blocks
    in order w1, b1, w2, b2, w3, b3.
    """
    header = _MAGIC + struct.pack(
        "<H4I2BQ",
        _FORMAT_VERSION,
        *LAYER_SIZES,
        _ACT_RELU,
        _ACT_LOGISTIC,
        model.seed & 0xFFFFFFFFFFFFFFFF,
    )
    blocks = b"".join(np.ascontiguousarray(arr, dtype="<f8").tobytes() for _, arr in model.tensors())
    Path(path).write_bytes(header + blocks)


def load_model(path: str | Path) -> MlpModel:
    raw = Path(path).read_bytes()
    header_len = len(_MAGIC) + struct.calcsize("<H4I2BQ")
    if len(raw) < header_len or raw[: len(_MAGIC)] != _MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic)")
    version, d0, d1, d2, d3, act_hidden, act_out, seed = struct.unpack(
        "<H4I2BQ", raw[len(_MAGIC) : header_len]
    )
    if version != _FORMAT_VERSION:
        raise ModelFormatError(f"{path}: unsupported format version {version}")
    if (d0, d1, d2, d3) != LAYER_SIZES:
        raise ArchitectureMismatch(
            f"{path}: layer sizes {(d0, d1, d2, d3)} do not match {LAYER_SIZES}"
        )
    if (act_hidden, act_out) != (_ACT_RELU, _ACT_LOGISTIC):
        raise ModelFormatError(f"{path}: unknown activation ids {(act_hidden, act_out)}")
    expected = header_len + PARAM_COUNT * 8
    if len(raw) != expected:
        raise ModelFormatError(
            f"{path}: corrupt payload, expected {expected} bytes, got {len(raw)}"
        )
    flat = np.frombuffer(raw, dtype="<f8", offset=header_len).astype(np.float64)
    if not np.all(np.isfinite(flat)):
        raise ModelFormatError(f"{path}: non-finite parameter values")
    arrays = []
    pos = 0
    for _, shape in _SHAPES:
        size = int(np.prod(shape))
        arrays.append(flat[pos : pos + size].reshape(shape).copy())
        pos += size
    return MlpModel(*arrays, seed=seed)
