"""Softmax scorer with a bounded mean-absolute-error loss.

Two architectures: a linear map d -> C+1, or one hidden tanh layer
d -> h -> C+1.  The loss on a probability vector p and one-hot label y
is

    loss(p, y) = (1 / (C+1)) * sum_i |y_i - p_i|,

which is bounded between 0 and 2/(C+1).  Gradients are computed
analytically (the absolute value takes subgradient 0 at its kink) and
training uses plain minibatch SGD with optional L2 weight decay.
Models are value-like: every update returns a new instance.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from typing import BinaryIO

import numpy as np

from .core import is_one_hot

__all__ = [
    "ARCH_LINEAR",
    "ARCH_MLP",
    "NumericalDivergenceError",
    "SoftmaxModel",
    "GradientBuffer",
    "SgdConfig",
    "init_linear",
    "init_mlp",
    "forward",
    "forward_batch",
    "mae_loss",
    "mae_loss_batch",
    "loss_grad_wrt_logits",
    "sgd_step",
    "save_model",
    "load_model",
]

ARCH_LINEAR = "linear"
ARCH_MLP = "mlp"

# Parameter init range; fixed so seeded runs are reproducible.
_INIT_SCALE = 0.1


class NumericalDivergenceError(RuntimeError):
    """Raised when a gradient or risk value stops being finite."""


@dataclass(frozen=True, eq=False)
class SoftmaxModel:
    """Parameters of a softmax scorer over C+1 classes.

    ``params`` is (W, b) for the linear architecture and
    (W1, b1, W2, b2) for the one-hidden-layer variant.
    """

    arch: str
    dim: int
    num_positive_classes: int
    hidden: int
    params: tuple[np.ndarray, ...]
    rng_seed: int

    def __post_init__(self):
        if self.arch not in (ARCH_LINEAR, ARCH_MLP):
            raise ValueError(f"unknown architecture {self.arch!r}")
        if self.dim < 1 or self.num_positive_classes < 1:
            raise ValueError("need dim >= 1 and at least one positive class")
        expected = _param_shapes(self.arch, self.dim, self.num_positive_classes, self.hidden)
        if len(self.params) != len(expected):
            raise ValueError(f"expected {len(expected)} parameter arrays, got {len(self.params)}")
        frozen = []
        for arr, shape in zip(self.params, expected):
            arr = np.ascontiguousarray(arr, dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"parameter shape {arr.shape} != expected {shape}")
            arr.setflags(write=False)
            frozen.append(arr)
        object.__setattr__(self, "params", tuple(frozen))

    @property
    def num_labels(self) -> int:
        return self.num_positive_classes + 1


def _param_shapes(arch: str, dim: int, num_positive: int, hidden: int) -> tuple[tuple[int, ...], ...]:
    k = num_positive + 1
    if arch == ARCH_LINEAR:
        return ((k, dim), (k,))
    if hidden < 1:
        raise ValueError("mlp architecture needs hidden >= 1")
    return ((hidden, dim), (hidden,), (k, hidden), (k,))


def init_linear(dim: int, num_positive_classes: int, seed: int) -> SoftmaxModel:
    """Linear softmax model with weights uniform in [-0.1, 0.1]."""
    rng = np.random.default_rng(seed)
    k = num_positive_classes + 1
    params = (
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(k, dim)),
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(k,)),
    )
    return SoftmaxModel(ARCH_LINEAR, dim, num_positive_classes, 0, params, seed)


def init_mlp(dim: int, num_positive_classes: int, hidden: int, seed: int) -> SoftmaxModel:
    """One-hidden-layer tanh model with weights uniform in [-0.1, 0.1]."""
    rng = np.random.default_rng(seed)
    k = num_positive_classes + 1
    params = (
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(hidden, dim)),
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(hidden,)),
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(k, hidden)),
        rng.uniform(-_INIT_SCALE, _INIT_SCALE, size=(k,)),
    )
    return SoftmaxModel(ARCH_MLP, dim, num_positive_classes, hidden, params, seed)


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _forward_cached(model: SoftmaxModel, x: np.ndarray):
    """Returns (probs, hidden activations or None) for a 2-D input batch."""
    if model.arch == ARCH_LINEAR:
        w, b = model.params
        return _softmax(x @ w.T + b), None
    w1, b1, w2, b2 = model.params
    h = np.tanh(x @ w1.T + b1)
    return _softmax(h @ w2.T + b2), h


def forward_batch(model: SoftmaxModel, x: np.ndarray) -> np.ndarray:
    """Softmax outputs for a batch of rows; each row lies on the simplex."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: expected (n, {model.dim}), got {x.shape}")
    return _forward_cached(model, x)[0]


def forward(model: SoftmaxModel, x: np.ndarray) -> np.ndarray:
    """Softmax output f(x) for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != model.dim:
        raise ValueError(f"dimension mismatch: expected ({model.dim},), got {x.shape}")
    return _forward_cached(model, x[None, :])[0][0]


def _check_loss_inputs(p: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if p.ndim != 1 or y.ndim != 1 or p.shape != y.shape:
        raise ValueError(f"length mismatch: p has shape {p.shape}, y has shape {y.shape}")
    if np.any(p < -1e-9) or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("p must lie on the probability simplex")
    if not is_one_hot(y):
        raise ValueError("y must be a one-hot vector")
    return p, y


def mae_loss(p: np.ndarray, y: np.ndarray) -> float:
    """Mean absolute error between a simplex vector and a one-hot label.

    Bounded in [0, 2/(C+1)].  The sum of absolute differences is capped
    at 2 before dividing: for exact-simplex p the cap is never active,
    it only absorbs float roundoff on near-boundary inputs so the
    documented bound holds without tolerance.
    """
    p, y = _check_loss_inputs(p, y)
    total = float(np.abs(y - p).sum())
    return min(total, 2.0) / p.size


def mae_loss_batch(probs: np.ndarray, label: int) -> np.ndarray:
    """Vector of MAE losses of each row of ``probs`` against one label index."""
    k = probs.shape[1]
    if not 0 <= label < k:
        raise ValueError(f"label {label} outside [0, {k})")
    y = np.zeros(k, dtype=np.float64)
    y[label] = 1.0
    totals = np.abs(probs - y).sum(axis=1)
    return np.minimum(totals, 2.0) / k


def _dlogits(probs: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise gradient of mae_loss(softmax(z), y) with respect to z.

    With g = sign(p - y) / (C+1) (sign(0) = 0 at the kink), the chain
    rule through the softmax Jacobian gives dz = p * (g - <g, p>).
    """
    g = np.sign(probs - y) / probs.shape[1]
    dot = (g * probs).sum(axis=1, keepdims=True)
    return probs * (g - dot)


def loss_grad_wrt_logits(p: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Gradient of the MAE loss composed with softmax, at softmax output p."""
    p, y = _check_loss_inputs(p, y)
    return _dlogits(p[None, :], y)[0]


@dataclass
class GradientBuffer:
    """Accumulator with the same shapes as a model's parameters.

    Mutable by design; a buffer belongs to a single training step.
    """

    arrays: tuple[np.ndarray, ...]

    @classmethod
    def zeros_like(cls, model: SoftmaxModel) -> "GradientBuffer":
        return cls(tuple(np.zeros_like(p) for p in model.params))

    def add_(self, other: "GradientBuffer", weight: float = 1.0) -> None:
        if len(self.arrays) != len(other.arrays):
            raise ValueError("gradient buffers have different structure")
        for mine, theirs in zip(self.arrays, other.arrays):
            if mine.shape != theirs.shape:
                raise ValueError(f"gradient shape mismatch: {mine.shape} vs {theirs.shape}")
            mine += weight * theirs

    def scaled(self, factor: float) -> "GradientBuffer":
        return GradientBuffer(tuple(factor * a for a in self.arrays))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in self.arrays)

    def max_abs(self) -> float:
        return max(float(np.abs(a).max()) for a in self.arrays)


def accumulate_mean_loss_grad(
    model: SoftmaxModel,
    x: np.ndarray,
    label: int,
    weight: float,
    buf: GradientBuffer,
) -> None:
    """Add weight * d/dtheta [ mean_k mae(softmax(f(x_k)), e_label) ] to ``buf``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: expected (n, {model.dim}), got {x.shape}")
    n, k = x.shape[0], model.num_labels
    y = np.zeros(k, dtype=np.float64)
    y[label] = 1.0
    probs, hidden = _forward_cached(model, x)
    g = _dlogits(probs, y) * (weight / n)
    if model.arch == ARCH_LINEAR:
        d_w, d_b = buf.arrays
        d_w += g.T @ x
        d_b += g.sum(axis=0)
    else:
        _, _, w2, _ = model.params
        d_w1, d_b1, d_w2, d_b2 = buf.arrays
        d_w2 += g.T @ hidden
        d_b2 += g.sum(axis=0)
        da = (g @ w2) * (1.0 - hidden * hidden)
        d_w1 += da.T @ x
        d_b1 += da.sum(axis=0)


@dataclass(frozen=True)
class SgdConfig:
    """Plain SGD settings.  ``epochs == 0`` means a no-op training run."""

    learning_rate: float
    batch_size: int
    epochs: int
    l2: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


def sgd_step(model: SoftmaxModel, grads: GradientBuffer, cfg: SgdConfig) -> SoftmaxModel:
    """One update theta <- theta - lr * (grad + l2 * theta)."""
    if len(grads.arrays) != len(model.params):
        raise ValueError("gradient buffer does not match model structure")
    for g, p in zip(grads.arrays, model.params):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
    if not grads.is_finite():
        raise NumericalDivergenceError("numerical divergence: non-finite gradient")
    new_params = tuple(
        p - cfg.learning_rate * (g + cfg.l2 * p) for p, g in zip(model.params, grads.arrays)
    )
    return replace(model, params=new_params)


# On-disk model layout (little endian):
#   magic  8 bytes  b"CMPUMDL1"
#   header <BBiiiq> version, arch code (0 linear / 1 mlp), d, C, h, rng_seed
#   then each parameter array as raw float64, row major, in params order.
_MAGIC = b"CMPUMDL1"
_HEADER = struct.Struct("<BBiiiq")
_ARCH_CODES = {ARCH_LINEAR: 0, ARCH_MLP: 1}
_ARCH_NAMES = {code: name for name, code in _ARCH_CODES.items()}


def save_model(model: SoftmaxModel, path) -> None:
    with open(path, "wb") as fh:
        _write_model(model, fh)


def _write_model(model: SoftmaxModel, fh: BinaryIO) -> None:
    fh.write(_MAGIC)
    fh.write(
        _HEADER.pack(
            1,
            _ARCH_CODES[model.arch],
            model.dim,
            model.num_positive_classes,
            model.hidden,
            model.rng_seed,
        )
    )
    for p in model.params:
        fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())


def load_model(path) -> SoftmaxModel:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(_MAGIC)] != _MAGIC:
        raise ValueError("not a model file (bad magic)")
    version, arch_code, dim, num_pos, hidden, rng_seed = _HEADER.unpack_from(blob, len(_MAGIC))
    if version != 1:
        raise ValueError(f"unsupported model file version {version}")
    if arch_code not in _ARCH_NAMES:
        raise ValueError(f"unknown architecture code {arch_code}")
    arch = _ARCH_NAMES[arch_code]
    offset = len(_MAGIC) + _HEADER.size
    params = []
    for shape in _param_shapes(arch, dim, num_pos, hidden):
        count = int(np.prod(shape))
        nbytes = count * 8
        if offset + nbytes > len(blob):
            raise ValueError("model file truncated")
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape)
        params.append(arr.astype(np.float64))
        offset += nbytes
    if offset != len(blob):
        raise ValueError("trailing bytes in model file")
    return SoftmaxModel(arch, dim, num_pos, hidden, tuple(params), rng_seed)
