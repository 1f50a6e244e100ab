"""Small dense-network engine with hand-written gradients.

Everything is plain numpy. Parameters and activations are float32; loss
reductions accumulate in float64. Layers keep whatever dtype their
parameters have, so a float64 copy of a network can be used as a
finite-difference shadow.
"""

from __future__ import annotations

import base64
import math
from dataclasses import asdict, dataclass

import numpy as np

from mmlab import rng

DTYPE = np.float32


class ShapeError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.2
    max_iters: int = 3000
    seed: int = 0
    batch: str = "full"
    init_scale_rule: str = "glorot_uniform"
    early_stop_patience: int = 50
    log_every: int = 10
    check_finite: bool = False

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.max_iters <= 0:
            raise ValueError("max_iters must be positive")
        if self.batch != "full":
            raise ValueError("only full-batch training is supported")

    def to_dict(self) -> dict:
        return asdict(self)


class Dense:
    """Affine map ``Y = X W^T + b`` with ``W`` stored as (out, in)."""

    def __init__(self, W: np.ndarray, b: np.ndarray, input_grad: bool = True):
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ShapeError(f"bad parameter shapes W{W.shape} b{b.shape}")
        self.W = W
        self.b = b
        self.gW = np.zeros_like(W)
        self.gb = np.zeros_like(b)
        # input layers skip computing dL/dX
        self.input_grad = input_grad
        self._x = None

    @classmethod
    def init(cls, n_in: int, n_out: int, state: np.ndarray) -> "Dense":
        limit = math.sqrt(6.0 / (n_in + n_out))
        W = np.empty((n_out, n_in), dtype=np.float64)
        rng.fill_uniform(state, W, -limit, limit)
        return cls(W.astype(DTYPE), np.zeros(n_out, dtype=DTYPE))

    @property
    def n_in(self) -> int:
        return self.W.shape[1]

    @property
    def n_out(self) -> int:
        return self.W.shape[0]

    def forward(self, X: np.ndarray) -> np.ndarray:
        if X.ndim != 2 or X.shape[1] != self.n_in:
            raise ShapeError(f"expected (n, {self.n_in}) input, got {X.shape}")
        self._x = X
        return X @ self.W.T + self.b

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        if grad_out.shape != (self._x.shape[0], self.n_out):
            raise ShapeError(f"grad shape {grad_out.shape} does not match output")
        self.gW = grad_out.T @ self._x
        self.gb = grad_out.sum(axis=0, dtype=np.float64).astype(self.b.dtype)
        return grad_out @ self.W if self.input_grad else None

    def params(self) -> list[np.ndarray]:
        return [self.W, self.b]

    def grads(self) -> list[np.ndarray]:
        return [self.gW, self.gb]


def affine_forward(layer: Dense, X: np.ndarray) -> np.ndarray:
    return layer.forward(X)


def affine_backward(layer: Dense, grad_out: np.ndarray):
    grad_X = layer.backward(grad_out)
    return grad_X, layer.gW, layer.gb


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, X: np.ndarray) -> np.ndarray:
        self._mask = X > 0
        return np.maximum(X, X.dtype.type(0))

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        # subgradient at exactly 0 is 0; a mask multiply is far faster than np.where
        return grad_out * self._mask


def relu_forward(X: np.ndarray) -> np.ndarray:
    return np.maximum(X, X.dtype.type(0))


def relu_backward(X: np.ndarray, grad_out: np.ndarray) -> np.ndarray:
    return grad_out * (X > 0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ShapeError("need one label per row")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise ValueError(f"labels must lie in [0, {k})")
    z = logits.astype(np.float64)
    z = z - z.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(lse - z[rows, labels]))
    probs = np.exp(z - lse[:, None])
    probs[rows, labels] -= 1.0
    return loss, (probs / n).astype(logits.dtype)


def mse(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    if pred.shape != target.shape:
        raise ShapeError(f"shape mismatch {pred.shape} vs {target.shape}")
    diff = pred.astype(np.float64) - target
    loss = float(np.mean(diff * diff))
    return loss, (2.0 * diff / diff.size).astype(pred.dtype)


def sgd_step(params: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
    """In-place ``p -= lr * g``; plain SGD, no momentum or decay."""
    if len(params) != len(grads):
        raise ShapeError("params and grads differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"param {p.shape} vs grad {g.shape}")
        p -= p.dtype.type(lr) * g


def all_finite(arrays) -> bool:
    return all(np.isfinite(a).all() for a in arrays)


# -- gradient checking -------------------------------------------------------


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    n_skipped_kinks: int
    worst_index: tuple | None = None

    def ok(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance


def grad_check(
    loss_and_grads,
    params: list[np.ndarray],
    tolerance: float = 1e-4,
    max_coords: int = 64,
    h: float = 1e-3,
    seed: int = 0,
    relu_masks=None,
) -> GradCheckReport:
    """Central-difference check of ``loss_and_grads`` on sampled coordinates.

    ``loss_and_grads()`` must return ``(loss, grads)`` computed from the
    current contents of ``params`` (float64 arrays, perturbed in place).
    If ``relu_masks()`` is given it should return the ReLU activity masks of
    the last forward pass; coordinates whose perturbation flips a mask sit on
    a kink and are skipped rather than scored.
    """
    _, analytic = loss_and_grads()
    analytic = [g.astype(np.float64).copy() for g in analytic]
    base = [m.copy() for m in relu_masks()] if relu_masks else None
    coords = [(i, j) for i, p in enumerate(params) for j in range(p.size)]
    if len(coords) > max_coords:
        picker = np.random.default_rng(seed)
        chosen = picker.choice(len(coords), size=max_coords, replace=False)
        coords = [coords[c] for c in sorted(chosen)]
    worst, worst_at, skipped = 0.0, None, 0
    for i, j in coords:
        flat = params[i].reshape(-1)
        orig = flat[j]
        flat[j] = orig + h
        up, _ = loss_and_grads()
        crossed = base is not None and _masks_differ(base, relu_masks())
        flat[j] = orig - h
        down, _ = loss_and_grads()
        crossed = crossed or (base is not None and _masks_differ(base, relu_masks()))
        flat[j] = orig
        if crossed:
            skipped += 1
            continue
        numeric = (up - down) / (2 * h)
        a = analytic[i].reshape(-1)[j]
        diff = abs(a - numeric)
        err = 0.0 if diff < 1e-10 else diff / max(abs(a), abs(numeric))
        if err > worst:
            worst, worst_at = err, (i, j)
    loss_and_grads()  # leave caches consistent with unperturbed params
    return GradCheckReport(worst, len(coords) - skipped, skipped, worst_at)


def _masks_differ(a, b) -> bool:
    return any(not np.array_equal(x, y) for x, y in zip(a, b))


# -- serialization helpers ---------------------------------------------------


def encode_array(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f4")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def decode_array(blob: dict) -> np.ndarray:
    raw = base64.b64decode(blob["data"])
    return np.frombuffer(raw, dtype="<f4").reshape(blob["shape"]).astype(DTYPE)
