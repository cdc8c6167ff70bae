"""Two-layer perceptron with sigmoid outputs, BCE / AN / WAN losses and Adam.

Everything is plain numpy in float64. Gradients are analytic; the test suite
checks them against central finite differences.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import expit

from .data import SinglePositiveView
from .exceptions import ConfigurationError, NonFiniteLossError, ShapeError

__all__ = [
    "CLAMP_EPS",
    "MlpModel",
    "AdamState",
    "LossKind",
    "init_mlp",
    "forward",
    "loss_bce",
    "loss_an",
    "loss_wan",
    "loss_and_grad",
    "adam_step",
    "train",
    "save_model",
    "load_model",
]

CLAMP_EPS = 1e-7

PARAM_NAMES = ("W1", "b1", "W2", "b2")

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda z, h: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, h: 1.0 - h * h),
}


@dataclass(eq=False)
class MlpModel:
    """Parameters of ``x -> sigmoid(W2 @ act(W1 @ x + b1) + b2)``."""

    W1: np.ndarray  # (h, d)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (K, h)
    b2: np.ndarray  # (K,)
    activation: str = "relu"

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        h, d = self.W1.shape
        k = self.W2.shape[0]
        if self.b1.shape != (h,) or self.W2.shape != (k, h) or self.b2.shape != (k,):
            raise ShapeError(
                "inconsistent parameter shapes: "
                + ", ".join(f"{n}={getattr(self, n).shape}" for n in PARAM_NAMES)
            )
        if self.activation not in _ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}")

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def n_features(self) -> int:
        return self.W1.shape[1]

    @property
    def n_labels(self) -> int:
        return self.W2.shape[0]

    def params(self) -> dict:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "MlpModel":
        return MlpModel(*(getattr(self, n).copy() for n in PARAM_NAMES), self.activation)

    def is_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.params().values())

    def __call__(self, X):
        return forward(self, X)


def init_mlp(
    n_features: int,
    n_labels: int,
    hidden_dim: int = 128,
    activation: str = "relu",
    seed: int = 0,
) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)

    def glorot(fan_out, fan_in):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-lim, lim, size=(fan_out, fan_in))

    return MlpModel(
        glorot(hidden_dim, n_features),
        np.zeros(hidden_dim),
        glorot(n_labels, hidden_dim),
        np.zeros(n_labels),
        activation,
    )


def _forward_cache(model: MlpModel, X: np.ndarray):
    act, _ = _ACTIVATIONS[model.activation]
    Z1 = X @ model.W1.T + model.b1
    H = act(Z1)
    Z2 = H @ model.W2.T + model.b2
    return Z1, H, Z2, expit(Z2)


def forward(model: MlpModel, x) -> np.ndarray:
    """Scores for a single d-vector or for each row of an N x d matrix.

    Outputs lie in (0, 1) up to float64 rounding: logits beyond about +-37
    saturate to exactly 0 or 1, which the losses handle by clamping.
    """
    X = np.asarray(x, dtype=np.float64)
    if X.ndim not in (1, 2) or X.shape[-1] != model.n_features:
        raise ShapeError(f"expected input with {model.n_features} features, got shape {X.shape}")
    single = X.ndim == 1
    out = _forward_cache(model, np.atleast_2d(X))[3]
    return out[0] if single else out


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def _weighted_bce(scores, pos_w, neg_w):
    """-(1/K) sum_i [pos_w_i log f_i + neg_w_i log(1 - f_i)], averaged over rows."""
    f = np.clip(scores, CLAMP_EPS, 1.0 - CLAMP_EPS)
    per_row = -(pos_w * np.log(f) + neg_w * np.log1p(-f)).mean(axis=-1)
    return float(np.mean(per_row))


def _onehot(positive, k):
    p = np.asarray(positive)
    if not np.issubdtype(p.dtype, np.integer):
        raise ConfigurationError(f"positive index must be an integer, got {positive!r}")
    if (p < 0).any() or (p >= k).any():
        raise IndexError(f"positive index {positive!r} out of range for {k} classes")
    out = np.zeros(p.shape + (k,))
    np.put_along_axis(out, p[..., None], 1.0, axis=-1)
    return out


def _check_scores(scores, other_shape):
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != tuple(other_shape):
        raise ShapeError(f"scores shape {s.shape} does not match target shape {tuple(other_shape)}")
    return s


def loss_bce(scores, labels) -> float:
    """Binary cross-entropy against a fully observed 0/1 label vector (or matrix)."""
    y = np.asarray(labels, dtype=np.float64)
    s = _check_scores(scores, y.shape)
    return _weighted_bce(s, y, 1.0 - y)


def loss_an(scores, positive) -> float:
    """Assume-negative loss: BCE with every label except ``positive`` taken as 0.

    ``positive`` is a 0-based class index, or one index per row for a batch.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = _onehot(positive, s.shape[-1])
    s = _check_scores(s, y.shape)
    return _weighted_bce(s, y, 1.0 - y)


def loss_wan(scores, positive, gamma: Optional[float] = None) -> float:
    """Weak assume-negative loss; the assumed negatives are weighted by ``gamma``.

    ``gamma`` defaults to 1 / (K - 1). With ``gamma = 1`` this is ``loss_an``.
    """
    s = np.asarray(scores, dtype=np.float64)
    k = s.shape[-1]
    if gamma is None:
        gamma = 1.0 / (k - 1)
    if not gamma > 0:
        raise ConfigurationError(f"gamma must be positive, got {gamma}")
    y = _onehot(positive, k)
    s = _check_scores(s, y.shape)
    return _weighted_bce(s, y, gamma * (1.0 - y))


@dataclass(frozen=True)
class LossKind:
    """Which training loss to use: ``"bce"``, ``"an"`` or ``"wan"``.

    ``gamma`` only matters for WAN; None means 1 / (K - 1).
    """

    tag: str = "wan"
    gamma: Optional[float] = None

    def __post_init__(self):
        tag = self.tag.lower()
        if tag not in ("bce", "an", "wan"):
            raise ConfigurationError(f"unknown loss {self.tag!r}")
        object.__setattr__(self, "tag", tag)
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigurationError(f"gamma must be positive, got {self.gamma}")

    def gamma_for(self, k: int) -> float:
        return 1.0 / (k - 1) if self.gamma is None else float(self.gamma)

    def weights(self, view: SinglePositiveView):
        """Per-entry weights (pos_w, neg_w) of the log f and log(1 - f) terms."""
        if self.tag == "bce":
            y = view.base.labels.astype(np.float64)
            return y, 1.0 - y
        y = view.onehot()
        if self.tag == "an":
            return y, 1.0 - y
        return y, self.gamma_for(y.shape[1]) * (1.0 - y)


def loss_and_grad(model: MlpModel, X, pos_w, neg_w):
    """Mean weighted-BCE loss over the rows of ``X`` and its parameter gradients.

    The gradient is that of the clamped loss, so entries whose score sits in
    the clamped region contribute nothing.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    Z1, H, Z2, F = _forward_cache(model, X)
    n, k = F.shape
    loss = _weighted_bce(F, pos_w, neg_w)

    inside = (F > CLAMP_EPS) & (F < 1.0 - CLAMP_EPS)
    # d/dz of -[a log s(z) + b log(1 - s(z))] is -a (1 - s) + b s
    dZ2 = np.where(inside, neg_w * F - pos_w * (1.0 - F), 0.0) / (k * n)
    _, dact = _ACTIVATIONS[model.activation]
    dZ1 = (dZ2 @ model.W2) * dact(Z1, H)
    grads = {
        "W2": dZ2.T @ H,
        "b2": dZ2.sum(axis=0),
        "W1": dZ1.T @ X,
        "b1": dZ1.sum(axis=0),
    }
    return loss, grads


# --------------------------------------------------------------------------
# Optimiser and training loop
# --------------------------------------------------------------------------


@dataclass
class AdamState:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(model: MlpModel, grads: dict, state: AdamState) -> None:
    """One bias-corrected Adam update, applied to ``model`` in place."""
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name in PARAM_NAMES:
        g = grads[name]
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(g)
            v = np.zeros_like(g)
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * (g * g)
        state.m[name], state.v[name] = m, v
        p = getattr(model, name)
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.eps)


def train(
    model: MlpModel,
    view: SinglePositiveView,
    loss: LossKind = LossKind(),
    adam: Optional[AdamState] = None,
    epochs: int = 25,
    batch_size: int = 16,
    seed: int = 0,
):
    """Mini-batch Adam training on a single-positive view.

    Returns ``(trained_model, loss_trace)`` where ``loss_trace[e]`` is the
    instance-weighted mean batch loss of epoch ``e``. The input model and
    optimiser state are left untouched. The last partial batch of an epoch is
    used. Raises NonFiniteLossError on a NaN/inf loss or gradient.
    """
    if epochs < 1 or batch_size < 1:
        raise ConfigurationError("epochs and batch_size must be at least 1")
    if len(view) == 0:
        raise ConfigurationError("cannot train on an empty view")
    if view.base.n_features != model.n_features or view.base.n_labels != model.n_labels:
        raise ShapeError("model and data dimensions differ")

    model = model.copy()
    state = copy.deepcopy(adam) if adam is not None else AdamState()
    X = view.base.features
    pos_w, neg_w = loss.weights(view)
    n = len(view)
    rng = np.random.default_rng(seed)

    trace = np.empty(epochs)
    for epoch in range(epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, batch_size)):
            idx = order[start:start + batch_size]
            value, grads = loss_and_grad(model, X[idx], pos_w[idx], neg_w[idx])
            if not math.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
                raise NonFiniteLossError(epoch, b, value)
            adam_step(model, grads, state)
            total += value * idx.size
        trace[epoch] = total / n
    if not model.is_finite():
        raise NonFiniteLossError(epochs - 1, -1, float("nan"))
    return model, trace


# --------------------------------------------------------------------------
# Checkpoints
# --------------------------------------------------------------------------


def save_model(model: MlpModel, path, metadata: Optional[dict] = None) -> None:
    """Write parameters (exact float64 bytes) plus a JSON metadata blob to an ``.npz``."""
    meta = dict(metadata or {})
    meta["activation"] = model.activation
    with open(Path(path), "wb") as fh:
        np.savez(fh, **model.params(), metadata=np.array(json.dumps(meta, sort_keys=True)))


def load_model(path):
    """Inverse of ``save_model``; returns ``(model, metadata)``."""
    with np.load(Path(path), allow_pickle=False) as z:
        meta = json.loads(str(z["metadata"]))
        params = [z[name] for name in PARAM_NAMES]
    return MlpModel(*params, activation=meta["activation"]), meta
