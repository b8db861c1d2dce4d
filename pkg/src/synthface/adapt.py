"""Landmark label adaptation with a small two-layer perceptron.

The adapter maps a flattened landmark vector predicted under one labelling
convention to the corresponding vector under another.  Inputs and outputs
are normalized image coordinates in [0, 1], so one model serves any
resolution.  It is trained on (source, target) vector pairs only.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import InsufficientDataError, InvalidParameterError

MODEL_VERSION = 1
LEAK = 0.01
PARAM_NAMES = ("w1", "b1", "w2", "b2")


@dataclass(frozen=True, eq=False)
class Perceptron:
    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (D, H)
    b2: np.ndarray  # (D,)
    activation: str = "leaky_relu"

    def __post_init__(self):
        h, d = np.shape(self.w1)
        if np.shape(self.b1) != (h,) or np.shape(self.w2) != (d, h) or np.shape(self.b2) != (d,):
            raise InvalidParameterError(
                f"inconsistent perceptron shapes: w1 {np.shape(self.w1)}, b1 {np.shape(self.b1)}, "
                f"w2 {np.shape(self.w2)}, b2 {np.shape(self.b2)}")
        if self.activation != "leaky_relu":
            raise InvalidParameterError(f"unsupported activation {self.activation!r}")
        if not all(np.all(np.isfinite(p)) for p in self.params()):
            raise InvalidParameterError("perceptron parameters must be finite")

    @property
    def input_dim(self):
        return self.w1.shape[1]

    @property
    def hidden(self):
        return self.w1.shape[0]

    def params(self):
        return tuple(getattr(self, n) for n in PARAM_NAMES)

    def with_params(self, params):
        return replace(self, **dict(zip(PARAM_NAMES, params)))

    def flat(self):
        return np.concatenate([p.ravel() for p in self.params()])


def init_perceptron(dim, hidden=128, seed=0):
    """Glorot-uniform weights, zero biases."""
    if dim < 1 or hidden < 1:
        raise InvalidParameterError("perceptron dimensions must be positive")
    rng = np.random.default_rng(seed)
    limit = math.sqrt(6.0 / (dim + hidden))
    return Perceptron(
        w1=rng.uniform(-limit, limit, size=(hidden, dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-limit, limit, size=(dim, hidden)),
        b2=np.zeros(dim),
    )


def _leaky(z):
    return np.where(z > 0, z, LEAK * z)


def _as_batch(model, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != model.input_dim:
        raise InvalidParameterError(f"expected vectors of length {model.input_dim}, got {x.shape[-1]}")
    return x


def forward(model, x):
    """y = W2 leaky_relu(W1 x + b1) + b2; ``x`` may be one vector or a (B, D) batch."""
    x = _as_batch(model, x)
    return _leaky(x @ model.w1.T + model.b1) @ model.w2.T + model.b2


def loss_and_gradients(model, sources, targets):
    """Mean squared error over batch and coordinates, with exact gradients."""
    x = _as_batch(model, sources)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidParameterError("batch must be a non-empty (B, D) array")
    if t.shape != x.shape:
        raise InvalidParameterError(f"targets shape {t.shape} does not match sources {x.shape}")
    z = x @ model.w1.T + model.b1
    a = _leaky(z)
    y = a @ model.w2.T + model.b2
    r = y - t
    loss = float(np.mean(r * r))
    dy = 2.0 * r / r.size
    gw2 = dy.T @ a
    gb2 = dy.sum(axis=0)
    dz = (dy @ model.w2) * np.where(z > 0, 1.0, LEAK)
    gw1 = dz.T @ x
    gb1 = dz.sum(axis=0)
    return loss, (gw1, gb1, gw2, gb2)


@dataclass(eq=False)
class AdamState:
    m: list
    v: list
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_model(cls, model, **hyper):
        return cls([np.zeros_like(p) for p in model.params()], [np.zeros_like(p) for p in model.params()], **hyper)


def adam_step(state, model, gradients):
    """One bias-corrected Adam update; returns ``(model, state)``."""
    params = model.params()
    if len(gradients) != len(params) or any(g.shape != p.shape for g, p in zip(gradients, params)):
        raise InvalidParameterError("gradient shapes do not match the model")
    step = state.step + 1
    m = [state.beta1 * mi + (1 - state.beta1) * g for mi, g in zip(state.m, gradients)]
    v = [state.beta2 * vi + (1 - state.beta2) * g * g for vi, g in zip(state.v, gradients)]
    c1 = 1 - state.beta1**step
    c2 = 1 - state.beta2**step
    new = [p - state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps) for p, mi, vi in zip(params, m, v)]
    return model.with_params(new), replace(state, m=m, v=v, step=step)


@dataclass(frozen=True)
class AdapterHyper:
    hidden: int = 128
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64
    epochs: int = 200
    validation_fraction: float = 0.1
    seed: int = 0
    standardize: bool = True

    def to_dict(self):
        return dict(vars(self))


@dataclass
class TrainingResult:
    model: Perceptron
    log: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    best_epoch: int = 0
    best_val: float = float("nan")

    def log_text(self):
        return "".join(f"epoch {e} train {tl:.6e} val {vl:.6e}\n" for e, tl, vl in self.log)


def split_pairs(count, fraction, seed):
    """Shuffled (train, validation) index arrays; validation gets at least one pair."""
    order = np.random.default_rng(seed).permutation(count)
    n_val = min(count - 1, max(1, int(round(fraction * count))))
    return order[n_val:], order[:n_val]


def fold_standardization(model, x_mean, x_scale, t_mean, t_scale):
    """Absorb input/output standardization into the weights.

    A model trained on ``(x - x_mean) / x_scale`` to predict
    ``(t - t_mean) / t_scale`` becomes an equivalent model on raw vectors.
    """
    w1 = model.w1 / x_scale
    b1 = model.b1 - w1 @ x_mean
    w2 = model.w2 * t_scale[:, None]
    b2 = model.b2 * t_scale + t_mean
    return model.with_params((w1, b1, w2, b2))


def _moments(a):
    scale = a.std(axis=0)
    return a.mean(axis=0), np.where(scale > 1e-12, scale, 1.0)


def train_adapter(sources, targets, hyper=AdapterHyper()):
    """Minibatch Adam on (source, target) landmark vectors; keeps the best-validation model.

    Training runs on per-coordinate standardized vectors (statistics from
    the training split); the returned model maps raw vectors directly.
    The log reports losses in raw coordinates.
    """
    x = np.asarray(sources, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or x.shape != t.shape:
        raise InvalidParameterError(f"sources {x.shape} and targets {t.shape} must be matching (N, D) arrays")
    if len(x) < 2:
        raise InsufficientDataError(f"need at least 2 landmark pairs, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(t))):
        raise InvalidParameterError("landmark pairs must be finite")
    if hyper.batch_size < 1 or hyper.epochs < 0:
        raise InvalidParameterError("batch_size must be >= 1 and epochs >= 0")
    rng = np.random.default_rng([hyper.seed, 1])
    train, val = split_pairs(len(x), hyper.validation_fraction, hyper.seed)
    if hyper.standardize:
        x_mean, x_scale = _moments(x[train])
        t_mean, t_scale = _moments(t[train])
    else:
        x_mean, t_mean = np.zeros(x.shape[1]), np.zeros(x.shape[1])
        x_scale, t_scale = np.ones(x.shape[1]), np.ones(x.shape[1])
    xs = (x - x_mean) / x_scale
    ts = (t - t_mean) / t_scale
    model = init_perceptron(x.shape[1], hyper.hidden, hyper.seed)
    state = AdamState.for_model(model, lr=hyper.lr, beta1=hyper.beta1, beta2=hyper.beta2, eps=hyper.eps)

    def raw(m):
        if not hyper.standardize:
            return m
        return fold_standardization(m, x_mean, x_scale, t_mean, t_scale)

    def loss_on(m, idx):
        r = forward(m, x[idx]) - t[idx]
        return float(np.mean(r * r))

    best = raw(model)
    result = TrainingResult(model=best, best_val=loss_on(best, val))
    for epoch in range(1, hyper.epochs + 1):
        order = train[rng.permutation(len(train))]
        for start in range(0, len(order), hyper.batch_size):
            idx = order[start:start + hyper.batch_size]
            _, grads = loss_and_gradients(model, xs[idx], ts[idx])
            model, state = adam_step(state, model, grads)
        folded = raw(model)
        vl = loss_on(folded, val)
        result.log.append((epoch, loss_on(folded, train), vl))
        if vl < result.best_val:
            result.model, result.best_val, result.best_epoch = folded, vl, epoch
    return result


def save_adapter(path, model, hyper=None):
    doc = {
        "format_version": MODEL_VERSION,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "activation": model.activation,
        "params": model.flat().tolist(),
        "hyper": (hyper or AdapterHyper(hidden=model.hidden)).to_dict(),
    }
    Path(path).write_text(json.dumps(doc))


def load_adapter(path):
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != MODEL_VERSION:
        raise InvalidParameterError(f"{path}: unsupported adapter format {doc.get('format_version')!r}")
    d, h = int(doc["input_dim"]), int(doc["hidden"])
    flat = np.asarray(doc["params"], dtype=np.float64)
    sizes = [h * d, h, d * h, d]
    if flat.size != sum(sizes):
        raise InvalidParameterError(f"{path}: expected {sum(sizes)} parameters, found {flat.size}")
    parts = np.split(flat, np.cumsum(sizes)[:-1])
    return Perceptron(parts[0].reshape(h, d), parts[1], parts[2].reshape(d, h), parts[3], doc["activation"])


def normalize_landmarks(points, width, height):
    """(B, L, 2) pixel points -> (B, 2L) vectors in [0, 1] coordinates."""
    p = np.asarray(points, dtype=np.float64)[..., :2] / np.array([width, height], dtype=np.float64)
    return p.reshape(*p.shape[:-2], -1)


def denormalize_landmarks(vectors, width, height):
    v = np.asarray(vectors, dtype=np.float64)
    return v.reshape(*v.shape[:-1], -1, 2) * np.array([width, height], dtype=np.float64)
