"""Softmax regression and one-hidden-layer MLP trained with Adam on
cross-entropy.

Any object with ``num_classes``, ``dim`` and a ``predict_proba(X)`` method
returning row-stochastic ``(N, C)`` arrays can stand in for :class:`Model`
in the voting and entropy stages.
"""

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from mvver import kernels
from mvver.dataset import DatasetError

MODEL_FORMAT_VERSION = 1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
_TINY = np.finfo(np.float64).tiny


class TrainingDiverged(RuntimeError):
    def __init__(self, epoch):
        super().__init__(f"non-finite training loss at epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "softmax"
    hidden_units: int = 64
    epochs: int = 50
    learning_rate: float = 0.001
    batch_size: int = 32
    l2: float = 0.0
    standardize: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("softmax", "mlp"):
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")
        if self.kind == "mlp" and self.hidden_units < 1:
            raise ValueError("hidden_units must be >= 1")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Model:
    kind: str
    num_classes: int
    dim: int
    theta: np.ndarray
    hidden_units: int = 0
    # inputs are mapped to (x - input_shift) / input_scale before the first layer
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    loss_history: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __post_init__(self):
        expected = _param_size(self.kind, self.dim, self.hidden_units, self.num_classes)
        theta = np.array(self.theta, dtype=np.float64).reshape(-1)
        if theta.size != expected:
            raise ValueError(f"{self.kind} model needs {expected} parameters, got {theta.size}")
        shift = np.zeros(self.dim) if self.input_shift is None else self.input_shift
        scale = np.ones(self.dim) if self.input_scale is None else self.input_scale
        shift = np.array(shift, dtype=np.float64).reshape(self.dim)
        scale = np.array(scale, dtype=np.float64).reshape(self.dim)
        for a in (theta, shift, scale):
            if not np.all(np.isfinite(a)):
                raise ValueError("model parameters must be finite")
            a.flags.writeable = False
        if np.any(scale <= 0):
            raise ValueError("input_scale must be positive")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "input_shift", shift)
        object.__setattr__(self, "input_scale", scale)

    @property
    def params(self):
        """Named read-only views into ``theta``."""
        d, H, C = self.dim, self.hidden_units, self.num_classes
        t = self.theta
        if self.kind == "softmax":
            return {"W": t[: d * C].reshape(d, C), "b": t[d * C :]}
        o1, o2 = d * H, d * H + H
        o3 = o2 + H * C
        return {
            "W1": t[:o1].reshape(d, H),
            "b1": t[o1:o2],
            "W2": t[o2:o3].reshape(H, C),
            "b2": t[o3:],
        }

    def transform(self, X):
        return (X - self.input_shift) / self.input_scale

    def logits(self, X):
        X = self.transform(X)
        p = self.params
        if self.kind == "softmax":
            return X @ p["W"] + p["b"]
        return np.maximum(X @ p["W1"] + p["b1"], 0.0) @ p["W2"] + p["b2"]

    def predict_proba(self, X):
        return predict_proba(self, X)

    def to_dict(self):
        return {
            "format": "mvver-model",
            "version": MODEL_FORMAT_VERSION,
            "kind": self.kind,
            "num_classes": self.num_classes,
            "dim": self.dim,
            "hidden_units": self.hidden_units,
            "input_shift": self.input_shift.tolist(),
            "input_scale": self.input_scale.tolist(),
            "theta": self.theta.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != "mvver-model" or d.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError("not an mvver model blob (or unsupported version)")
        return cls(
            d["kind"], d["num_classes"], d["dim"], np.array(d["theta"]), d["hidden_units"],
            np.array(d["input_shift"]), np.array(d["input_scale"]),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _param_size(kind, d, H, C):
    if kind == "softmax":
        return kernels.softmax_size(d, C)
    if kind == "mlp":
        return kernels.mlp_size(d, H, C)
    raise ValueError(f"unknown classifier kind {kind!r}")


def init_params(kind, dim, num_classes, hidden_units, rng):
    """Zero biases; MLP weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

    Softmax regression is convex and needs no symmetry breaking, so it
    starts from all zeros (uniform predictions).
    """
    if kind == "softmax":
        return np.zeros(kernels.softmax_size(dim, num_classes))
    lim1 = 1.0 / np.sqrt(dim)
    lim2 = 1.0 / np.sqrt(hidden_units)
    W1 = rng.uniform(-lim1, lim1, size=(dim, hidden_units))
    W2 = rng.uniform(-lim2, lim2, size=(hidden_units, num_classes))
    return np.concatenate([W1.ravel(), np.zeros(hidden_units), W2.ravel(), np.zeros(num_classes)])


def fit(ds, config=ClassifierConfig(), backend=None):
    """Train a model on ``ds`` for exactly ``config.epochs`` epochs.

    Mini-batches are drawn from a fresh permutation per epoch; every random
    draw comes from ``config.seed`` so the result depends only on the data
    and the config.
    """
    if len(ds) == 0:
        raise DatasetError("cannot fit on an empty dataset")
    if ds.num_classes < 2:
        raise DatasetError("need at least 2 classes to fit a classifier")
    be = kernels.get_backend(backend)
    rng = np.random.default_rng(config.seed)
    H = config.hidden_units if config.kind == "mlp" else 0
    theta = init_params(config.kind, ds.dim, ds.num_classes, H, rng)
    orders = np.stack([rng.permutation(len(ds)) for _ in range(config.epochs)]).astype(np.int64)
    shift, scale = np.zeros(ds.dim), np.ones(ds.dim)
    if config.standardize:
        shift = ds.features.mean(axis=0)
        scale = ds.features.std(axis=0)
        scale[scale < 1e-12] = 1.0
    X = np.ascontiguousarray((ds.features - shift) / scale)
    y = np.ascontiguousarray(ds.labels)
    common = (config.batch_size, config.learning_rate, ADAM_BETA1, ADAM_BETA2, ADAM_EPS, config.l2)
    if config.kind == "softmax":
        losses = be.train_softmax(theta, X, y, orders, ds.dim, ds.num_classes, *common)
    else:
        losses = be.train_mlp(theta, X, y, orders, ds.dim, H, ds.num_classes, *common)
    if losses.shape[0] < config.epochs or not np.all(np.isfinite(losses)):
        raise TrainingDiverged(int(losses.shape[0]))
    return Model(config.kind, ds.num_classes, ds.dim, theta, H, shift, scale, np.asarray(losses))


def objective(model, X, y, l2=0.0, backend=None):
    """Mean cross-entropy (+ L2 on weights) and its gradient w.r.t. ``model.theta``.

    The input standardization is a fixed preprocessing step, not a parameter.
    """
    be = kernels.get_backend(backend)
    X = np.ascontiguousarray(model.transform(np.asarray(X, dtype=np.float64)))
    y = np.ascontiguousarray(y, dtype=np.int64)
    theta = model.theta.copy()
    grad = np.zeros_like(theta)
    idx = np.arange(X.shape[0], dtype=np.int64)
    if model.kind == "softmax":
        loss = be.softmax_objective(theta, X, y, idx, model.dim, model.num_classes, l2, grad)
    else:
        loss = be.mlp_objective(
            theta, X, y, idx, model.dim, model.hidden_units, model.num_classes, l2, grad
        )
    return float(loss), grad


def _as_rows(model, features):
    X = np.asarray(features, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[-1] != model.dim:
        raise ValueError(f"dimension mismatch: model expects {model.dim}, got {X.shape[-1]}")
    return X, single


def predict_proba(model, features):
    """Class probabilities for one vector ``(d,)`` or a batch ``(N, d)``.

    Underflowed entries are clamped to the smallest normal float so every
    probability stays strictly positive.
    """
    X, single = _as_rows(model, features)
    P = np.maximum(kernels.softmax_rows(model.logits(X)), _TINY)
    return P[0] if single else P


def predict(model, features):
    """Arg-max class; ties go to the lowest index."""
    P = model.predict_proba(features)
    return np.argmax(P, axis=-1)


def cross_entropy(probs, label):
    return float(-np.log(max(float(probs[label]), kernels.PROB_FLOOR)))
