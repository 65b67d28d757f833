"""Multiclass softmax classifier trained with mini-batch Adam on sparse inputs.

The objective is mean cross-entropy plus an L2 penalty on the weights
(biases are unpenalized).  It is convex, so weights initialize at zero and
runs are fully deterministic under a fixed seed: examples are accumulated
in batch order and sparse entries in index order.

Early stopping on a held-out slice is the overfitting guard: training
keeps the parameters from the best validation epoch.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .features import SparseVector

MODEL_FORMAT_VERSION = 1


class ClassifierError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 20
    early_stop_fraction: float = 0.1
    early_stop_patience: int = 2
    l2_penalty: float = 1e-6
    input_dropout: float = 0.0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.max_epochs < 1:
            raise ClassifierError("learning_rate, batch_size, max_epochs must be positive")
        if not 0.0 <= self.early_stop_fraction <= 0.5:
            raise ClassifierError("early_stop_fraction must be in [0, 0.5]")
        if self.early_stop_patience < 0 or self.l2_penalty < 0:
            raise ClassifierError("patience and l2_penalty must be non-negative")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ClassifierError("input_dropout must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "early_stop_fraction": self.early_stop_fraction,
            "early_stop_patience": self.early_stop_patience,
            "l2_penalty": self.l2_penalty,
            "input_dropout": self.input_dropout,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TrainConfig":
        return cls(**{k: obj[k] for k in cls().to_dict() if k in obj})


@dataclass(frozen=True)
class TrainMeta:
    epochs_run: int
    final_validation_accuracy: Optional[float]
    seed: int


@dataclass
class Model:
    kind: str  # plain | injected
    weights: np.ndarray  # K x D'
    biases: np.ndarray  # K
    label_space_fingerprint: str
    featurizer_fingerprint: str
    train_meta: TrainMeta

    def __post_init__(self):
        if self.kind not in ("plain", "injected"):
            raise ClassifierError(f"unknown model kind {self.kind!r}")
        if not np.all(np.isfinite(self.weights)) or not np.all(np.isfinite(self.biases)):
            raise ClassifierError("model parameters must be finite")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Prediction:
    probs: np.ndarray
    label: int
    margin: float


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _as_csr(x: Union[sp.csr_matrix, Sequence[SparseVector]]) -> sp.csr_matrix:
    if sp.issparse(x):
        return x.tocsr()
    vecs = list(x)
    if not vecs:
        raise ClassifierError("empty input")
    dim = vecs[0].dim
    indptr = [0]
    cols: list[int] = []
    vals: list[float] = []
    for v in vecs:
        if v.dim != dim:
            raise ClassifierError(f"dimension mismatch: {v.dim} != {dim}")
        cols.extend(v.indices)
        vals.extend(v.values)
        indptr.append(len(cols))
    return sp.csr_matrix(
        (np.asarray(vals), np.asarray(cols, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(vecs), dim),
    )


def loss_and_grad(
    w: np.ndarray,
    b: np.ndarray,
    x: sp.csr_matrix,
    y: np.ndarray,
    l2_penalty: float,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy + (l2/2)*||W||^2 and its analytic gradient."""
    n = x.shape[0]
    logits = x @ w.T + b
    probs = _softmax(logits)
    eps = 1e-300  # guards log(0) only; probs are exact elsewhere
    ce = -np.mean(np.log(probs[np.arange(n), y] + eps))
    loss = ce + 0.5 * l2_penalty * float(np.sum(w * w))
    delta = probs
    delta[np.arange(n), y] -= 1.0
    grad_w = (delta.T @ x) / n + l2_penalty * w
    grad_w = np.asarray(grad_w)
    grad_b = delta.mean(axis=0)
    return float(loss), grad_w, grad_b


def train(
    x: Union[sp.csr_matrix, Sequence[SparseVector]],
    y: Sequence[int],
    k: int,
    config: TrainConfig,
    kind: str = "plain",
    label_space_fingerprint: str = "",
    featurizer_fingerprint: str = "",
) -> Model:
    """Train a softmax model with seeded mini-batch Adam and early stopping."""
    x = _as_csr(x)
    y = np.asarray(y, dtype=np.int64)
    n, dim = x.shape
    if n < 2:
        raise ClassifierError("need at least 2 training examples")
    if y.shape != (n,):
        raise ClassifierError("labels must match number of rows")
    if y.min() < 0 or y.max() >= k:
        raise ClassifierError("label index out of range")

    rng = np.random.default_rng(config.seed)
    perm = rng.permutation(n)
    n_val = int(round(config.early_stop_fraction * n))
    if config.early_stop_fraction > 0 and n_val == 0:
        n_val = 1
    val_idx = perm[:n_val]
    tr_idx = perm[n_val:]
    if tr_idx.size == 0:
        raise ClassifierError("early_stop_fraction leaves no training data")
    x_tr, y_tr = x[tr_idx], y[tr_idx]
    x_val, y_val = (x[val_idx], y[val_idx]) if n_val else (None, None)

    w = np.zeros((k, dim))
    b = np.zeros(k)
    m_w = np.zeros_like(w)
    v_w = np.zeros_like(w)
    m_b = np.zeros_like(b)
    v_b = np.zeros_like(b)
    t = 0
    beta1, beta2, eps = config.adam_beta1, config.adam_beta2, config.adam_epsilon

    best_w, best_b = w.copy(), b.copy()
    best_val: Optional[float] = None
    bad_epochs = 0
    epochs_run = 0
    n_tr = x_tr.shape[0]

    for epoch in range(config.max_epochs):
        order = rng.permutation(n_tr)
        for batch_no, start in enumerate(range(0, n_tr, config.batch_size)):
            idx = order[start : start + config.batch_size]
            xb = x_tr[idx]
            if config.input_dropout > 0.0:
                # mask derived from (seed, epoch, batch) so runs stay reproducible
                drop_rng = np.random.default_rng((config.seed, epoch, batch_no))
                keep = drop_rng.random(xb.nnz) >= config.input_dropout
                xb = xb.copy()
                xb.data = xb.data * keep / (1.0 - config.input_dropout)
            loss, g_w, g_b = loss_and_grad(w, b, xb, y_tr[idx], config.l2_penalty)
            if not np.isfinite(loss):
                raise ClassifierError(f"non-finite loss at epoch {epoch}, batch {batch_no}")
            t += 1
            m_w = beta1 * m_w + (1 - beta1) * g_w
            v_w = beta2 * v_w + (1 - beta2) * g_w * g_w
            m_b = beta1 * m_b + (1 - beta1) * g_b
            v_b = beta2 * v_b + (1 - beta2) * g_b * g_b
            corr1 = 1 - beta1**t
            corr2 = 1 - beta2**t
            w -= config.learning_rate * (m_w / corr1) / (np.sqrt(v_w / corr2) + eps)
            b -= config.learning_rate * (m_b / corr1) / (np.sqrt(v_b / corr2) + eps)
        epochs_run = epoch + 1
        if n_val:
            val_acc = float(np.mean(np.argmax(x_val @ w.T + b, axis=1) == y_val))
            if best_val is None or val_acc > best_val:
                best_val = val_acc
                best_w, best_b = w.copy(), b.copy()
                bad_epochs = 0
            else:
                bad_epochs += 1
                if bad_epochs > config.early_stop_patience:
                    break
        else:
            best_w, best_b = w.copy(), b.copy()

    return Model(
        kind=kind,
        weights=best_w,
        biases=best_b,
        label_space_fingerprint=label_space_fingerprint,
        featurizer_fingerprint=featurizer_fingerprint,
        train_meta=TrainMeta(
            epochs_run=epochs_run,
            final_validation_accuracy=best_val,
            seed=config.seed,
        ),
    )


def predict_logits(model: Model, x: sp.csr_matrix) -> np.ndarray:
    if x.shape[1] != model.dim:
        raise ClassifierError(f"input dim {x.shape[1]} != model dim {model.dim}")
    return np.asarray(x @ model.weights.T + model.biases)


def predict_proba(model: Model, features: SparseVector) -> Prediction:
    """Predict class probabilities for one sparse input."""
    if features.dim != model.dim:
        raise ClassifierError(f"input dim {features.dim} != model dim {model.dim}")
    logits = np.zeros(model.k) + model.biases
    for i, v in zip(features.indices, features.values):
        logits += model.weights[:, i] * v
    probs = _softmax(logits)
    label = int(np.argmax(probs))  # argmax picks the lowest index on ties
    top2 = np.sort(probs)[-2:]
    margin = float(top2[1] - top2[0])
    return Prediction(probs=probs, label=label, margin=margin)


def predict_batch(model: Model, x: sp.csr_matrix) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(labels, max prob, margin) for every row of x."""
    probs = _softmax(predict_logits(model, x))
    labels = np.argmax(probs, axis=1)
    part = np.sort(probs, axis=1)
    margins = part[:, -1] - part[:, -2]
    return labels, part[:, -1], margins


def evaluate(model: Model, x: sp.csr_matrix, y: Sequence[int]) -> float:
    """Fraction of rows whose predicted label equals the given label."""
    y = np.asarray(y, dtype=np.int64)
    if x.shape[0] == 0:
        raise ClassifierError("cannot evaluate on empty input")
    labels, _, _ = predict_batch(model, x)
    return float(np.mean(labels == y))


def gradient_check(k: int = 3, dim: int = 20, batch: int = 5, l2_penalty: float = 1e-3, seed: int = 0) -> float:
    """Max relative error between analytic and central finite-difference gradients."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(k, dim)) * 0.5
    b = rng.normal(size=k) * 0.5
    dense = rng.random((batch, dim)) * (rng.random((batch, dim)) < 0.4)
    x = sp.csr_matrix(dense)
    y = rng.integers(0, k, size=batch)
    _, g_w, g_b = loss_and_grad(w, b, x, y, l2_penalty)

    h = 1e-5
    max_err = 0.0

    def rel_err(a: float, n_: float) -> float:
        return abs(a - n_) / max(1e-8, abs(a) + abs(n_))

    for i in range(k):
        for j in range(dim):
            w[i, j] += h
            lp, _, _ = loss_and_grad(w, b, x, y, l2_penalty)
            w[i, j] -= 2 * h
            lm, _, _ = loss_and_grad(w, b, x, y, l2_penalty)
            w[i, j] += h
            max_err = max(max_err, rel_err(g_w[i, j], (lp - lm) / (2 * h)))
    for i in range(k):
        b[i] += h
        lp, _, _ = loss_and_grad(w, b, x, y, l2_penalty)
        b[i] -= 2 * h
        lm, _, _ = loss_and_grad(w, b, x, y, l2_penalty)
        b[i] += h
        max_err = max(max_err, rel_err(g_b[i], (lp - lm) / (2 * h)))
    return max_err


def save_model(model: Model, path) -> None:
    """Binary container: version byte, JSON header, raw float64 parameters."""
    header = {
        "kind": model.kind,
        "k": model.k,
        "dim": model.dim,
        "label_space_fingerprint": model.label_space_fingerprint,
        "featurizer_fingerprint": model.featurizer_fingerprint,
        "train_meta": {
            "epochs_run": model.train_meta.epochs_run,
            "final_validation_accuracy": model.train_meta.final_validation_accuracy,
            "seed": model.train_meta.seed,
        },
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(struct.pack("<B", MODEL_FORMAT_VERSION))
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(np.ascontiguousarray(model.weights, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.biases, dtype="<f8").tobytes())


def load_model(path) -> Model:
    with open(path, "rb") as fh:
        version = struct.unpack("<B", fh.read(1))[0]
        if version != MODEL_FORMAT_VERSION:
            raise ClassifierError(f"unsupported model format version {version}")
        (hlen,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(hlen).decode("utf-8"))
        k, dim = header["k"], header["dim"]
        w = np.frombuffer(fh.read(8 * k * dim), dtype="<f8").reshape(k, dim).copy()
        b = np.frombuffer(fh.read(8 * k), dtype="<f8").copy()
    tm = header["train_meta"]
    return Model(
        kind=header["kind"],
        weights=w,
        biases=b,
        label_space_fingerprint=header["label_space_fingerprint"],
        featurizer_fingerprint=header["featurizer_fingerprint"],
        train_meta=TrainMeta(
            epochs_run=tm["epochs_run"],
            final_validation_accuracy=tm["final_validation_accuracy"],
            seed=tm["seed"],
        ),
    )
