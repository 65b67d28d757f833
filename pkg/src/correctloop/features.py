"""Hashed n-gram text features and one-hot prediction injection.

Text is tokenized on Unicode whitespace, n-grams are hashed with a seeded
blake2b (stable across runs and platforms; model files depend on it) and
counted into ``hash_dim`` buckets.  The prediction one-hot for the
injected model lives in a dedicated index block [hash_dim, hash_dim + K)
after the hashed block, so it can never be destroyed by hash collisions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from hashlib import blake2b
from typing import Sequence

import numpy as np
import scipy.sparse as sp


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class FeaturizerConfig:
    hash_dim: int = 1 << 18
    ngram_orders: tuple[int, ...] = (1, 2)
    lowercase: bool = True
    l2_normalize: bool = True
    hash_seed: int = 0

    def __post_init__(self):
        if self.hash_dim < 2 or self.hash_dim & (self.hash_dim - 1):
            raise FeatureError("hash_dim must be a power of two >= 2")
        if not self.ngram_orders or any(n < 1 for n in self.ngram_orders):
            raise FeatureError("ngram_orders must be non-empty, each >= 1")

    def to_dict(self) -> dict:
        return {
            "hash_dim": self.hash_dim,
            "ngram_orders": sorted(self.ngram_orders),
            "lowercase": self.lowercase,
            "l2_normalize": self.l2_normalize,
            "hash_seed": self.hash_seed,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "FeaturizerConfig":
        return cls(
            hash_dim=int(obj["hash_dim"]),
            ngram_orders=tuple(obj["ngram_orders"]),
            lowercase=bool(obj["lowercase"]),
            l2_normalize=bool(obj["l2_normalize"]),
            hash_seed=int(obj["hash_seed"]),
        )

    def fingerprint(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return blake2b(payload.encode("utf-8"), digest_size=8).hexdigest()


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: tuple[int, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise FeatureError("indices/values length mismatch")
        prev = -1
        for i, v in zip(self.indices, self.values):
            if i <= prev:
                raise FeatureError("indices must be strictly increasing")
            if not 0 <= i < self.dim:
                raise FeatureError(f"index {i} out of range for dim {self.dim}")
            if v == 0.0:
                raise FeatureError("zero-valued entries are not allowed")
            prev = i

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[list(self.indices)] = self.values
        return out


def _hash_key(seed: int) -> bytes:
    return int(seed).to_bytes(8, "little", signed=False)


def _bucket(ngram: str, key: bytes, mask: int) -> int:
    digest = blake2b(ngram.encode("utf-8"), digest_size=8, key=key).digest()
    return int.from_bytes(digest, "little") & mask


def _ngram_buckets(text: str, config: FeaturizerConfig) -> dict[int, float]:
    if config.lowercase:
        text = text.lower()
    tokens = text.split()
    if not tokens:
        raise FeatureError("text is empty after tokenization")
    key = _hash_key(config.hash_seed)
    mask = config.hash_dim - 1
    counts: dict[int, float] = {}
    for n in config.ngram_orders:
        for i in range(len(tokens) - n + 1):
            gram = "\x1f".join(tokens[i : i + n])
            b = _bucket(gram, key, mask)
            counts[b] = counts.get(b, 0.0) + 1.0
    return counts


def featurize(text: str, config: FeaturizerConfig) -> SparseVector:
    """Encode one text as a sparse hashed n-gram count vector."""
    counts = _ngram_buckets(text, config)
    indices = sorted(counts)
    values = [counts[i] for i in indices]
    if config.l2_normalize:
        norm = float(np.sqrt(sum(v * v for v in values)))
        values = [v / norm for v in values]
    return SparseVector(dim=config.hash_dim, indices=tuple(indices), values=tuple(values))


def featurize_matrix(texts: Sequence[str], config: FeaturizerConfig) -> sp.csr_matrix:
    """Featurize many texts into a CSR matrix (rows in input order)."""
    indptr = [0]
    col_idx: list[int] = []
    vals: list[float] = []
    for text in texts:
        vec = featurize(text, config)
        col_idx.extend(vec.indices)
        vals.extend(vec.values)
        indptr.append(len(col_idx))
    return sp.csr_matrix(
        (np.asarray(vals, dtype=np.float64), np.asarray(col_idx, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
        shape=(len(texts), config.hash_dim),
    )


def inject_prediction(
    features: SparseVector, predicted_class: int, k: int, injection_scale: float = 1.0
) -> SparseVector:
    """Append a one-hot block for the predicted class after the hashed block."""
    if not 0 <= predicted_class < k:
        raise FeatureError(f"predicted class {predicted_class} out of range for K={k}")
    hash_dim = features.dim
    return SparseVector(
        dim=hash_dim + k,
        indices=features.indices + (hash_dim + predicted_class,),
        values=features.values + (float(injection_scale),),
    )


def inject_prediction_matrix(
    features: sp.csr_matrix, predicted_classes: np.ndarray, k: int, injection_scale: float = 1.0
) -> sp.csr_matrix:
    """Vectorized inject_prediction over the rows of a CSR matrix."""
    n = features.shape[0]
    if predicted_classes.shape != (n,):
        raise FeatureError("predicted_classes must have one entry per row")
    if predicted_classes.min(initial=0) < 0 or predicted_classes.max(initial=0) >= k:
        raise FeatureError("predicted class out of range")
    onehot = sp.csr_matrix(
        (np.full(n, injection_scale), (np.arange(n), predicted_classes.astype(np.int64))),
        shape=(n, k),
    )
    return sp.hstack([features, onehot], format="csr")
