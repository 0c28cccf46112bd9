"""Momentum memory banks and spherical k-means prototypes."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..tensor import ContractError


def _normalize_rows(x: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    if np.any(norm == 0):
        raise ContractError("cannot normalize a zero vector")
    return x / norm


class MemoryBank:
    """One unit-norm feature row per example of a domain."""

    def __init__(self, vectors: np.ndarray, momentum: float = 0.5):
        if not 0.0 <= momentum < 1.0:
            raise ContractError(f"bank momentum must lie in [0, 1), got {momentum}")
        self.vectors = _normalize_rows(np.array(vectors, dtype=np.float64))
        self.momentum = momentum

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def update(self, indices, features: np.ndarray) -> None:
        """row_i <- normalize(m row_i + (1 - m) f_i) for each (i, f_i)."""
        idx = np.atleast_1d(np.asarray(indices))
        feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
        if idx.size and (idx.min() < 0 or idx.max() >= len(self)):
            raise IndexError(f"bank index out of range [0, {len(self)})")
        if np.unique(idx).size != idx.size:
            raise ContractError("duplicate indices in one bank update")
        mixed = self.momentum * self.vectors[idx] + (1.0 - self.momentum) * feats
        norm = np.linalg.norm(mixed, axis=-1, keepdims=True)
        # exact cancellation (f = -row at m = 0.5) falls back to the new feature
        self.vectors[idx] = np.where(norm > 0, mixed / np.where(norm > 0, norm, 1.0), feats)


@dataclass
class Prototypes:
    centroids: np.ndarray       # (k, D), unit rows
    assignments: np.ndarray     # (n,), cluster index per bank row
    history: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def spherical_objective(x: np.ndarray, centroids: np.ndarray, assignments: np.ndarray) -> float:
    return float(np.sum(1.0 - np.einsum("ij,ij->i", x, centroids[assignments])))


def kmeans(vectors: np.ndarray, k: int, seed: int = 0, iters: int = 10) -> Prototypes:
    """Spherical k-means: cosine assignment, mean-then-normalize update.

    Empty (or zero-mean) clusters are re-seeded at the point currently
    farthest from its centroid. ``history`` holds the objective
    sum(1 - cos(x, mu_c(x))) after every iteration.
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    if not 1 <= k <= n:
        raise ContractError(f"k={k} clusters requested for {n} vectors")
    rng = np.random.default_rng(seed)
    centroids = x[rng.choice(n, size=k, replace=False)].copy()
    history = []
    for _ in range(iters):
        assign = np.argmax(x @ centroids.T, axis=1)
        taken: set[int] = set()
        for j in range(k):
            members = assign == j
            total = x[members].sum(axis=0) if members.any() else None
            norm = 0.0 if total is None else np.linalg.norm(total)
            if norm > 0:
                centroids[j] = total / norm
            elif total is None:
                cos = np.einsum("ij,ij->i", x, centroids[assign])
                order = [i for i in np.argsort(cos, kind="stable") if i not in taken]
                taken.add(order[0])
                centroids[j] = x[order[0]]
        history.append(spherical_objective(x, centroids, assign))
    assign = np.argmax(x @ centroids.T, axis=1)
    return Prototypes(centroids, assign, history)
