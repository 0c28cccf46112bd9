"""Training objectives. Every loss is a per-batch mean so coefficients do not
depend on batch size."""
from __future__ import annotations

import numpy as np

from .. import tensor as T
from ..tensor import ContractError, Tensor


def _nonempty(x: Tensor, what: str) -> None:
    if x.ndim < 2 or x.shape[0] < 1:
        raise ContractError(f"{what}: expected a non-empty (batch, classes) tensor, got {x.shape}")


def loss_cls(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy of softmax(logits) against class labels."""
    _nonempty(logits, "loss_cls")
    return T.cross_entropy(T.softmax(logits), np.asarray(labels)).mean()


def loss_adv(domain_logits: Tensor, domain_labels) -> Tensor:
    """Mean domain cross-entropy (0 = source, 1 = target).

    Callers route features through ``grad_reverse`` so one backward pass
    trains the domain head to discriminate and the encoder to confuse it.
    """
    _nonempty(domain_logits, "loss_adv")
    yd = np.asarray(domain_labels)
    if np.any((yd != 0) & (yd != 1)):
        raise ContractError("domain labels must be 0 (source) or 1 (target)")
    return T.cross_entropy(T.softmax(domain_logits), yd).mean()


def loss_entropy_target(logits: Tensor) -> Tensor:
    """Mean prediction entropy over an unlabeled target batch."""
    _nonempty(logits, "loss_entropy_target")
    return T.entropy(T.softmax(logits)).mean()


def loss_mim(probs: Tensor) -> Tensor:
    """E_x[H(p(y|x))] - H(E_x[p(y|x)]); lowest value is -ln(n_classes)."""
    _nonempty(probs, "loss_mim")
    return T.entropy(probs).mean() - T.entropy(probs.mean(axis=0))


def proto_distribution(features: Tensor, centroids, phi: float) -> Tensor:
    """softmax_j(mu_j . f / phi) for unit features ``f`` and prototypes ``mu``."""
    if phi <= 0:
        raise ContractError(f"prototype temperature must be > 0, got {phi}")
    mu = T.as_tensor(centroids)
    return T.softmax(T.matmul(features, T.transpose(mu)) * (1.0 / phi), axis=-1)


def loss_is(src_features: Tensor, src_clusters, src_centroids,
            tgt_features: Tensor, tgt_clusters, tgt_centroids, phi: float) -> Tensor:
    """In-domain prototypical loss: per-domain mean cross-entropy between each
    sample's prototype distribution and its assigned cluster, summed over the
    two domains."""
    total = None
    for feats, clusters, centroids in ((src_features, src_clusters, src_centroids),
                                       (tgt_features, tgt_clusters, tgt_centroids)):
        k = np.asarray(centroids).shape[0] if not isinstance(centroids, Tensor) else centroids.shape[0]
        clusters = np.asarray(clusters)
        if np.any(clusters >= k) or np.any(clusters < 0):
            raise ContractError(f"cluster assignment outside [0, {k}); prototypes are stale")
        term = T.cross_entropy(proto_distribution(feats, centroids, phi), clusters).mean()
        total = term if total is None else total + term
    return total
