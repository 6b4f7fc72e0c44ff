"""Batch contrastive losses and the empirical asymptotic spread loss.

All similarities are ``exp(u . u' / tau)``.  Per-anchor terms are reduced
with :func:`math.fsum` in index order, so reordering anchors (e.g. a
class-fixing permutation) changes results only at the level of float
round-off inside individual log-sum-exps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from spreadlab.errors import BalanceError, DomainError, LabelError
from spreadlab.sphere import EmbeddingConfig


@dataclass(frozen=True)
class LossWeights:
    """Weight ``alpha`` on the class-conditional term and temperature ``tau``."""

    alpha: float
    tau: float

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if not (self.tau > 0.0):
            raise DomainError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True, eq=False)
class AugmentationMap:
    """Anchor index -> index of that anchor's augmentation embedding."""

    anchors: np.ndarray
    augmentations: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.anchors, dtype=np.int64)
        b = np.asarray(self.augmentations, dtype=np.int64)
        if a.shape != b.shape or a.ndim != 1:
            raise LabelError("anchors and augmentations must be equal-length 1-d index arrays")
        if np.unique(a).size != a.size or np.unique(b).size != b.size:
            raise LabelError("anchor and augmentation indices must be distinct")
        if np.intersect1d(a, b).size:
            raise LabelError("augmentation indices must be disjoint from anchor indices")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "augmentations", b)

    @classmethod
    def appended(cls, n_anchors: int) -> "AugmentationMap":
        """Layout where augmentations follow the anchors: ``i -> n_anchors + i``."""
        idx = np.arange(n_anchors)
        return cls(idx, idx + n_anchors)

    def check(self, config: EmbeddingConfig) -> None:
        n = config.n
        if self.anchors.size == 0:
            raise LabelError("augmentation map is empty")
        if self.anchors.max(initial=-1) >= n or self.augmentations.max(initial=-1) >= n:
            raise LabelError("augmentation map refers to points outside the configuration")
        labels = config.class_labels
        if np.any(labels[self.anchors] != labels[self.augmentations]):
            raise LabelError("an augmentation must share its anchor's class")


def _similarities(config, tau):
    u = config.points
    return (u @ u.T) / tau


def supcon_batch(config: EmbeddingConfig, tau: float) -> float:
    """Supervised contrastive loss, one positive per denominator.

    For anchor ``i`` and each positive ``p`` the term is
    ``-log[s_ip / (s_ip + sum_neg s_in)]``; terms are averaged over the
    anchor's positives and then over all points.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    labels = config.class_labels
    if np.unique(labels).size < 2:
        raise LabelError("supcon needs at least two classes present (no negatives)")
    if np.any(np.bincount(labels)[labels] < 2):
        raise LabelError("every point needs at least one positive of the same class")
    S = _similarities(config, tau)
    same = labels[:, None] == labels[None, :]
    terms = []
    for i in range(config.n):
        pos = same[i].copy()
        pos[i] = False
        s_pos = S[i, pos]
        neg_lse = logsumexp(S[i, ~same[i]])
        per_pos = np.logaddexp(s_pos, neg_lse) - s_pos
        terms.append(math.fsum(per_pos) / s_pos.size)
    return math.fsum(terms) / config.n


def cnce_batch(config: EmbeddingConfig, aug_map: AugmentationMap, tau: float) -> float:
    """Class-conditional InfoNCE averaged over the anchors of ``aug_map``.

    Anchor term: ``-log[s(i, a(i)) / sum_{j != i, same class} s(i, j)]``.
    The denominator runs over every other same-class point in the
    configuration, which includes the anchor's own augmentation.
    """
    if tau <= 0:
        raise DomainError("tau must be positive")
    aug_map.check(config)
    labels = config.class_labels
    S = _similarities(config, tau)
    terms = []
    for i, a in zip(aug_map.anchors, aug_map.augmentations):
        pos = labels == labels[i]
        pos[i] = False
        terms.append(logsumexp(S[i, pos]) - S[i, a])
    return math.fsum(terms) / len(terms)


def spread_batch(config: EmbeddingConfig, aug_map: AugmentationMap, weights: LossWeights) -> float:
    """``(1 - alpha) * supcon + alpha * cnce``."""
    sup = supcon_batch(config, weights.tau)
    nce = cnce_batch(config, aug_map, weights.tau)
    return (1.0 - weights.alpha) * sup + weights.alpha * nce


# --- asymptotic estimator ------------------------------------------------


def _sq_dists(u):
    # |a|^2 + |b|^2 - 2 a.b stays a smooth function of the ambient coordinates
    sq = np.einsum("ij,ij->i", u, u)
    D = sq[:, None] + sq[None, :] - 2.0 * (u @ u.T)
    np.fill_diagonal(D, 0.0)
    return D


def _asymptotic_parts(points, labels, K, n_y, tau):
    """Per-anchor diff and same log-terms plus the (unnormalized) align sum."""
    D = _sq_dists(points)
    logits = -D / (2.0 * tau)
    same = labels[:, None] == labels[None, :]
    diff_terms = logsumexp(np.where(same, -np.inf, logits), axis=1) - math.log((K - 1) * n_y)
    same_terms = logsumexp(np.where(same, logits, -np.inf), axis=1) - math.log(n_y)
    align_rows = np.where(same, D, 0.0).sum(axis=1) / (2.0 * tau)
    return logits, same, diff_terms, same_terms, align_rows


def _labels_info(labels, num_classes=None):
    labels = np.asarray(labels, dtype=np.int64)
    counts = np.bincount(labels, minlength=num_classes or 0)
    if counts.size < 2 or np.any(counts == 0):
        raise LabelError("asymptotic loss needs K >= 2 non-empty classes")
    if np.any(counts != counts[0]):
        raise BalanceError("asymptotic estimator requires equal class sizes")
    return labels, counts.size, int(counts[0])


def asymptotic_terms_array(points, labels, tau: float) -> dict[str, float]:
    """Unweighted ``diff``, ``same`` and ``align`` pieces for raw ``(n, d)`` points.

    Points need not be unit norm; distances are taken as ``|u_i - u_j|^2``.
    """
    labels, K, n_y = _labels_info(labels)
    points = np.asarray(points, dtype=float)
    _, _, diff_t, same_t, align_r = _asymptotic_parts(points, labels, K, n_y, tau)
    N = points.shape[0]
    return {
        "diff": math.fsum(diff_t) / N,
        "same": math.fsum(same_t) / N,
        "align": math.fsum(align_r) / (K * n_y * n_y),
    }


def asymptotic_value(points, labels, weights: LossWeights) -> float:
    t = asymptotic_terms_array(points, labels, weights.tau)
    a = weights.alpha
    return (1.0 - a) * t["diff"] + a * t["same"] + (1.0 - a) * t["align"]


def asymptotic_grad(points, labels, weights: LossWeights, tangent: bool = False) -> np.ndarray:
    """Gradient of :func:`asymptotic_value` with respect to each row of ``points``.

    The loss is treated as a function on ambient R^{n x d}, so finite
    differences off the sphere agree with it.  With ``tangent=True`` the
    radial component ``(g . u) u`` is removed from every row (meaningful
    for unit-norm rows).
    """
    labels, K, n_y = _labels_info(labels)
    u = np.asarray(points, dtype=float)
    N = u.shape[0]
    a, tau = weights.alpha, weights.tau
    logits, same, _, _, _ = _asymptotic_parts(u, labels, K, n_y, tau)

    def sym_softmax(mask):
        masked = np.where(mask, logits, -np.inf)
        w = np.exp(masked - masked.max(axis=1, keepdims=True))
        w /= w.sum(axis=1, keepdims=True)
        return w + w.T

    # d logits_ij / d u_i = -(u_i - u_j) / tau, symmetric in (i, j)
    coef = -((1.0 - a) * sym_softmax(~same) + a * sym_softmax(same)) / (N * tau)
    coef += np.where(same, 2.0 * (1.0 - a) / (K * n_y * n_y * tau), 0.0)
    # row k: sum_j c_kj (u_k - u_j)
    grad = coef.sum(axis=1)[:, None] * u - coef @ u
    if tangent:
        grad -= np.sum(grad * u, axis=1, keepdims=True) * u
    return grad


def asymptotic_terms(config: EmbeddingConfig, tau: float) -> dict[str, float]:
    """The three unweighted pieces of the estimator: ``diff``, ``same``, ``align``."""
    _labels_info(config.class_labels, config.num_classes)
    return asymptotic_terms_array(config.points, config.class_labels, tau)


def asymptotic_empirical(config: EmbeddingConfig, weights: LossWeights) -> float:
    """Empirical estimate of the asymptotic spread loss (augmentations merged).

    ``(1-a) mean_i log mean_{j diff} k_ij + a mean_i log mean_{j same} k_ij
    + (1-a) sum_{same pairs} |u-u'|^2 / (2 tau K n_y^2)`` with
    ``k_ij = exp(-|u_i-u_j|^2 / 2 tau)``.  Same-class sums include ``j = i``.
    """
    _labels_info(config.class_labels, config.num_classes)
    return asymptotic_value(config.points, config.class_labels, weights)


def asymptotic_gradient(config: EmbeddingConfig, weights: LossWeights, tangent: bool = False) -> np.ndarray:
    """Per-point gradient of :func:`asymptotic_empirical`, shape ``(n, d)``."""
    _labels_info(config.class_labels, config.num_classes)
    return asymptotic_grad(config.points, config.class_labels, weights, tangent=tangent)


# --- batch losses on raw arrays, with gradients ---------------------------


def batch_loss_and_grad(points, labels, weights: LossWeights, aug_map: AugmentationMap | None = None):
    """Vectorized ``spread_batch`` value and its gradient w.r.t. ``points``.

    ``points`` is an ``(n, d)`` array (rows assumed unit norm, not checked).
    With ``aug_map=None`` only the supervised term is evaluated, which is
    the ``alpha = 0`` case.  Returns ``(loss, grad)``.
    """
    u = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    n = u.shape[0]
    tau, a = weights.tau, weights.alpha
    S = (u @ u.T) / tau
    same = labels[:, None] == labels[None, :]
    eye = np.eye(n, dtype=bool)
    pos = same & ~eye
    neg = ~same
    n_pos = pos.sum(axis=1)
    if np.any(n_pos == 0) or np.any(neg.sum(axis=1) == 0):
        raise LabelError("every point needs a positive and a negative in the batch")

    C = np.zeros((n, n))
    loss = 0.0
    sup_weight = 1.0 if aug_map is None else 1.0 - a
    if sup_weight:
        lse_neg = logsumexp(np.where(neg, S, -np.inf), axis=1, keepdims=True)
        log_z = np.logaddexp(S, lse_neg)
        prob = np.exp(S - log_z)  # s_ip / (s_ip + sum_neg), meaningful on pos
        per_pair = np.where(pos, log_z - S, 0.0)
        sup = float(np.sum(per_pair.sum(axis=1) / n_pos) / n)
        scale = sup_weight / (n * n_pos)[:, None]
        C += np.where(pos, (prob - 1.0), 0.0) * scale
        soft_neg = np.where(neg, np.exp(S - lse_neg), 0.0)
        C += soft_neg * (np.where(pos, 1.0 - prob, 0.0).sum(axis=1, keepdims=True) * scale)
        loss += sup_weight * sup
    if aug_map is not None and a:
        anchors, augs = aug_map.anchors, aug_map.augmentations
        m = anchors.size
        rows = S[anchors]
        pmask = pos[anchors]
        lse = logsumexp(np.where(pmask, rows, -np.inf), axis=1)
        nce = float(np.sum(lse - rows[np.arange(m), augs]) / m)
        G = np.where(pmask, np.exp(rows - lse[:, None]), 0.0)
        G[np.arange(m), augs] -= 1.0
        C[anchors] += a * G / m
        loss += a * nce
    grad = (C + C.T) @ u / tau
    return loss, grad
