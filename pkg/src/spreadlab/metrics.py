"""Representation metrics: spread, subclass tightness, transfer, recovery, Lipschitz slopes."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from spreadlab.errors import DomainError, InsufficientDataError, LabelError
from spreadlab.sphere import EmbeddingConfig

RATIO_CUTOFF = 1e-6


def _group_mean_distance(points, mask, squared=False):
    grp = points[mask]
    dist = np.linalg.norm(grp - grp.mean(axis=0), axis=1)
    return float(np.mean(dist**2 if squared else dist))


def class_spread(config: EmbeddingConfig) -> tuple[np.ndarray, float]:
    """Per-class mean distance to the class centroid, and the mean over classes."""
    per = np.array([
        _group_mean_distance(config.points, config.class_labels == y)
        for y in range(config.num_classes)
    ])
    return per, float(per.mean())


def _subclass_ids(config):
    if config.subclass_labels is None:
        raise LabelError("configuration has no subclass labels")
    return [int(z) for z in np.unique(config.subclass_labels)]


def subclass_sigma(config: EmbeddingConfig) -> dict[int, float]:
    """Mean distance of each subclass's points to the subclass centroid."""
    return {
        z: _group_mean_distance(config.points, config.subclass_labels == z)
        for z in _subclass_ids(config)
    }


def subclass_var(config: EmbeddingConfig) -> dict[int, float]:
    """Mean squared distance to the subclass centroid."""
    return {
        z: _group_mean_distance(config.points, config.subclass_labels == z, squared=True)
        for z in _subclass_ids(config)
    }


def delta_separation(config: EmbeddingConfig, z: int, z_other: int) -> float:
    """Separation between two subclasses of the same class.

    ``(s(y) - p(z|y)^2 sigma(z) - p(z'|y)^2 sigma(z')) / (p(z|y) p(z'|y))``
    with the conditional proportions taken from label counts.
    """
    owner = config.subclass_to_class()
    if z not in owner or z_other not in owner:
        raise LabelError("unknown subclass id")
    y = owner[z]
    if owner[z_other] != y:
        raise LabelError(f"subclasses {z} and {z_other} belong to different classes")
    in_class = config.class_labels == y
    n_y = in_class.sum()
    p = np.sum(config.subclass_labels == z) / n_y
    q = np.sum(config.subclass_labels == z_other) / n_y
    spread = class_spread(config)[0][y]
    sig = subclass_sigma(config)
    return float((spread - p * p * sig[z] - q * q * sig[z_other]) / (p * q))


def transfer_ratio(config: EmbeddingConfig, cutoff: float = RATIO_CUTOFF) -> dict[int, float]:
    """``sigma(z) / s(y)`` per subclass; ``nan`` where the class spread is at most ``cutoff``."""
    owner = config.subclass_to_class()
    spread = class_spread(config)[0]
    sig = subclass_sigma(config)
    return {z: (sig[z] / spread[y] if spread[y] > cutoff else math.nan) for z, y in owner.items()}


# --- coarse-to-fine evaluation -------------------------------------------


def mean_classifier(embeddings, subclass_labels) -> dict[int, np.ndarray]:
    """``W_z`` = mean embedding of each labeled subclass."""
    emb = np.asarray(embeddings, dtype=float)
    sub = np.asarray(subclass_labels)
    if emb.shape[0] != sub.shape[0]:
        raise LabelError("one subclass label per embedding required")
    out = {}
    for z in np.unique(sub):
        members = emb[sub == z]
        out[int(z)] = members.mean(axis=0)
    if not out:
        raise InsufficientDataError("no labeled embeddings")
    return out


def margin_gaps(embeddings, W_z, W_other) -> np.ndarray:
    """Logit gap ``f(x) . (W_z - W_z')`` per point."""
    return np.asarray(embeddings, dtype=float) @ (np.asarray(W_z) - np.asarray(W_other))


def gamma_margin_error(embeddings, W_z, W_other, gamma: float) -> float:
    """Fraction of points whose correct-subclass score is not ``gamma`` times the other.

    Equivalent to the logit gap falling strictly below ``log(gamma)``.
    """
    if not gamma > 1.0:
        raise DomainError("gamma must exceed 1")
    gaps = margin_gaps(embeddings, W_z, W_other)
    if gaps.size == 0:
        raise InsufficientDataError("no evaluation points")
    return float(np.mean(gaps < math.log(gamma)))


@dataclass
class TransferReport:
    gamma: float
    weights: dict[int, np.ndarray]
    counts: dict[int, int]
    margin_errors: dict[int, float]
    accuracy: float
    class_accuracy: dict[int, float]

    @property
    def mean_margin_error(self) -> float:
        return float(np.mean(list(self.margin_errors.values())))


def transfer_report(
    train_emb, train_classes, train_subs, eval_emb, eval_classes, eval_subs, gamma: float
) -> TransferReport:
    """Mean-classifier coarse-to-fine evaluation.

    Within each coarse class the mean classifier decides between that
    class's subclasses.  Margin errors compare each subclass against its
    sibling(s), taking the worst competitor per point.
    """
    if not gamma > 1.0:
        raise DomainError("gamma must exceed 1")
    train_emb = np.asarray(train_emb, dtype=float)
    eval_emb = np.asarray(eval_emb, dtype=float)
    train_classes, train_subs = np.asarray(train_classes), np.asarray(train_subs)
    eval_classes, eval_subs = np.asarray(eval_classes), np.asarray(eval_subs)
    owner = {int(z): int(train_classes[train_subs == z][0]) for z in np.unique(train_subs)}
    for z in np.unique(eval_subs):
        if int(z) not in owner:
            raise InsufficientDataError(f"subclass {z} missing from the labeled split")
    for z in owner:
        if not np.any(eval_subs == z):
            raise InsufficientDataError(f"subclass {z} missing from the evaluation split")
    W = mean_classifier(train_emb, train_subs)
    counts = {z: int(np.sum(train_subs == z)) for z in W}
    errors = {}
    correct = np.zeros(eval_emb.shape[0], dtype=bool)
    class_acc = {}
    log_g = math.log(gamma)
    for y in sorted(set(owner.values())):
        siblings = sorted(z for z, c in owner.items() if c == y)
        in_y = eval_classes == y
        logits = eval_emb[in_y] @ np.stack([W[z] for z in siblings]).T
        pred = np.asarray(siblings)[np.argmax(logits, axis=1)]
        correct[in_y] = pred == eval_subs[in_y]
        class_acc[y] = float(np.mean(pred == eval_subs[in_y]))
        for col, z in enumerate(siblings):
            rows = eval_subs[in_y] == z
            own = logits[rows, col]
            others = np.delete(logits[rows], col, axis=1)
            gap = own - (others.max(axis=1) if others.shape[1] else own)
            errors[z] = float(np.mean(gap < log_g))
    return TransferReport(gamma, W, counts, errors, float(correct.mean()), class_acc)


# --- subclass recovery ---------------------------------------------------


def kmeans(X, k: int, seed: int, n_init: int = 10, max_iter: int = 100):
    """Lloyd's algorithm with k-means++ seeding; best inertia over ``n_init`` restarts.

    Exact distance ties in the assignment step are broken at random, so a
    fully degenerate cloud is split randomly rather than dumped into one
    cluster.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if k < 1 or k > n:
        raise DomainError(f"k={k} must lie in 1..{n}")
    rng = np.random.default_rng(seed)
    best = None
    for restart in range(n_init):
        centers = _kmeanspp(X, k, rng)
        labels = None
        for _ in range(max_iter):
            new = _assign(X, centers, rng)
            if labels is not None and np.array_equal(new, labels):
                break
            labels = new
            for c in range(k):
                members = X[labels == c]
                if members.size:
                    centers[c] = members.mean(axis=0)
        inertia = float(np.sum((X - centers[labels]) ** 2))
        if best is None or inertia < best[0]:
            best = (inertia, labels.copy(), centers.copy())
    return best[1], best[2], best[0]


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    centers = [X[rng.integers(n)]]
    for _ in range(1, k):
        d2 = np.min(((X[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        idx = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers.append(X[idx])
    return np.array(centers, dtype=float)


def _assign(X, centers, rng):
    d2 = ((X[:, None, :] - centers[None]) ** 2).sum(-1)
    best = d2.min(axis=1, keepdims=True)
    ties = d2 <= best + 1e-12 * (1.0 + best)
    if np.all(ties.sum(axis=1) == 1):
        return np.argmax(ties, axis=1)
    noise = rng.random(d2.shape)
    return np.argmax(np.where(ties, noise, -1.0), axis=1)


def matched_f1(true_labels, cluster_labels) -> float:
    """Macro F1 over true groups under the cluster matching that maximizes total F1."""
    true_labels = np.asarray(true_labels)
    cluster_labels = np.asarray(cluster_labels)
    t_ids = np.unique(true_labels)
    c_ids = np.unique(cluster_labels)
    overlap = np.array([[np.sum((true_labels == t) & (cluster_labels == c)) for c in c_ids] for t in t_ids])
    t_size = overlap.sum(axis=1)[:, None]
    c_size = overlap.sum(axis=0)[None, :]
    f1 = 2.0 * overlap / (t_size + c_size)
    # unmatched true groups score 0, so pad with empty clusters
    if f1.shape[1] < f1.shape[0]:
        f1 = np.hstack([f1, np.zeros((f1.shape[0], f1.shape[0] - f1.shape[1]))])
    rows, cols = linear_sum_assignment(-f1)
    return float(f1[rows, cols].sum() / len(t_ids))


def subclass_recovery(embeddings, class_labels, true_subclass_labels, k: int, seed: int = 0) -> dict:
    """Cluster each class's embeddings into ``k`` groups and score against true subclasses."""
    emb = np.asarray(embeddings, dtype=float)
    classes = np.asarray(class_labels)
    subs = np.asarray(true_subclass_labels)
    if k < 1:
        raise DomainError("k must be at least 1")
    per_class = {}
    for y in np.unique(classes):
        mask = classes == y
        if mask.sum() < k:
            raise DomainError(f"class {y} has {mask.sum()} points, fewer than k={k}")
        clusters, _, _ = kmeans(emb[mask], k, seed=seed + int(y))
        per_class[int(y)] = matched_f1(subs[mask], clusters)
    return {"per_class": per_class, "overall": float(np.mean(list(per_class.values())))}


# --- Lipschitz slopes ----------------------------------------------------

LIPSCHITZ_MODES = ("encoder", "decoder-reverse", "augmentation")


@dataclass(frozen=True)
class LipschitzEstimate:
    constant: float
    mode: str
    pairs: int
    cutoff: float


def estimate_lipschitz(mode: str, input_distances, output_distances, cutoff: float = RATIO_CUTOFF) -> LipschitzEstimate:
    """Slope of the steepest line from the origin through the (input, output) scatter."""
    if mode not in LIPSCHITZ_MODES:
        raise DomainError(f"mode must be one of {LIPSCHITZ_MODES}")
    x = np.asarray(input_distances, dtype=float)
    y = np.asarray(output_distances, dtype=float)
    keep = x > cutoff
    if not np.any(keep):
        raise InsufficientDataError("every pair has input distance at or below the cutoff")
    return LipschitzEstimate(float(np.max(y[keep] / x[keep])), mode, int(keep.sum()), cutoff)


def select_augmentation_pairs(input_distances, output_distances, cutoff: float = RATIO_CUTOFF):
    """Per anchor (row), keep the augmentation with the smallest input/output ratio.

    Arrays are ``(anchors, augmentations_per_anchor)``.  Returns the
    selected ``(input, output)`` distance vectors.
    """
    x = np.asarray(input_distances, dtype=float)
    y = np.asarray(output_distances, dtype=float)
    # smallest x / y is largest y / x; pairs below the cutoff never win
    ratio = np.where(x > cutoff, y / np.where(x > cutoff, x, 1.0), -np.inf)
    pick = np.argmax(ratio, axis=1)
    rows = np.arange(x.shape[0])
    return x[rows, pick], y[rows, pick]


# --- permutation invariance ----------------------------------------------


def class_fixing_permutation(class_labels, rng, anchors: Optional[np.ndarray] = None) -> np.ndarray:
    """Random permutation of ``anchors`` (default: all indices) that preserves class."""
    labels = np.asarray(class_labels)
    idx = np.arange(labels.size) if anchors is None else np.asarray(anchors)
    perm = idx.copy()
    for y in np.unique(labels[idx]):
        pos = np.flatnonzero(labels[idx] == y)
        perm[pos] = idx[pos][rng.permutation(pos.size)]
    return perm


def permute_pairs(config: EmbeddingConfig, aug_map, anchor_perm) -> EmbeddingConfig:
    """Anchor ``i`` takes the embedding of ``anchor_perm[i]``; augmentations follow their anchors."""
    pts = np.array(config.points)
    src_anchor = np.asarray(anchor_perm)
    where = {int(a): k for k, a in enumerate(aug_map.anchors)}
    src_aug = aug_map.augmentations[[where[int(a)] for a in src_anchor]]
    pts[aug_map.anchors] = config.points[src_anchor]
    pts[aug_map.augmentations] = config.points[src_aug]
    return config.with_points(pts)


def permutation_gap(config: EmbeddingConfig, aug_map, weights, trials: int, seed: int) -> dict[str, float]:
    """Largest change of the batch and asymptotic losses over random class-fixing permutations."""
    from spreadlab.losses import asymptotic_empirical, spread_batch

    if trials < 1:
        raise DomainError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    base_batch = spread_batch(config, aug_map, weights)
    base_asym = asymptotic_empirical(config, weights)
    gap_b = gap_a = 0.0
    for _ in range(trials):
        perm = class_fixing_permutation(config.class_labels, rng, aug_map.anchors)
        permuted = permute_pairs(config, aug_map, perm)
        gap_b = max(gap_b, abs(spread_batch(permuted, aug_map, weights) - base_batch))
        gap_a = max(gap_a, abs(asymptotic_empirical(permuted, weights) - base_asym))
    return {"spread_batch": gap_b, "asymptotic": gap_a}
