import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spreadlab.errors import BalanceError, DomainError, LabelError
from spreadlab.losses import (
    AugmentationMap,
    LossWeights,
    asymptotic_empirical,
    asymptotic_grad,
    asymptotic_gradient,
    asymptotic_terms,
    asymptotic_value,
    batch_loss_and_grad,
    cnce_batch,
    spread_batch,
    supcon_batch,
)
from spreadlab.sphere import EmbeddingConfig, make_collapsed, make_mu_theta, make_uniform, random_rotation


def pair_config(K, d, n_pairs, seed):
    """Anchors in the first half of every class, augmentations in the second."""
    cfg = make_uniform(K, d, 2 * n_pairs, seed)
    anchors, augs = [], []
    for y in range(K):
        idx = np.flatnonzero(cfg.class_labels == y)
        anchors.extend(idx[:n_pairs])
        augs.extend(idx[n_pairs:])
    return cfg, AugmentationMap(np.array(anchors), np.array(augs))


# --- brute-force oracles, written as literal double loops ---------------


def supcon_oracle(u, labels, tau):
    n = len(labels)
    total = 0.0
    for i in range(n):
        neg = sum(math.exp(u[i] @ u[j] / tau) for j in range(n) if labels[j] != labels[i])
        pos = [j for j in range(n) if j != i and labels[j] == labels[i]]
        acc = 0.0
        for p in pos:
            s = math.exp(u[i] @ u[p] / tau)
            acc += -math.log(s / (s + neg))
        total += acc / len(pos)
    return total / n


def cnce_oracle(u, labels, anchors, augs, tau):
    total = 0.0
    for i, a in zip(anchors, augs):
        den = sum(math.exp(u[i] @ u[j] / tau) for j in range(len(labels)) if j != i and labels[j] == labels[i])
        total += -math.log(math.exp(u[i] @ u[a] / tau) / den)
    return total / len(anchors)


def asymptotic_oracle(u, labels, alpha, tau):
    K = len(set(labels))
    n = len(labels)
    n_y = n // K
    k = lambda i, j: math.exp(-np.sum((u[i] - u[j]) ** 2) / (2 * tau))  # noqa: E731
    diff = same = align = 0.0
    for i in range(n):
        diff += math.log(sum(k(i, j) for j in range(n) if labels[j] != labels[i]) / ((K - 1) * n_y))
        same += math.log(sum(k(i, j) for j in range(n) if labels[j] == labels[i]) / n_y)
        align += sum(np.sum((u[i] - u[j]) ** 2) for j in range(n) if labels[j] == labels[i])
    return (1 - alpha) * diff / n + alpha * same / n + (1 - alpha) * align / (2 * tau * K * n_y * n_y)


def test_weights_validation():
    with pytest.raises(DomainError):
        LossWeights(1.2, 0.5)
    with pytest.raises(DomainError):
        LossWeights(0.5, 0.0)


def test_augmentation_map_validation():
    with pytest.raises(LabelError):
        AugmentationMap([0, 1], [1, 2])
    with pytest.raises(LabelError):
        AugmentationMap([0, 0], [2, 3])
    amap = AugmentationMap.appended(3)
    assert amap.augmentations.tolist() == [3, 4, 5]


def test_augmentation_must_share_class():
    cfg = make_collapsed(2, 2, 2)
    with pytest.raises(LabelError):
        cnce_batch(cfg, AugmentationMap([0], [2]), 0.5)


def test_supcon_collapsed_value():
    # every positive term is log(1 + 2 e^{-4}) at tau = 0.5
    cfg = make_collapsed(2, 3, 2)
    assert supcon_batch(cfg, 0.5) == pytest.approx(math.log(1 + 2 * math.exp(-4)), rel=1e-14)


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.integers(2, 5), st.integers(1, 3), st.integers(0, 9999), st.floats(0.1, 2.0))
def test_batch_losses_match_oracles(K, d, n_pairs, seed, tau):
    cfg, amap = pair_config(K, d, n_pairs, seed)
    u, labels = cfg.points, cfg.class_labels.tolist()
    assert supcon_batch(cfg, tau) == pytest.approx(supcon_oracle(u, labels, tau), rel=1e-11)
    assert cnce_batch(cfg, amap, tau) == pytest.approx(
        cnce_oracle(u, labels, amap.anchors, amap.augmentations, tau), rel=1e-11, abs=1e-12
    )
    w = LossWeights(0.3, tau)
    expected = 0.7 * supcon_oracle(u, labels, tau) + 0.3 * cnce_oracle(u, labels, amap.anchors, amap.augmentations, tau)
    assert spread_batch(cfg, amap, w) == pytest.approx(expected, rel=1e-11)


def test_supcon_needs_negatives_and_positives():
    one_class = EmbeddingConfig(np.eye(2), [0, 0])
    with pytest.raises(LabelError):
        supcon_batch(one_class, 0.5)
    singleton = EmbeddingConfig(np.eye(3), [0, 0, 1])
    with pytest.raises(LabelError):
        supcon_batch(singleton, 0.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(2, 3), st.integers(2, 6), st.integers(1, 4), st.integers(0, 9999),
       st.floats(0, 1), st.floats(0.1, 2.0))
def test_asymptotic_matches_oracle(K, d, n_y, seed, alpha, tau):
    cfg = make_uniform(K, d, n_y, seed)
    w = LossWeights(alpha, tau)
    got = asymptotic_empirical(cfg, w)
    assert got == pytest.approx(asymptotic_oracle(cfg.points, cfg.class_labels.tolist(), alpha, tau), rel=1e-11, abs=1e-12)


def test_asymptotic_terms_collapsed():
    t = asymptotic_terms(make_collapsed(2, 2, 3), 0.5)
    assert t["same"] == 0.0 and t["align"] == 0.0
    assert t["diff"] == pytest.approx(-4.0)


def test_asymptotic_requires_balance():
    cfg = EmbeddingConfig(np.eye(3), [0, 0, 1])
    with pytest.raises(BalanceError):
        asymptotic_empirical(cfg, LossWeights(0.5, 0.5))


def test_asymptotic_requires_two_classes():
    with pytest.raises(LabelError):
        asymptotic_empirical(EmbeddingConfig(np.eye(2), [0, 0]), LossWeights(0.5, 0.5))


def central_difference(f, x, h=1e-6):
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 3), st.sampled_from([2, 3, 8]), st.integers(0, 9999), st.floats(0.05, 0.95))
def test_asymptotic_gradient_finite_differences(K, d, seed, alpha):
    cfg = make_uniform(K, d, 3, seed)
    w = LossWeights(alpha, 0.5)
    labels = cfg.class_labels
    fd = central_difference(lambda x: asymptotic_value(x, labels, w), np.array(cfg.points))
    an = asymptotic_gradient(cfg, w)
    assert np.linalg.norm(an - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_tangent_gradient_is_orthogonal():
    cfg = make_uniform(2, 4, 5, 1)
    g = asymptotic_grad(cfg.points, cfg.class_labels, LossWeights(0.7, 0.5), tangent=True)
    assert np.allclose(np.sum(g * cfg.points, axis=1), 0.0, atol=1e-14)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 3), st.integers(2, 5), st.integers(0, 9999), st.floats(0, 1))
def test_batch_vectorized_matches_and_differentiates(K, d, seed, alpha):
    cfg, amap = pair_config(K, d, 2, seed)
    w = LossWeights(alpha, 0.5)
    loss, grad = batch_loss_and_grad(cfg.points, cfg.class_labels, w, amap)
    assert loss == pytest.approx(spread_batch(cfg, amap, w), rel=1e-12, abs=1e-13)
    fd = central_difference(lambda x: batch_loss_and_grad(x, cfg.class_labels, w, amap)[0], np.array(cfg.points))
    assert np.linalg.norm(grad - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))
    sup, _ = batch_loss_and_grad(cfg.points, cfg.class_labels, w)
    assert sup == pytest.approx(supcon_batch(cfg, 0.5), rel=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 9999))
def test_losses_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    cfg, amap = pair_config(2, 4, 2, seed)
    rot = cfg.rotated(random_rotation(4, rng))
    w = LossWeights(0.6, 0.4)
    assert spread_batch(rot, amap, w) == pytest.approx(spread_batch(cfg, amap, w), abs=1e-10)
    assert asymptotic_empirical(rot, w) == pytest.approx(asymptotic_empirical(cfg, w), abs=1e-10)


def test_mu_theta_family_lower_than_collapse_in_window():
    w = LossWeights(0.72, 0.5)
    assert asymptotic_empirical(make_mu_theta(2, 2, 0.3, 1), w) < asymptotic_empirical(make_collapsed(2, 2, 2), w)
