"""Small tanh MLP with sphere-normalized output, trained by hand-written backprop."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spreadlab.errors import DimensionError, DomainError, TrainingFailure
from spreadlab.losses import AugmentationMap, LossWeights, batch_loss_and_grad
from spreadlab.toy.data import ToyDataset, augment
from spreadlab.toy.mlp import init_layers, mlp_backward, mlp_forward


@dataclass
class EncoderParams:
    """Weights ``W[l]`` of shape ``(fan_in, fan_out)`` and biases ``b[l]``."""

    weights: list
    biases: list

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one bias per weight matrix")
        for l, (W, b) in enumerate(zip(self.weights, self.biases)):
            if b.shape != (W.shape[1],):
                raise DimensionError(f"layer {l}: bias shape {b.shape} does not match {W.shape}")
            if l and W.shape[0] != self.weights[l - 1].shape[1]:
                raise DimensionError(f"layer {l} fan-in does not match previous fan-out")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]

    def flat(self) -> np.ndarray:
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def copy(self) -> "EncoderParams":
        return EncoderParams([W.copy() for W in self.weights], [b.copy() for b in self.biases])

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(W)) and np.all(np.isfinite(b)) for W, b in zip(self.weights, self.biases))


def init_encoder(input_dim: int, hidden=(32, 32), out_dim: int = 8, seed: int = 0) -> EncoderParams:
    Ws, bs = init_layers([input_dim, *hidden, out_dim], np.random.default_rng(seed))
    return EncoderParams(Ws, bs)


def forward(params: EncoderParams, x):
    """Return ``(z, cache)``; ``z`` has unit-norm rows."""
    out, acts = mlp_forward(params.weights, params.biases, x)
    norm = np.linalg.norm(out, axis=1, keepdims=True)
    return out / norm, (acts, norm)


def embed(params: EncoderParams, x) -> np.ndarray:
    return forward(params, x)[0]


def backward(params: EncoderParams, cache, grad_z):
    """Gradients of the loss w.r.t. weights and biases given ``dL/dz``."""
    acts, norm = cache
    z = acts[-1] / norm
    # through z = h / |h|
    delta = (grad_z - np.sum(grad_z * z, axis=1, keepdims=True) * z) / norm
    gW, gb, _ = mlp_backward(params.weights, acts, delta)
    return gW, gb


def batch_objective(params: EncoderParams, x, labels, weights: LossWeights, x_aug=None):
    """Loss and parameter gradients for one batch.

    With ``x_aug`` the batch is ``[x; x_aug]`` and anchor ``i`` pairs with
    row ``len(x) + i``; without it only the supervised term is used.
    """
    if x_aug is None:
        inputs, lab, amap = x, labels, None
    else:
        inputs = np.vstack([x, x_aug])
        lab = np.concatenate([labels, labels])
        amap = AugmentationMap.appended(len(x))
    z, cache = forward(params, inputs)
    loss, gz = batch_loss_and_grad(z, lab, weights, amap)
    gW, gb = backward(params, cache, gz)
    return loss, gW, gb


def stratified_batches(labels, batch_size: int, rng):
    """Index batches with an equal number of points from every class."""
    classes = np.unique(labels)
    per = batch_size // classes.size
    if per < 2:
        raise DomainError("batch must hold at least two points per class")
    pools = [rng.permutation(np.flatnonzero(labels == y)) for y in classes]
    n_batches = min(p.size for p in pools) // per
    return [np.concatenate([p[b * per:(b + 1) * per] for p in pools]) for b in range(n_batches)]


def train_encoder(
    dataset: ToyDataset,
    mode: str,
    weights: LossWeights,
    epochs: int = 60,
    batch_size: int = 64,
    lr: float = 0.5,
    seed: int = 0,
    epsilon: float = 1.0,
    hidden=(32, 32),
    out_dim: int = 8,
):
    """SGD on the batch spread loss (``mode='spread'``) or supervised loss (``mode='supcon'``).

    Returns ``(params, history)`` with the mean batch loss per epoch.
    """
    if mode not in ("supcon", "spread"):
        raise DomainError("mode must be 'supcon' or 'spread'")
    rng = np.random.default_rng(seed)
    params = init_encoder(dataset.inputs.shape[1], hidden, out_dim, seed=int(rng.integers(2**31)))
    history = []
    for epoch in range(epochs):
        losses = []
        for idx in stratified_batches(dataset.class_labels, batch_size, rng):
            x = dataset.inputs[idx]
            x_aug = augment(x, epsilon, rng) if mode == "spread" else None
            loss, gW, gb = batch_objective(params, x, dataset.class_labels[idx], weights, x_aug)
            if not math.isfinite(loss):
                raise TrainingFailure(f"non-finite loss at epoch {epoch}", {"epoch": epoch})
            for l in range(len(params.weights)):
                params.weights[l] -= lr * gW[l]
                params.biases[l] -= lr * gb[l]
            losses.append(loss)
        if not params.is_finite():
            raise TrainingFailure(f"parameters diverged at epoch {epoch}", {"epoch": epoch})
        history.append(math.fsum(losses) / len(losses))
    return params, history
