"""Per-class (and generic) autoencoders trained on mean squared reconstruction error."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from spreadlab.errors import DimensionError, DomainError, InsufficientDataError, TrainingFailure
from spreadlab.toy.data import ToyDataset
from spreadlab.toy.mlp import init_layers, mlp_backward, mlp_forward


@dataclass
class AutoencoderUnit:
    """One autoencoder: input centering, encoder layers, decoder layers."""

    center: np.ndarray
    enc_W: list
    enc_b: list
    dec_W: list
    dec_b: list

    @property
    def bottleneck(self) -> int:
        return self.enc_W[-1].shape[1]

    def encode(self, x) -> np.ndarray:
        return mlp_forward(self.enc_W, self.enc_b, np.asarray(x, dtype=float) - self.center)[0]

    def reconstruct(self, x) -> np.ndarray:
        code = self.encode(x)
        return mlp_forward(self.dec_W, self.dec_b, code)[0] + self.center

    def reconstruction_loss(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.mean(np.sum((self.reconstruct(x) - x) ** 2, axis=1)))


@dataclass
class AutoencoderParams:
    """One unit per class (``generic=False``) or a single shared unit."""

    units: list
    generic: bool = False

    def __post_init__(self):
        if not self.units:
            raise DimensionError("need at least one autoencoder unit")
        b = {u.bottleneck for u in self.units}
        if len(b) != 1:
            raise DimensionError("all units must share the bottleneck dimension")

    @property
    def bottleneck(self) -> int:
        return self.units[0].bottleneck

    @property
    def input_dim(self) -> int:
        return self.units[0].center.size

    def unit_for(self, y: int) -> AutoencoderUnit:
        return self.units[0] if self.generic else self.units[y]

    def encode(self, x, class_labels) -> np.ndarray:
        """Bottleneck codes, each point routed to its class's unit."""
        x = np.asarray(x, dtype=float)
        class_labels = np.asarray(class_labels)
        out = np.zeros((x.shape[0], self.bottleneck))
        for y in np.unique(class_labels):
            mask = class_labels == y
            out[mask] = self.unit_for(int(y)).encode(x[mask])
        return out


def _train_unit(x, bottleneck, hidden, epochs, lr, batch_size, rng, clip=10.0) -> tuple[AutoencoderUnit, list]:
    p = x.shape[1]
    center = x.mean(axis=0)
    xc = x - center
    enc_W, enc_b = init_layers([p, *hidden, bottleneck], rng)
    dec_W, dec_b = init_layers([bottleneck, *reversed(hidden), p], rng)
    n = xc.shape[0]
    history = []
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            xb = xc[order[start:start + batch_size]]
            code, enc_acts = mlp_forward(enc_W, enc_b, xb)
            rec, dec_acts = mlp_forward(dec_W, dec_b, code)
            # d/d rec of mean_i |rec_i - x_i|^2
            delta = 2.0 * (rec - xb) / xb.shape[0]
            gdW, gdb, g_code = mlp_backward(dec_W, dec_acts, delta)
            geW, geb, _ = mlp_backward(enc_W, enc_acts, g_code)
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in (*gdW, *gdb, *geW, *geb)))
            if norm > clip:
                # keeps the linear model stable on wide-variance inputs
                scale = clip / norm
                gdW = [g * scale for g in gdW]
                gdb = [g * scale for g in gdb]
                geW = [g * scale for g in geW]
                geb = [g * scale for g in geb]
            for l in range(len(dec_W)):
                dec_W[l] -= lr * gdW[l]
                dec_b[l] -= lr * gdb[l]
            for l in range(len(enc_W)):
                enc_W[l] -= lr * geW[l]
                enc_b[l] -= lr * geb[l]
        unit = AutoencoderUnit(center, enc_W, enc_b, dec_W, dec_b)
        loss = unit.reconstruction_loss(x)
        if not math.isfinite(loss):
            raise TrainingFailure(f"autoencoder diverged at epoch {epoch}", {"epoch": epoch})
        history.append(loss)
    return AutoencoderUnit(center, enc_W, enc_b, dec_W, dec_b), history


def train_class_autoencoder(
    dataset: ToyDataset,
    bottleneck: int = 2,
    epochs: int = 60,
    lr: float = 0.02,
    seed: int = 0,
    hidden=(),
    batch_size: int = 64,
    generic: bool = False,
):
    """Train one autoencoder per coarse class on that class's points only.

    ``generic=True`` trains a single autoencoder on all points instead.
    Returns ``(params, final_losses)`` where ``final_losses[y]`` is the mean
    squared reconstruction error on class ``y``.
    """
    x = np.asarray(dataset.inputs, dtype=float)
    p = x.shape[1]
    if not 1 <= bottleneck <= p:
        raise DimensionError(f"bottleneck must lie in 1..{p}")
    rng = np.random.default_rng(seed)
    classes = np.unique(dataset.class_labels)
    if generic:
        unit, _ = _train_unit(x, bottleneck, hidden, epochs, lr, batch_size, rng)
        params = AutoencoderParams([unit], generic=True)
    else:
        units = []
        for y in range(int(classes.max()) + 1):
            mask = dataset.class_labels == y
            if not np.any(mask):
                raise InsufficientDataError(f"class {y} has no points")
            unit, _ = _train_unit(x[mask], bottleneck, hidden, epochs, lr, batch_size, rng)
            units.append(unit)
        params = AutoencoderParams(units)
    losses = {
        int(y): params.unit_for(int(y)).reconstruction_loss(x[dataset.class_labels == y]) for y in classes
    }
    return params, losses


def compose_thanos(encoder, cae: AutoencoderParams, x, class_labels) -> np.ndarray:
    """``[sphere-normalized encoder output | class-routed bottleneck code]``."""
    from spreadlab.toy.encoder import embed

    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != encoder.input_dim or x.shape[1] != cae.input_dim:
        raise DimensionError("encoder, autoencoder and inputs disagree on the input dimension")
    if len(class_labels) != x.shape[0]:
        raise DomainError("one class label per input required")
    return np.hstack([embed(encoder, x), cae.encode(x, class_labels)])
