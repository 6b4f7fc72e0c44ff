"""Synthetic coarse/fine Gaussian data and epsilon-ball augmentation."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from spreadlab.errors import DomainError


@dataclass(frozen=True)
class SubclassSpec:
    """Generator for ``2K`` Gaussian subclasses; subclass ``z`` belongs to class ``z // 2``."""

    K: int
    centers: np.ndarray
    spreads: np.ndarray
    proportions: np.ndarray

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        spreads = np.asarray(self.spreads, dtype=float).reshape(-1)
        props = np.asarray(self.proportions, dtype=float).reshape(-1)
        n_sub = 2 * self.K
        if centers.shape[0] != n_sub or spreads.size != n_sub or props.size != n_sub:
            raise DomainError(f"need {n_sub} subclass centers, spreads and proportions")
        if np.any(props < 0) or not np.isclose(props.sum(), 1.0, atol=1e-12):
            raise DomainError("proportions must be non-negative and sum to 1")
        if np.any(spreads < 0):
            raise DomainError("spreads must be non-negative")
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "spreads", spreads)
        object.__setattr__(self, "proportions", props)

    @property
    def input_dim(self) -> int:
        return self.centers.shape[1]


@dataclass(frozen=True, eq=False)
class ToyDataset:
    inputs: np.ndarray
    class_labels: np.ndarray
    subclass_labels: np.ndarray
    spec: SubclassSpec
    seed: int
    proportions: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "proportions", self.spec.proportions)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    def subset(self, idx) -> "ToyDataset":
        idx = np.asarray(idx)
        return ToyDataset(self.inputs[idx], self.class_labels[idx], self.subclass_labels[idx], self.spec, self.seed)

    def split(self, frac: float, seed: int):
        """Stratified (by subclass) split into two datasets."""
        rng = np.random.default_rng(seed)
        first, second = [], []
        for z in np.unique(self.subclass_labels):
            idx = rng.permutation(np.flatnonzero(self.subclass_labels == z))
            cut = int(round(frac * idx.size))
            first.append(idx[:cut])
            second.append(idx[cut:])
        return self.subset(np.sort(np.concatenate(first))), self.subset(np.sort(np.concatenate(second)))


def gen_subclass_data(spec: SubclassSpec, n: int, seed: int) -> ToyDataset:
    """Draw ``z ~ p(z)`` then ``x ~ N(center_z, spread_z^2 I)``."""
    if n < 0:
        raise DomainError("n must be non-negative")
    rng = np.random.default_rng(seed)
    z = rng.choice(spec.proportions.size, size=n, p=spec.proportions)
    noise = rng.standard_normal((n, spec.input_dim))
    x = spec.centers[z] + spec.spreads[z, None] * noise
    return ToyDataset(x, z // 2, z, spec, seed)


def standard_spec(input_dim: int = 8, class_offset: float = 4.0, sub_offset: float = 2.0, std: float = 1.0) -> SubclassSpec:
    """Two classes, two subclasses each, balanced.

    Class ``y`` sits at ``+-class_offset`` on axis 0; its two subclasses
    are split by ``+-sub_offset`` along axis ``1 + y``, so sibling centers
    are ``2 * sub_offset`` apart (4 std by default) and each class has its
    own fine-grained direction.
    """
    if input_dim < 3:
        raise DomainError("standard spec needs at least 3 input dimensions")
    centers = np.zeros((4, input_dim))
    for y, sign in ((0, 1.0), (1, -1.0)):
        for s, sub_sign in ((0, 1.0), (1, -1.0)):
            centers[2 * y + s, 0] = sign * class_offset
            centers[2 * y + s, 1 + y] = sub_sign * sub_offset
    return SubclassSpec(2, centers, np.full(4, std), np.full(4, 0.25))


def augment(x, epsilon: float, seed) -> np.ndarray:
    """Add noise drawn uniformly from the radius-``epsilon`` ball to every row."""
    if epsilon < 0:
        raise DomainError("epsilon must be non-negative")
    x = np.asarray(x, dtype=float)
    if epsilon == 0:
        return x.copy()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    flat = np.atleast_2d(x)
    p = flat.shape[1]
    direction = rng.standard_normal(flat.shape)
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    radius = epsilon * rng.random((flat.shape[0], 1)) ** (1.0 / p)
    return (flat + radius * direction).reshape(x.shape)
