"""Labeled point configurations on the unit hypersphere.

A configuration is the finite stand-in for a pushforward measure on
S^{d-1}: ``n`` unit vectors, a coarse class label for each, and optionally
a subclass (atom) label.  The constructors here build the three reference
geometries used throughout the package: the class-collapsed simplex, the
two-atom ``mu_theta`` family and i.i.d. uniform samples.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from spreadlab.errors import DimensionError, DomainError, LabelError

NORM_TOL = 1e-9


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EmbeddingConfig:
    """Unit vectors with class labels (and optional subclass labels).

    Parameters
    ----------
    points : (n, d) array_like
        Rows must have unit Euclidean norm.
    class_labels : (n,) array_like of int
        Values in ``0..num_classes-1``; every class must be non-empty.
    subclass_labels : (n,) array_like of int, optional
        Each subclass id must occur under exactly one class.
    num_classes : int, optional
        Defaults to ``max(class_labels) + 1``.
    """

    points: np.ndarray
    class_labels: np.ndarray
    subclass_labels: Optional[np.ndarray] = None
    num_classes: Optional[int] = None

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 2 or pts.shape[1] < 2:
            raise DimensionError(f"points must be an (n, d) array with d >= 2, got shape {pts.shape}")
        labels = _frozen(self.class_labels, dtype=np.int64)
        if labels.shape != (pts.shape[0],):
            raise LabelError("class_labels must have one entry per point")
        norms = np.linalg.norm(pts, axis=1)
        if pts.shape[0] and np.max(np.abs(norms - 1.0)) > NORM_TOL:
            raise DomainError("all points must have unit norm (tolerance 1e-9)")
        k = self.num_classes
        if k is None:
            k = int(labels.max()) + 1 if labels.size else 0
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise LabelError(f"class labels must lie in 0..{k - 1}")
        if np.any(np.bincount(labels, minlength=k) == 0):
            raise LabelError("every class must be non-empty")
        sub = self.subclass_labels
        if sub is not None:
            sub = _frozen(sub, dtype=np.int64)
            if sub.shape != labels.shape:
                raise LabelError("subclass_labels must have one entry per point")
            for z in np.unique(sub):
                owners = np.unique(labels[sub == z])
                if owners.size != 1:
                    raise LabelError(f"subclass {z} appears under classes {owners.tolist()}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "class_labels", labels)
        object.__setattr__(self, "subclass_labels", sub)
        object.__setattr__(self, "num_classes", int(k))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.class_labels, minlength=self.num_classes)

    @property
    def is_balanced(self) -> bool:
        counts = self.class_counts()
        return bool(np.all(counts == counts[0]))

    @property
    def points_per_class(self) -> int:
        """``n_y`` for a balanced configuration."""
        if not self.is_balanced:
            raise LabelError("configuration is not class-balanced")
        return self.n // self.num_classes

    def subclass_to_class(self) -> dict[int, int]:
        if self.subclass_labels is None:
            raise LabelError("configuration has no subclass labels")
        return {
            int(z): int(self.class_labels[np.argmax(self.subclass_labels == z)])
            for z in np.unique(self.subclass_labels)
        }

    def with_points(self, points) -> "EmbeddingConfig":
        """Same labels, new coordinates."""
        return EmbeddingConfig(points, self.class_labels, self.subclass_labels, self.num_classes)

    def rotated(self, rotation) -> "EmbeddingConfig":
        """Apply an orthogonal ``(d, d)`` matrix to every point."""
        return self.with_points(self.points @ np.asarray(rotation).T)

    def permuted(self, perm) -> "EmbeddingConfig":
        """Reassign coordinates: point ``i`` receives the coordinates of ``perm[i]``.

        Labels stay in place, so this is a relabeling of which input owns
        which embedding.
        """
        return self.with_points(self.points[np.asarray(perm)])


@dataclass(frozen=True, eq=False)
class SimplexFrame:
    """Vertices of a regular simplex inscribed in S^{d-1}."""

    dim: int
    vertices: np.ndarray
    pairwise_dot: float

    @property
    def num_classes(self) -> int:
        return self.vertices.shape[0]


def regular_simplex(K: int, d: int) -> SimplexFrame:
    """Regular ``K``-vertex simplex on S^{d-1}.

    K=2 gives the antipodal pair on the first axis.  K=3 follows the
    convention v0 = e0, v1 = (-1/2, 0, sqrt(3)/2), v2 = (-1/2, 0, -sqrt(3)/2)
    when d >= 3 (the simplex lives in the (0, 2) plane, leaving axis 1 free
    for rotations); for d = 2 the same triangle is placed in the (0, 1) plane.
    Larger K use the centered standard basis of R^K expressed in an
    orthonormal basis of its sum-zero subspace.
    """
    if K < 2:
        raise DomainError("need at least two classes")
    if d < 2:
        raise DimensionError("dimension must be at least 2")
    if K > d + 1:
        raise DimensionError(f"a {K}-vertex regular simplex does not fit in R^{d} (need K <= d + 1)")
    V = np.zeros((K, d))
    if K == 2:
        V[0, 0], V[1, 0] = 1.0, -1.0
    elif K == 3:
        free = 2 if d >= 3 else 1
        h = math.sqrt(3.0) / 2.0
        V[0, 0] = 1.0
        V[1, 0], V[1, free] = -0.5, h
        V[2, 0], V[2, free] = -0.5, -h
    else:
        centered = np.eye(K) - 1.0 / K
        # orthonormal basis of the sum-zero subspace, deterministic via QR
        q, _ = np.linalg.qr(centered[:, : K - 1])
        coords = centered @ q
        coords /= np.linalg.norm(coords, axis=1, keepdims=True)
        V[:, : K - 1] = coords
    return SimplexFrame(dim=d, vertices=_frozen(V), pairwise_dot=-1.0 / (K - 1))


def rotate_in_plane(v, i: int, j: int, theta: float) -> np.ndarray:
    """Rotate ``v`` by ``theta`` in the (i, j) coordinate plane.

    Uses the block ``[[cos, -sin], [sin, cos]]`` on coordinates (i, j), so
    e_i maps to ``cos(theta) e_i + sin(theta) e_j``.  ``v`` may be a single
    vector or an ``(n, d)`` stack.
    """
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if i == j:
        raise DomainError("rotation plane needs two distinct axes")
    if not (0 <= i < d and 0 <= j < d):
        raise DimensionError(f"axes ({i}, {j}) out of range for dimension {d}")
    c, s = math.cos(theta), math.sin(theta)
    out = v.copy()
    out[..., i] = c * v[..., i] - s * v[..., j]
    out[..., j] = s * v[..., i] + c * v[..., j]
    return out


def _class_major_labels(K, per_class):
    return np.repeat(np.arange(K), per_class)


def make_collapsed(K: int, d: int, n_y: int) -> EmbeddingConfig:
    """Every point of class ``y`` sits on simplex vertex ``v_y``."""
    if n_y < 1:
        raise DomainError("n_y must be at least 1")
    frame = regular_simplex(K, d)
    labels = _class_major_labels(K, n_y)
    return EmbeddingConfig(frame.vertices[labels], labels, num_classes=K)


def make_mu_theta(K: int, d: int, theta: float, n_per_atom: int) -> EmbeddingConfig:
    """Two-atom-per-class configuration.

    K=2: class ``y`` puts ``n_per_atom`` points on each of R_theta v_y and
    R_{-theta} v_y (rotation in the (0, 1) plane), so its spread is
    ``sin(theta)``.  K=3: class ``y`` mixes v_y with R_theta v_y, the
    rotation acting on (0, 1) while the simplex occupies the (0, 2) plane.
    Subclass ``2*y + a`` marks atom ``a`` of class ``y``.
    """
    if n_per_atom < 1:
        raise DomainError("n_per_atom must be at least 1")
    if K == 2:
        if not (0.0 < theta <= math.pi / 2):
            raise DomainError("theta must lie in (0, pi/2] for K=2")
        frame = regular_simplex(2, d)
        atoms = []
        for v in frame.vertices:
            atoms.append(rotate_in_plane(v, 0, 1, theta))
            atoms.append(rotate_in_plane(v, 0, 1, -theta))
    elif K == 3:
        if d < 3:
            raise DimensionError("K=3 mu_theta needs d >= 3")
        if not (0.0 <= theta <= math.pi / 2):
            raise DomainError("theta must lie in [0, pi/2]")
        frame = regular_simplex(3, d)
        atoms = []
        for v in frame.vertices:
            atoms.append(v.copy())
            atoms.append(rotate_in_plane(v, 0, 1, theta))
    else:
        raise DomainError("mu_theta is only defined for K in {2, 3}")
    atoms = np.asarray(atoms)
    sub = np.repeat(np.arange(2 * K), n_per_atom)
    pts = atoms[sub]
    # exact unit norm after the trig round-off
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return EmbeddingConfig(pts, sub // 2, sub, num_classes=K)


def make_uniform(K: int, d: int, n_y: int, seed: int) -> EmbeddingConfig:
    """``n_y`` i.i.d. uniform points per class (normalized standard normals)."""
    if n_y < 1:
        raise DomainError("n_y must be at least 1")
    if K < 1 or d < 2:
        raise DimensionError("need K >= 1 and d >= 2")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((K * n_y, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return EmbeddingConfig(g, _class_major_labels(K, n_y), num_classes=K)


def random_rotation(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random orthogonal matrix."""
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


# --- plain-text serialization -------------------------------------------


def format_config(config: EmbeddingConfig) -> str:
    """``d K n`` header, then ``class subclass x_0 ... x_{d-1}`` per point.

    Missing subclass labels are written as ``-1``.
    """
    buf = io.StringIO()
    buf.write(f"{config.dim} {config.num_classes} {config.n}\n")
    sub = config.subclass_labels
    for idx in range(config.n):
        z = -1 if sub is None else int(sub[idx])
        coords = " ".join(format(float(x), ".17g") for x in config.points[idx])
        buf.write(f"{int(config.class_labels[idx])} {z} {coords}\n")
    return buf.getvalue()


def parse_config(text: str) -> EmbeddingConfig:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise LabelError("empty configuration text")
    d, K, n = (int(t) for t in lines[0].split())
    rows = [ln.split() for ln in lines[1 : n + 1]]
    if len(rows) != n or any(len(r) != d + 2 for r in rows):
        raise LabelError("configuration body does not match its header")
    classes = [int(r[0]) for r in rows]
    subs = [int(r[1]) for r in rows]
    pts = np.array([[float(t) for t in r[2:]] for r in rows]).reshape(n, d)
    sub = None if all(z == -1 for z in subs) else subs
    return EmbeddingConfig(pts, classes, sub, num_classes=K)


def write_config(config: EmbeddingConfig, path) -> None:
    Path(path).write_text(format_config(config), newline="\n")


def read_config(path) -> EmbeddingConfig:
    return parse_config(Path(path).read_text())
