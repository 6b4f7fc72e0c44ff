"""Coarse-to-fine evaluation, Lipschitz pair sampling, serialization and the toy experiment."""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from spreadlab.errors import DimensionError, InsufficientDataError, LabelError
from spreadlab.losses import LossWeights
from spreadlab.metrics import (
    TransferReport,
    class_spread,
    estimate_lipschitz,
    select_augmentation_pairs,
    subclass_recovery,
    subclass_sigma,
    transfer_report,
)
from spreadlab.sphere import EmbeddingConfig
from spreadlab.toy.autoencoder import AutoencoderParams, AutoencoderUnit, compose_thanos, train_class_autoencoder
from spreadlab.toy.data import SubclassSpec, ToyDataset, augment, gen_subclass_data, standard_spec
from spreadlab.toy.encoder import EncoderParams, embed, train_encoder
from spreadlab.toy.mlp import mlp_forward

EmbedFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def coarse_to_fine_eval(embed_fn: EmbedFn, train: ToyDataset, evaluation: ToyDataset, gamma: float) -> TransferReport:
    """Fit mean classifiers on ``train`` embeddings, score subclasses on ``evaluation``.

    ``embed_fn(inputs, class_labels)`` receives coarse labels so that
    class-routed embeddings can use them.
    """
    for name, ds in (("labeled", train), ("evaluation", evaluation)):
        if ds.n == 0:
            raise InsufficientDataError(f"{name} split is empty")
    z_train = embed_fn(train.inputs, train.class_labels)
    z_eval = embed_fn(evaluation.inputs, evaluation.class_labels)
    return transfer_report(
        z_train, train.class_labels, train.subclass_labels,
        z_eval, evaluation.class_labels, evaluation.subclass_labels, gamma,
    )


def encoder_embed_fn(params: EncoderParams) -> EmbedFn:
    return lambda x, _classes: embed(params, x)


def thanos_embed_fn(params: EncoderParams, cae: AutoencoderParams) -> EmbedFn:
    return lambda x, classes: compose_thanos(params, cae, x, classes)


def embedding_config(embeddings, dataset: ToyDataset) -> EmbeddingConfig:
    """Wrap encoder outputs with the dataset's labels for the geometry metrics."""
    return EmbeddingConfig(embeddings, dataset.class_labels, dataset.subclass_labels)


def max_transfer_ratio(config: EmbeddingConfig, cutoff: float = 1e-6) -> float:
    """Largest ``sigma_f(z) / s_f(y)`` over subclasses; ``nan`` if some class is collapsed below ``cutoff``."""
    per_class, _ = class_spread(config)
    sigma = subclass_sigma(config)
    owner = config.subclass_to_class()
    ratios = []
    for z, s in sigma.items():
        spread = per_class[owner[z]]
        if spread <= cutoff:
            return float("nan")
        ratios.append(s / spread)
    return float(max(ratios))


# --- Lipschitz pair samples ----------------------------------------------


def encoder_pairs(params: EncoderParams, x, seed) -> tuple[np.ndarray, np.ndarray]:
    """Distances for anchor ``i`` paired with anchor ``perm[i]`` (a derangement-free shuffle)."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise InsufficientDataError("need at least two anchors")
    rng = np.random.default_rng(seed)
    # a cyclic shift of a random order never pairs a point with itself
    order = rng.permutation(x.shape[0])
    partner = np.empty_like(order)
    partner[order] = np.roll(order, 1)
    z = embed(params, x)
    return np.linalg.norm(x - x[partner], axis=1), np.linalg.norm(z - z[partner], axis=1)


def augmentation_pairs(params: EncoderParams, x, epsilon: float, n_aug: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """``(anchors, n_aug)`` input and embedding distances between anchors and their augmentations."""
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    z = embed(params, x)
    d_in = np.empty((x.shape[0], n_aug))
    d_out = np.empty((x.shape[0], n_aug))
    for a in range(n_aug):
        xa = augment(x, epsilon, rng)
        d_in[:, a] = np.linalg.norm(xa - x, axis=1)
        d_out[:, a] = np.linalg.norm(embed(params, xa) - z, axis=1)
    return d_in, d_out


def decoder_reverse_pairs(cae: AutoencoderParams, dataset: ToyDataset, seed) -> tuple[np.ndarray, np.ndarray]:
    """Within-class pairs: input is reconstruction distance, output is bottleneck distance."""
    rng = np.random.default_rng(seed)
    d_in, d_out = [], []
    for y in np.unique(dataset.class_labels):
        x = dataset.inputs[dataset.class_labels == y]
        if x.shape[0] < 2:
            continue
        unit = cae.unit_for(int(y))
        code = unit.encode(x)
        rec = unit.reconstruct(x)
        partner = np.roll(rng.permutation(x.shape[0]), 1)
        order = np.argsort(np.roll(partner, -1))
        d_in.append(np.linalg.norm(rec - rec[partner[order]], axis=1))
        d_out.append(np.linalg.norm(code - code[partner[order]], axis=1))
    if not d_in:
        raise InsufficientDataError("no class has two points")
    return np.concatenate(d_in), np.concatenate(d_out)


def lipschitz_estimates(params, cae, dataset: ToyDataset, epsilon: float, n_aug: int = 10, seed: int = 0, cutoff: float = 1e-6):
    """K_L, K_aug (on the same anchors) and K_g estimates."""
    x = dataset.inputs
    k_l = estimate_lipschitz("encoder", *encoder_pairs(params, x, seed), cutoff=cutoff)
    sel = select_augmentation_pairs(*augmentation_pairs(params, x, epsilon, n_aug, seed + 1), cutoff=cutoff)
    k_aug = estimate_lipschitz("augmentation", *sel, cutoff=cutoff)
    k_g = estimate_lipschitz("decoder-reverse", *decoder_reverse_pairs(cae, dataset, seed + 2), cutoff=cutoff)
    return {"encoder": k_l, "augmentation": k_aug, "decoder-reverse": k_g}


# --- plain-text serialization ----------------------------------------------


def _fmt(values) -> str:
    return " ".join(format(float(v), ".17g") for v in np.ravel(values))


def _format_layers(buf, weights, biases):
    """``layer r c`` header, ``r`` weight rows, then one bias row of length ``c``."""
    for W, b in zip(weights, biases):
        r, c = W.shape
        buf.write(f"layer {r} {c}\n")
        for row in W:
            buf.write(_fmt(row) + "\n")
        buf.write(_fmt(b) + "\n")


def _parse_layers(lines, pos, count):
    weights, biases = [], []
    for _ in range(count):
        head = lines[pos].split()
        if len(head) != 3 or head[0] != "layer":
            raise LabelError(f"expected 'layer r c' at line {pos + 1}")
        r, c = int(head[1]), int(head[2])
        W = np.array([[float(t) for t in lines[pos + 1 + k].split()] for k in range(r)])
        b = np.array([float(t) for t in lines[pos + 1 + r].split()])
        if W.shape != (r, c) or b.shape != (c,):
            raise DimensionError(f"layer block at line {pos + 1} does not match its header")
        weights.append(W)
        biases.append(b)
        pos += r + 2
    return weights, biases, pos


def _content_lines(text):
    return [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]


def format_encoder(params: EncoderParams) -> str:
    buf = io.StringIO()
    buf.write(f"encoder {len(params.weights)}\n")
    _format_layers(buf, params.weights, params.biases)
    return buf.getvalue()


def parse_encoder(text: str) -> EncoderParams:
    lines = _content_lines(text)
    head = lines[0].split()
    if head[0] != "encoder":
        raise LabelError("not an encoder parameter block")
    W, b, _ = _parse_layers(lines, 1, int(head[1]))
    return EncoderParams(W, b)


def format_autoencoder(cae: AutoencoderParams) -> str:
    buf = io.StringIO()
    kind = "generic" if cae.generic else "class"
    buf.write(f"autoencoder {kind} {len(cae.units)}\n")
    for k, unit in enumerate(cae.units):
        buf.write(f"unit {k} {len(unit.enc_W)} {len(unit.dec_W)}\n")
        buf.write(_fmt(unit.center) + "\n")
        _format_layers(buf, unit.enc_W, unit.enc_b)
        _format_layers(buf, unit.dec_W, unit.dec_b)
    return buf.getvalue()


def parse_autoencoder(text: str) -> AutoencoderParams:
    lines = _content_lines(text)
    head = lines[0].split()
    if head[0] != "autoencoder":
        raise LabelError("not an autoencoder parameter block")
    units, pos = [], 1
    for _ in range(int(head[2])):
        _, _, n_enc, n_dec = lines[pos].split()
        center = np.array([float(t) for t in lines[pos + 1].split()])
        eW, eb, pos = _parse_layers(lines, pos + 2, int(n_enc))
        dW, db, pos = _parse_layers(lines, pos, int(n_dec))
        units.append(AutoencoderUnit(center, eW, eb, dW, db))
    return AutoencoderParams(units, generic=head[1] == "generic")


def format_dataset(dataset: ToyDataset) -> str:
    """Same layout as embedding configurations: ``p K n`` then ``class subclass x...``."""
    buf = io.StringIO()
    K = dataset.spec.K
    buf.write(f"{dataset.inputs.shape[1]} {K} {dataset.n}\n")
    for x, y, z in zip(dataset.inputs, dataset.class_labels, dataset.subclass_labels):
        buf.write(f"{int(y)} {int(z)} {_fmt(x)}\n")
    return buf.getvalue()


def parse_dataset(text: str, spec: SubclassSpec, seed: int = -1) -> ToyDataset:
    lines = _content_lines(text)
    p, _, n = (int(t) for t in lines[0].split())
    rows = [ln.split() for ln in lines[1:n + 1]]
    if len(rows) != n or any(len(r) != p + 2 for r in rows):
        raise LabelError("dataset body does not match its header")
    y = np.array([int(r[0]) for r in rows], dtype=np.int64)
    z = np.array([int(r[1]) for r in rows], dtype=np.int64)
    x = np.array([[float(t) for t in r[2:]] for r in rows]).reshape(n, p)
    return ToyDataset(x, y, z, spec, seed)


def write_text(path, text: str) -> None:
    Path(path).write_text(text, newline="\n")


# --- the toy experiment -------------------------------------------------------


@dataclass(frozen=True)
class ToySettings:
    n: int = 2000
    train_frac: float = 0.5
    input_dim: int = 8
    alpha: float = 0.75
    tau: float = 0.5
    epsilon: float = 1.0
    epochs: int = 60
    batch_size: int = 64
    lr: float = 0.5
    ae_bottleneck: int = 2
    ae_epochs: int = 60
    ae_lr: float = 0.02
    gamma: float = 1.1


TOY_COLUMNS = (
    "seed", "acc_supcon", "acc_spread", "acc_thanos", "acc_thanos_generic",
    "spread_supcon", "spread_spread", "ratio_supcon", "ratio_spread", "ratio_spread_eps0",
    "f1_supcon", "f1_spread", "f1_spread_eps0", "K_L", "K_aug", "K_g",
)


def run_toy_seed(seed: int, settings: ToySettings = ToySettings()) -> dict:
    """Train every model of the toy comparison for one seed and collect the metrics."""
    s = settings
    data = gen_subclass_data(standard_spec(s.input_dim), s.n, seed)
    train, evaluation = data.split(s.train_frac, seed + 1)
    weights = LossWeights(s.alpha, s.tau)
    common = dict(epochs=s.epochs, batch_size=s.batch_size, lr=s.lr, seed=seed)
    enc_sup, _ = train_encoder(train, "supcon", LossWeights(0.0, s.tau), **common)
    enc_spr, _ = train_encoder(train, "spread", weights, epsilon=s.epsilon, **common)
    enc_eps0, _ = train_encoder(train, "spread", weights, epsilon=0.0, **common)
    ae = dict(bottleneck=s.ae_bottleneck, epochs=s.ae_epochs, lr=s.ae_lr, seed=seed)
    cae, _ = train_class_autoencoder(train, **ae)
    gae, _ = train_class_autoencoder(train, generic=True, **ae)

    row = {"seed": seed}
    row["acc_supcon"] = coarse_to_fine_eval(encoder_embed_fn(enc_sup), train, evaluation, s.gamma).accuracy
    row["acc_spread"] = coarse_to_fine_eval(encoder_embed_fn(enc_spr), train, evaluation, s.gamma).accuracy
    row["acc_thanos"] = coarse_to_fine_eval(thanos_embed_fn(enc_spr, cae), train, evaluation, s.gamma).accuracy
    row["acc_thanos_generic"] = coarse_to_fine_eval(thanos_embed_fn(enc_spr, gae), train, evaluation, s.gamma).accuracy
    for tag, enc in (("supcon", enc_sup), ("spread", enc_spr), ("spread_eps0", enc_eps0)):
        cfg = embedding_config(embed(enc, train.inputs), train)
        if tag != "spread_eps0":
            row[f"spread_{tag}"] = class_spread(cfg)[1]
        row[f"ratio_{tag}"] = max_transfer_ratio(cfg)
        rec = subclass_recovery(cfg.points, train.class_labels, train.subclass_labels, k=2, seed=seed)
        row[f"f1_{tag}"] = rec["overall"]
    lips = lipschitz_estimates(enc_spr, cae, train, s.epsilon, seed=seed)
    row["K_L"] = lips["encoder"].constant
    row["K_aug"] = lips["augmentation"].constant
    row["K_g"] = lips["decoder-reverse"].constant
    return {k: row[k] for k in TOY_COLUMNS}
