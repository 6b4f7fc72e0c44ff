"""Seeded experiment runner that writes CSV data and a JSON run manifest.

Usage: ``spreadlab <subcommand> [--config PATH] [--out DIR] [--seed N] [--serial] [--key value ...]``.
Parameters resolve as defaults, then the config file (flat ``key = value``
lines), then command-line flags.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import math
import platform
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy

import spreadlab
from spreadlab import closed_form
from spreadlab.errors import SpreadLabError, WindowError
from spreadlab.losses import AugmentationMap, LossWeights, asymptotic_empirical, spread_batch
from spreadlab.metrics import (
    class_spread,
    permutation_gap,
    permute_pairs,
    select_augmentation_pairs,
    subclass_recovery,
)
from spreadlab.sphere import EmbeddingConfig, make_mu_theta, make_uniform, write_config
from spreadlab.sphere_opt import REFERENCE_ALPHAS, SWEEP_COLUMNS, OptProblem, alpha_sweep, optimize_config
from spreadlab.toy import pipeline
from spreadlab.toy.autoencoder import train_class_autoencoder
from spreadlab.toy.data import gen_subclass_data, standard_spec
from spreadlab.toy.encoder import embed, train_encoder


class UsageError(Exception):
    pass


def _floats(text):
    return tuple(float(t) for t in str(text).split(",") if t.strip())


def _ints(text):
    return tuple(int(t) for t in str(text).split(",") if t.strip())


@dataclass(frozen=True)
class Param:
    kind: object
    default: object
    help: str


_TOY = {
    "seeds": Param(int, 5, "number of seeds, starting at --seed"),
    "n": Param(int, 2000, "dataset size"),
    "input_dim": Param(int, 8, "input dimension of the synthetic data"),
    "alpha": Param(float, 0.75, "class-conditional weight for L_spread"),
    "tau": Param(float, 0.5, "temperature"),
    "epsilon": Param(float, 1.0, "augmentation radius"),
    "epochs": Param(int, 60, "encoder epochs"),
    "batch_size": Param(int, 64, "encoder batch size"),
    "lr": Param(float, 0.5, "encoder learning rate"),
    "ae_bottleneck": Param(int, 2, "autoencoder bottleneck"),
    "ae_epochs": Param(int, 60, "autoencoder epochs"),
    "ae_lr": Param(float, 0.02, "autoencoder learning rate"),
    "gamma": Param(float, 1.1, "margin ratio for the transfer report"),
}

SUBCOMMANDS = {
    "closed-forms": {
        "alphas": Param(_floats, (0.7,), "comma-separated alpha values"),
        "taus": Param(_floats, (0.5,), "comma-separated temperatures"),
        "dims": Param(_ints, (2,), "comma-separated sphere dimensions d (for the uniform loss and c)"),
    },
    "sweep-alpha": {
        "alphas": Param(_floats, REFERENCE_ALPHAS, "comma-separated alpha grid"),
        "tau": Param(float, 0.5, "temperature"),
        "K": Param(int, 2, "number of classes"),
        "d": Param(int, 2, "ambient dimension"),
        "n_y": Param(int, 8, "points per class"),
        "restarts": Param(int, 5, "restarts per cell"),
        "max_iters": Param(int, 5000, "iteration cap per restart"),
    },
    "optimize": {
        "alpha": Param(float, 0.7, "class-conditional weight"),
        "tau": Param(float, 0.5, "temperature"),
        "K": Param(int, 2, "number of classes"),
        "d": Param(int, 2, "ambient dimension"),
        "n_y": Param(int, 8, "points per class"),
        "restarts": Param(int, 5, "restarts"),
        "max_iters": Param(int, 5000, "iteration cap per restart"),
    },
    "c-window": {
        "taus": Param(_floats, (0.1, 0.25, 0.5, 1.0, 2.0), "comma-separated temperatures"),
        "d_min": Param(int, 2, "smallest dimension"),
        "d_max": Param(int, 128, "largest dimension"),
    },
    "k3-check": {
        "alpha": Param(float, 0.7, "class-conditional weight"),
        "tau": Param(float, 0.5, "temperature"),
        "d": Param(int, 3, "ambient dimension (>= 3)"),
        "thetas": Param(int, 21, "number of theta grid points on [0, pi/2]"),
        "n_per_atom": Param(int, 2, "points per atom"),
    },
    "perm-test": {
        "alpha": Param(float, 0.7, "class-conditional weight"),
        "tau": Param(float, 0.5, "temperature"),
        "K": Param(int, 2, "number of classes"),
        "d": Param(int, 8, "ambient dimension"),
        "n_y": Param(int, 6, "points per class (anchors and augmentations)"),
        "configs": Param(int, 10, "random configurations"),
        "trials": Param(int, 100, "permutations per configuration"),
    },
    "toy-train": dict(_TOY),
    "c2f-eval": dict(_TOY),
    "lipschitz": {**_TOY, "n_aug": Param(int, 10, "augmentations per anchor")},
    "recover-subclass": {**_TOY, "k": Param(int, 2, "clusters per class")},
}


# --- formatting ---------------------------------------------------------


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return format(v, ".17g")
    return str(v)


def render_csv(columns, rows, manifest_hash: str) -> str:
    buf = io.StringIO()
    buf.write(f"# manifest {manifest_hash}\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(format_value(row[c]) for c in columns) + "\n")
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def manifest_hash(subcommand: str, params: dict, seed: int) -> str:
    payload = json.dumps(
        {"subcommand": subcommand, "params": {k: _jsonable(v) for k, v in params.items()}, "seed": seed,
         "version": spreadlab.__version__},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


# --- config resolution ----------------------------------------------------


def read_config_file(path) -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (t.strip() for t in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_params(subcommand: str, file_values: dict, flag_values: dict) -> dict:
    spec = SUBCOMMANDS[subcommand]
    params = {k: p.default for k, p in spec.items()}
    for source in (file_values, flag_values):
        for key, raw in source.items():
            if key not in spec:
                raise UsageError(f"unknown parameter '{key}' for {subcommand}")
            try:
                params[key] = spec[key].kind(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for '{key}': {raw}") from exc
    return params


# --- experiments ------------------------------------------------------------


def _maybe_parallel(fn, args, serial):
    if serial or len(args) < 2:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor() as pool:
        return list(pool.map(fn, *zip(*args)))


def _nan_on_window(fn, *args):
    try:
        return fn(*args)
    except WindowError:
        return math.nan


def cmd_closed_forms(p, seed, serial):
    rows = []
    for tau in p["taus"]:
        for alpha in p["alphas"]:
            w = LossWeights(alpha, tau)
            for d in p["dims"]:
                rows.append({
                    "alpha": alpha, "tau": tau, "d": d,
                    "theta_star": _nan_on_window(closed_form.theta_star, w),
                    "spread_star": _nan_on_window(closed_form.spread_star, w),
                    "loss_mu_theta_star": _nan_on_window(closed_form.loss_mu_theta_star, w),
                    "loss_collapsed": closed_form.loss_collapsed(w, 2),
                    "loss_uniform": closed_form.loss_uniform(w, d),
                    "c_tau_d": _nan_on_window(closed_form.c_tau_d, tau, d),
                })
    cols = ("alpha", "tau", "d", "theta_star", "spread_star", "loss_mu_theta_star", "loss_collapsed", "loss_uniform", "c_tau_d")
    return {"closed_forms.csv": (cols, rows)}, {}


def _problem(p, alpha, seed):
    return OptProblem(p["K"], p["d"], p["n_y"], LossWeights(alpha, p["tau"]),
                      restarts=p["restarts"], max_iters=p["max_iters"], seed=seed)


def cmd_sweep_alpha(p, seed, serial):
    rows = alpha_sweep(_problem(p, p["alphas"][0], seed), p["alphas"], parallel=not serial)
    failures = [{"alpha": r["alpha"], "error": r["error"]} for r in rows if r.get("failed")]
    return {"sweep_alpha.csv": (SWEEP_COLUMNS, rows)}, {"failed_cells": failures}


def cmd_optimize(p, seed, serial):
    res = optimize_config(_problem(p, p["alpha"], seed), parallel=not serial)
    _, spread = class_spread(res.best_config)
    rows = [{"seed": s, "loss": loss, "best": int(s == res.best_seed), "spread": spread if s == res.best_seed else math.nan}
            for s, loss in res.restarts]
    trace = [{"iteration": i, "loss": v} for i, v in enumerate(res.trace)]
    extra = {"best_config.txt": res.best_config}
    return {"optimize.csv": (("seed", "loss", "best", "spread"), rows),
            "optimize_trace.csv": (("iteration", "loss"), trace)}, extra


def cmd_c_window(p, seed, serial):
    rows = []
    for tau in p["taus"]:
        for d in range(p["d_min"], p["d_max"] + 1):
            log_w = closed_form.log_wiener_constant(d, tau)
            rows.append({"tau": tau, "d": d, "log_W": log_w, "W": math.exp(log_w),
                         "c_tau_d": _nan_on_window(closed_form.c_tau_d, tau, d),
                         "alpha_upper_mu_theta": closed_form.alpha_upper_mu_theta(tau)})
    return {"c_window.csv": (("tau", "d", "log_W", "W", "c_tau_d", "alpha_upper_mu_theta"), rows)}, {}


def cmd_k3_check(p, seed, serial):
    w = LossWeights(p["alpha"], p["tau"])
    rows = []
    for theta in np.linspace(0.0, math.pi / 2, p["thetas"]):
        closed = closed_form.k3_loss_mu_theta(float(theta), w)
        emp = asymptotic_empirical(make_mu_theta(3, p["d"], float(theta), p["n_per_atom"]), w)
        rows.append({"theta": float(theta), "closed_form": closed, "empirical": emp, "abs_diff": abs(closed - emp)})
    rows_ref = [{"name": k, "value": v} for k, v in (
        ("loss_collapsed_K3", closed_form.loss_collapsed(w, 3)),
        ("loss_uniform", closed_form.loss_uniform(w, p["d"])),
    )]
    return {"k3_check.csv": (("theta", "closed_form", "empirical", "abs_diff"), rows),
            "k3_reference.csv": (("name", "value"), rows_ref)}, {}


def random_pair_config(K, d, n_y, seed):
    """Uniform config with the first half of each class as anchors and the second half as their augmentations."""
    if n_y % 2:
        raise UsageError("n_y must be even to split into anchor/augmentation pairs")
    base = make_uniform(K, d, n_y, seed)
    anchors, augs = [], []
    for y in range(K):
        idx = np.flatnonzero(base.class_labels == y)
        half = n_y // 2
        anchors.extend(idx[:half])
        augs.extend(idx[half:])
    return base, AugmentationMap(np.array(anchors), np.array(augs))


def cmd_perm_test(p, seed, serial):
    w = LossWeights(p["alpha"], p["tau"])
    rows = []
    for c in range(p["configs"]):
        cfg, amap = random_pair_config(p["K"], p["d"], p["n_y"], seed + c)
        gaps = permutation_gap(cfg, amap, w, p["trials"], seed + c)
        # swap the first anchors of classes 0 and 1: not class-fixing
        perm = amap.anchors.copy()
        i = int(np.flatnonzero(cfg.class_labels[amap.anchors] == 0)[0])
        j = int(np.flatnonzero(cfg.class_labels[amap.anchors] == 1)[0])
        perm[[i, j]] = perm[[j, i]]
        swapped = permute_pairs(cfg, amap, perm)
        cross = abs(spread_batch(swapped, amap, w) - spread_batch(cfg, amap, w))
        rows.append({"config": c, "seed": seed + c, "gap_spread_batch": gaps["spread_batch"],
                     "gap_asymptotic": gaps["asymptotic"], "cross_class_gap": cross})
    return {"perm_test.csv": (("config", "seed", "gap_spread_batch", "gap_asymptotic", "cross_class_gap"), rows)}, {}


def _settings(p) -> pipeline.ToySettings:
    fields = pipeline.ToySettings.__dataclass_fields__
    return pipeline.ToySettings(**{k: v for k, v in p.items() if k in fields})


def _seeds(p, seed):
    return list(range(seed, seed + p["seeds"]))


def _medians(rows, columns):
    return {c: float(np.median([r[c] for r in rows])) for c in columns}


def cmd_toy_train(p, seed, serial):
    s = _settings(p)
    rows = _maybe_parallel(pipeline.run_toy_seed, [(k, s) for k in _seeds(p, seed)], serial)
    rows.sort(key=lambda r: r["seed"])
    med = _medians(rows, pipeline.TOY_COLUMNS[1:])
    summary = [{"metric": k, "median": v} for k, v in med.items()]
    return {"toy_train.csv": (pipeline.TOY_COLUMNS, rows),
            "toy_summary.csv": (("metric", "median"), summary)}, {}


def _toy_models(seed, s: pipeline.ToySettings):
    data = gen_subclass_data(standard_spec(s.input_dim), s.n, seed)
    train, evaluation = data.split(s.train_frac, seed + 1)
    common = dict(epochs=s.epochs, batch_size=s.batch_size, lr=s.lr, seed=seed)
    sup, _ = train_encoder(train, "supcon", LossWeights(0.0, s.tau), **common)
    spr, _ = train_encoder(train, "spread", LossWeights(s.alpha, s.tau), epsilon=s.epsilon, **common)
    ae = dict(bottleneck=s.ae_bottleneck, epochs=s.ae_epochs, lr=s.ae_lr, seed=seed)
    cae, _ = train_class_autoencoder(train, **ae)
    gae, _ = train_class_autoencoder(train, generic=True, **ae)
    return train, evaluation, sup, spr, cae, gae


def _c2f_seed(seed, s):
    train, evaluation, sup, spr, cae, gae = _toy_models(seed, s)
    models = {
        "supcon": pipeline.encoder_embed_fn(sup),
        "spread": pipeline.encoder_embed_fn(spr),
        "thanos": pipeline.thanos_embed_fn(spr, cae),
        "thanos_generic": pipeline.thanos_embed_fn(spr, gae),
    }
    rows = []
    for name, fn in models.items():
        rep = pipeline.coarse_to_fine_eval(fn, train, evaluation, s.gamma)
        for z in sorted(rep.margin_errors):
            rows.append({"seed": seed, "model": name, "subclass": z, "count": rep.counts[z],
                         "margin_error": rep.margin_errors[z], "accuracy": rep.accuracy})
    return rows


def cmd_c2f_eval(p, seed, serial):
    s = _settings(p)
    parts = _maybe_parallel(_c2f_seed, [(k, s) for k in _seeds(p, seed)], serial)
    rows = [r for part in parts for r in part]
    return {"c2f_eval.csv": (("seed", "model", "subclass", "count", "margin_error", "accuracy"), rows)}, {}


def _lipschitz_seed(seed, s, n_aug):
    train, _, _, spr, cae, _ = _toy_models(seed, s)
    x = train.inputs
    enc_in, enc_out = pipeline.encoder_pairs(spr, x, seed)
    aug_in, aug_out = select_augmentation_pairs(*pipeline.augmentation_pairs(spr, x, s.epsilon, n_aug, seed + 1))
    dec_in, dec_out = pipeline.decoder_reverse_pairs(cae, train, seed + 2)
    scatter = []
    for mode, a, b in (("encoder", enc_in, enc_out), ("augmentation", aug_in, aug_out), ("decoder-reverse", dec_in, dec_out)):
        scatter.extend({"seed": seed, "mode": mode, "input_distance": float(u), "output_distance": float(v)} for u, v in zip(a, b))
    est = pipeline.lipschitz_estimates(spr, cae, train, s.epsilon, n_aug=n_aug, seed=seed)
    summary = [{"seed": seed, "mode": m, "constant": e.constant, "pairs": e.pairs, "cutoff": e.cutoff} for m, e in est.items()]
    return summary, scatter


def cmd_lipschitz(p, seed, serial):
    s = _settings(p)
    parts = _maybe_parallel(_lipschitz_seed, [(k, s, p["n_aug"]) for k in _seeds(p, seed)], serial)
    summary = [r for part in parts for r in part[0]]
    scatter = [r for part in parts for r in part[1]]
    return {"lipschitz.csv": (("seed", "mode", "constant", "pairs", "cutoff"), summary),
            "lipschitz_scatter.csv": (("seed", "mode", "input_distance", "output_distance"), scatter)}, {}


def _recover_seed(seed, s, k):
    train, _, sup, spr, _, _ = _toy_models(seed, s)
    eps0, _ = train_encoder(train, "spread", LossWeights(s.alpha, s.tau), epochs=s.epochs,
                            batch_size=s.batch_size, lr=s.lr, seed=seed, epsilon=0.0)
    rows = []
    for name, enc in (("supcon", sup), ("spread", spr), ("spread_eps0", eps0)):
        rec = subclass_recovery(embed(enc, train.inputs), train.class_labels, train.subclass_labels, k, seed=seed)
        for y, f1 in sorted(rec["per_class"].items()):
            rows.append({"seed": seed, "model": name, "class": y, "f1": f1, "overall": rec["overall"]})
    return rows


def cmd_recover_subclass(p, seed, serial):
    s = _settings(p)
    parts = _maybe_parallel(_recover_seed, [(k, s, p["k"]) for k in _seeds(p, seed)], serial)
    rows = [r for part in parts for r in part]
    return {"recover_subclass.csv": (("seed", "model", "class", "f1", "overall"), rows)}, {}


HANDLERS = {
    "closed-forms": cmd_closed_forms,
    "sweep-alpha": cmd_sweep_alpha,
    "optimize": cmd_optimize,
    "c-window": cmd_c_window,
    "k3-check": cmd_k3_check,
    "perm-test": cmd_perm_test,
    "toy-train": cmd_toy_train,
    "c2f-eval": cmd_c2f_eval,
    "lipschitz": cmd_lipschitz,
    "recover-subclass": cmd_recover_subclass,
}


# --- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(_error_line("usage", message), file=sys.stderr)
        sys.exit(2)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spreadlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name, spec in SUBCOMMANDS.items():
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", help="flat key = value parameter file")
        sp.add_argument("--out", default=".", help="output directory (default: current directory)")
        sp.add_argument("--seed", type=int, default=0, help="base seed (default: 0)")
        sp.add_argument("--serial", action="store_true", help="single-process, byte-reproducible execution")
        for key, prm in spec.items():
            default = ",".join(map(str, prm.default)) if isinstance(prm.default, tuple) else prm.default
            sp.add_argument(f"--{key.replace('_', '-')}", dest=f"param_{key}", default=None,
                            help=f"{prm.help} (default: {default})")
    return parser


def _error_line(kind: str, message: str) -> str:
    return "error: " + json.dumps({"type": kind, "message": message}, sort_keys=True)


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        file_values = read_config_file(args.config) if args.config else {}
        flags = {k[len("param_"):]: v for k, v in vars(args).items() if k.startswith("param_") and v is not None}
        params = resolve_params(args.subcommand, file_values, flags)
        digest = manifest_hash(args.subcommand, params, args.seed)
        tables, extra = HANDLERS[args.subcommand](params, args.seed, args.serial)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        outputs = {}
        for fname, (columns, rows) in tables.items():
            text = render_csv(columns, rows, digest)
            (out / fname).write_text(text, newline="\n")
            outputs[fname] = hashlib.sha256(text.encode()).hexdigest()
        notes = {}
        for fname, obj in extra.items():
            if isinstance(obj, EmbeddingConfig):
                write_config(obj, out / fname)
                outputs[fname] = hashlib.sha256((out / fname).read_bytes()).hexdigest()
            else:
                notes[fname] = obj
        manifest = {
            "subcommand": args.subcommand,
            "manifest_hash": digest,
            "seed": args.seed,
            "serial": args.serial,
            "params": {k: _jsonable(v) for k, v in params.items()},
            "versions": {"spreadlab": spreadlab.__version__, "numpy": np.__version__,
                         "scipy": scipy.__version__, "python": platform.python_version()},
            "outputs": outputs,
            "notes": notes,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", newline="\n")
    except UsageError as exc:
        print(_error_line("usage", str(exc)), file=sys.stderr)
        return 2
    except OSError as exc:
        print(_error_line("io", str(exc)), file=sys.stderr)
        return 3
    except SpreadLabError as exc:
        print(_error_line(type(exc).__name__, str(exc)), file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
