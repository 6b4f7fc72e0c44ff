"""Multi-restart projected gradient descent on products of spheres.

Each restart draws a uniform configuration from its own seed, takes
tangent gradient steps of the empirical asymptotic loss, renormalizes,
and backtracks (halving the step) whenever a trial step would raise the
loss.  The lowest final loss wins; ties go to the lowest seed.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from spreadlab import closed_form
from spreadlab.errors import DomainError, NumericalFailure, SpreadLabError, WindowError
from spreadlab.losses import LossWeights, asymptotic_grad, asymptotic_value
from spreadlab.metrics import class_spread
from spreadlab.sphere import EmbeddingConfig, make_uniform


@dataclass(frozen=True)
class OptProblem:
    K: int
    d: int
    n_y: int
    weights: LossWeights
    restarts: int = 5
    max_iters: int = 5000
    step: float = 0.5
    decay: float = 0.5
    growth: float = 1.25
    tol: float = 1e-10
    window: int = 20
    seed: int = 0

    def __post_init__(self):
        if self.K < 2 or self.K * self.n_y < 2:
            raise DomainError("need K >= 2 and K * n_y >= 2")
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")
        if self.step <= 0 or self.tol <= 0:
            raise DomainError("step and tol must be positive")
        if not (0 < self.decay < 1) or self.growth < 1:
            raise DomainError("need 0 < decay < 1 and growth >= 1")

    @property
    def seeds(self) -> list[int]:
        return [self.seed + r for r in range(self.restarts)]


@dataclass
class RestartOutcome:
    seed: int
    loss: float
    iterations: int
    points: np.ndarray = field(repr=False)
    trace: list[float] = field(repr=False)


@dataclass
class SphereOptResult:
    best_config: EmbeddingConfig
    best_loss: float
    best_seed: int
    restarts: list[tuple[int, float]]
    iterations: int
    trace: list[float]


def _run_restart(problem: OptProblem, seed: int) -> RestartOutcome:
    init = make_uniform(problem.K, problem.d, problem.n_y, seed)
    labels = init.class_labels
    u = np.array(init.points)
    w = problem.weights
    loss = asymptotic_value(u, labels, w)
    trace = [loss]
    step = problem.step
    it = 0
    for it in range(1, problem.max_iters + 1):
        g = asymptotic_grad(u, labels, w, tangent=True)
        if not np.all(np.isfinite(g)):
            raise NumericalFailure("non-finite gradient", {"seed": seed, "iteration": it, "loss": loss})
        accepted = False
        while step > 1e-14:
            trial = u - step * g
            trial /= np.linalg.norm(trial, axis=1, keepdims=True)
            new_loss = asymptotic_value(trial, labels, w)
            if not math.isfinite(new_loss):
                raise NumericalFailure("non-finite loss", {"seed": seed, "iteration": it, "step": step})
            if new_loss <= loss:
                accepted = True
                break
            step *= problem.decay
        if not accepted:
            break
        u, loss = trial, new_loss
        trace.append(loss)
        step = min(step * problem.growth, 1e3 * problem.step)
        if len(trace) > problem.window and trace[-1 - problem.window] - loss < problem.tol:
            break
    return RestartOutcome(seed, loss, it, u, trace)


def optimize_config(problem: OptProblem, parallel: bool = False) -> SphereOptResult:
    """Minimize the empirical asymptotic loss; return the best of ``problem.restarts`` runs."""
    seeds = problem.seeds
    if parallel and len(seeds) > 1:
        with ProcessPoolExecutor() as pool:
            outcomes = list(pool.map(_run_restart, [problem] * len(seeds), seeds))
    else:
        outcomes = [_run_restart(problem, s) for s in seeds]
    # min over (loss, seed): lowest seed wins ties
    best = min(outcomes, key=lambda o: (o.loss, o.seed))
    labels = np.repeat(np.arange(problem.K), problem.n_y)
    pts = best.points / np.linalg.norm(best.points, axis=1, keepdims=True)
    return SphereOptResult(
        best_config=EmbeddingConfig(pts, labels, num_classes=problem.K),
        best_loss=best.loss,
        best_seed=best.seed,
        restarts=[(o.seed, o.loss) for o in outcomes],
        iterations=best.iterations,
        trace=best.trace,
    )


SWEEP_COLUMNS = (
    "alpha", "tau", "K", "d", "n_y", "seed", "loss", "spread",
    "loss_collapsed", "loss_uniform", "loss_mu_theta_star",
)

REFERENCE_ALPHAS = (0.5, 0.6, 0.67, 0.69, 0.71, 0.73, 0.75, 0.8, 0.9)


def reference_losses(weights: LossWeights, K: int, d: int) -> dict[str, float]:
    """Closed-form comparison values; ``nan`` where a formula does not apply."""
    out = {"loss_collapsed": closed_form.loss_collapsed(weights, K)}
    out["loss_uniform"] = closed_form.loss_uniform(weights, d)
    out["loss_mu_theta_star"] = math.nan
    if K == 2:
        try:
            out["loss_mu_theta_star"] = closed_form.loss_mu_theta(closed_form.theta_star(weights), weights)
        except WindowError:
            pass
    return out


def _sweep_cell(template: OptProblem, alpha: float, seed: int):
    problem = replace(template, weights=LossWeights(alpha, template.weights.tau), seed=seed)
    row = {"alpha": alpha, "tau": problem.weights.tau, "K": problem.K, "d": problem.d, "n_y": problem.n_y}
    row.update(reference_losses(problem.weights, problem.K, problem.d))
    try:
        res = optimize_config(problem)
    except SpreadLabError as exc:
        row.update(seed=seed, loss=math.nan, spread=math.nan, failed=True, error=str(exc))
        return row
    row.update(seed=res.best_seed, loss=res.best_loss, spread=class_spread(res.best_config)[1], failed=False)
    return row


def alpha_sweep(
    template: OptProblem,
    alphas: Sequence[float],
    seed_stride: Optional[int] = None,
    parallel: bool = False,
) -> list[dict]:
    """One optimization per alpha; failed cells are flagged, not raised.

    Cell ``k`` starts its restarts at ``template.seed + k * seed_stride``.
    The default stride is ``template.restarts``, so no two cells share an
    initialization.
    """
    if not alphas:
        raise DomainError("alphas must be non-empty")
    for a in alphas:
        if not (0.0 <= a <= 1.0):
            raise DomainError(f"alpha {a} outside [0, 1]")
    stride = template.restarts if seed_stride is None else seed_stride
    seeds = [template.seed + k * stride for k in range(len(alphas))]
    if parallel:
        with ProcessPoolExecutor() as pool:
            rows = list(pool.map(_sweep_cell, [template] * len(alphas), alphas, seeds))
    else:
        rows = [_sweep_cell(template, a, s) for a, s in zip(alphas, seeds)]
    return sorted(rows, key=lambda r: (r["alpha"], r["seed"]))
