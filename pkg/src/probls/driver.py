"""Stochastic gradient descent driven by the probabilistic line search.

The outer loop draws minibatches, estimates function and gradient noise from
the within-batch spread, and hands each search direction to a
:class:`~probls.controller.SearchState`. Plain SGD with a fixed or ``1/i``
decaying learning rate is available for baselines.
"""
from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .controller import DEFAULT_BUDGET, NonFiniteEvaluation, NotDescentDirection, begin
from .wolfe import WolfeParams

MODES = ("linesearch", "sgd-fixed", "sgd-decay")

TRACE_COLUMNS = (
    "step", "evals_total", "loss", "df0", "t_accepted", "step_size", "evals",
    "sigma_f", "sigma_df", "p_wolfe", "forced", "fallback",
)


@dataclass(frozen=True)
class BatchStats:
    loss_mean: float
    grad_mean: np.ndarray
    loss_sq_mean: float
    grad_sq_mean: np.ndarray
    m: int


def batch_stats(objective, x, batch_indices):
    """Loss/gradient means and second moments over one minibatch."""
    idx = np.asarray(batch_indices, dtype=int)
    m = idx.size
    if m == 0:
        raise ValueError("empty batch")
    losses, grads = objective.loss_grad(x, idx)
    losses = np.asarray(losses, dtype=float)
    return BatchStats(
        loss_mean=_mean(losses),
        grad_mean=grads.sum(axis=0) / m,
        loss_sq_mean=_mean(losses * losses),
        grad_sq_mean=(grads * grads).sum(axis=0) / m,
        m=m,
    )


def _mean(values):
    try:
        return math.fsum(values) / len(values)
    except (OverflowError, ValueError):
        # inf or nan entries: fsum refuses, plain summation propagates them
        return float(np.sum(values)) / len(values)


def noise_estimates(stats, direction):
    """Variance of the batch loss and of the projected batch gradient along ``direction``."""
    if stats.m < 2:
        raise ValueError("noise estimation needs a batch of at least 2 samples")
    m1 = stats.m - 1
    var_f = max(0.0, (stats.loss_sq_mean - stats.loss_mean**2) / m1)
    per_dim = np.maximum(0.0, stats.grad_sq_mean - stats.grad_mean**2) / m1
    var_df = max(0.0, float(np.square(direction) @ per_dim))
    return var_f, var_df


@dataclass
class RunConfig:
    mode: str = "linesearch"
    alpha0: float = 1.0
    batch_size: int = 10
    num_steps: int | None = 500
    num_epochs: float | None = None
    seed: int = 0
    budget: int = DEFAULT_BUDGET
    wolfe: WolfeParams = field(default_factory=WolfeParams)
    fixed_batch: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.mode == "linesearch" and self.batch_size < 2:
            raise ValueError("the line search needs batch_size >= 2 to estimate noise")
        if self.num_steps is None and self.num_epochs is None:
            raise ValueError("set num_steps or num_epochs")

    def eval_budget(self, n_samples):
        if self.num_epochs is None:
            return None
        return max(1, math.ceil(self.num_epochs * n_samples / self.batch_size))


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)
    x_final: np.ndarray | None = None
    total_evals: int = 0
    diverged: bool = False
    initial_loss: float = math.nan
    wall_times: list = field(default_factory=list)

    def to_csv(self, path=None):
        """Write the trace (wall times excluded, so reruns are byte-identical)."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(row[c]) for c in TRACE_COLUMNS])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def search_rows(self, warmup=0):
        # line-search steps only: baseline and fallback rows carry no df0
        return [r for r in self.rows[warmup:] if not r["fallback"] and math.isfinite(r["df0"])]

    def summary(self, warmup=100):
        out = {
            "steps": len(self.rows),
            "total_evals": self.total_evals,
            "diverged": self.diverged,
            "initial_loss": self.initial_loss,
            "final_batch_loss": self.rows[-1]["loss"] if self.rows else math.nan,
            "wall_time": float(sum(self.wall_times)),
        }
        for suffix, skip in (("", 0), ("_after_warmup", warmup)):
            rows = self.search_rows(skip)
            evals = [r["evals"] for r in rows]
            out["searches" + suffix] = len(rows)
            out["mean_evals_per_search" + suffix] = float(np.mean(evals)) if evals else math.nan
            out["frac_single_eval" + suffix] = float(np.mean([e == 1 for e in evals])) if evals else math.nan
            out["frac_forced" + suffix] = float(np.mean([r["forced"] for r in rows])) if rows else math.nan
        out["warmup_steps"] = warmup
        out["fallback_steps"] = sum(bool(r["fallback"]) for r in self.rows)
        return out


def _fmt(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return repr(v)
    return v


def run(objective, config, x0=None, rng=None):
    """Optimize ``objective`` as configured and return the :class:`RunTrace`."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    x = objective.initial_point() if x0 is None else np.array(x0, dtype=float)
    M, m = objective.n_samples, config.batch_size
    eval_budget = config.eval_budget(M)
    max_steps = config.num_steps if config.num_steps is not None else math.inf
    fixed = rng.integers(0, M, size=m) if config.fixed_batch else None
    trace = RunTrace()

    def draw():
        return fixed if fixed is not None else rng.integers(0, M, size=m)

    def evaluate(point):
        trace.total_evals += 1
        with np.errstate(over="ignore", invalid="ignore"):
            return batch_stats(objective, point, draw())

    def exhausted(step):
        if step >= max_steps:
            return True
        return eval_budget is not None and trace.total_evals >= eval_budget

    stats = evaluate(x)
    trace.initial_loss = stats.loss_mean
    alpha = config.alpha0
    alpha_bounds = (1e-10 * config.alpha0, 1e10 * config.alpha0)
    step = 0
    while not exhausted(step):
        tic = time.perf_counter()
        step += 1
        row = dict(step=step, loss=stats.loss_mean, t_accepted=math.nan, step_size=math.nan,
                   evals=0, sigma_f=math.nan, sigma_df=math.nan, p_wolfe=math.nan,
                   forced=False, fallback=False, df0=math.nan)
        if config.mode != "linesearch":
            rate = config.alpha0 if config.mode == "sgd-fixed" else config.alpha0 / step
            x = x - rate * stats.grad_mean
            row.update(step_size=rate, t_accepted=1.0)
            stats = evaluate(x)
            row["evals"] = 1
        else:
            s = -alpha * stats.grad_mean
            with np.errstate(over="ignore", invalid="ignore"):
                df0 = float(s @ stats.grad_mean)
                var_f, var_df = noise_estimates(stats, s)
            row.update(df0=df0, sigma_f=math.sqrt(var_f), sigma_df=math.sqrt(var_df))
            try:
                search = begin(stats.loss_mean, df0, math.sqrt(var_f), math.sqrt(var_df),
                               config.wolfe, config.budget, alpha0=alpha, alpha_bounds=alpha_bounds)
            except NotDescentDirection:
                x = x + s
                stats = evaluate(x)
                row.update(fallback=True, step_size=alpha, evals=1)
            else:
                node_stats = {}
                try:
                    while True:
                        t = search.proposal
                        node = evaluate(x + t * s)
                        node_stats[t] = node
                        with np.errstate(over="ignore", invalid="ignore"):
                            dy = float(s @ node.grad_mean)
                        outcome = search.step(t, node.loss_mean, dy)
                        if outcome is not None:
                            break
                except NonFiniteEvaluation:
                    trace.diverged = True
                    row.update(evals=search.evals_used)
                    row["evals_total"] = trace.total_evals
                    trace.rows.append(row)
                    trace.wall_times.append(time.perf_counter() - tic)
                    break
                x = x + outcome.t_accepted * s
                stats = node_stats[outcome.t_accepted]
                row.update(t_accepted=outcome.t_accepted, step_size=outcome.t_accepted * alpha,
                           evals=outcome.evals, p_wolfe=outcome.p_wolfe, forced=outcome.forced)
                alpha = outcome.next_alpha0
        row["evals_total"] = trace.total_evals
        trace.rows.append(row)
        trace.wall_times.append(time.perf_counter() - tic)
        if not math.isfinite(stats.loss_mean) or not np.all(np.isfinite(x)):
            trace.diverged = True
            break
    trace.x_final = x
    return trace
