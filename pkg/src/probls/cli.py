"""Command-line harness: single runs, learning-rate sweeps and dataset generation.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from .controller import NonFiniteEvaluation
from .driver import MODES, RunConfig, run
from .gp import DegenerateSurrogateError
from .objectives import DatasetError, ProblemSpec, gen_synth, make_problem, write_csv
from .wolfe import WolfeParams

log = logging.getLogger("probls")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4

AGGREGATE_METRICS = ("final_loss", "test_error", "mean_evals_per_search_after_warmup",
                     "frac_single_eval_after_warmup")


class ConfigError(ValueError):
    pass


class NumericalFailure(ArithmeticError):
    pass


@dataclass
class Experiment:
    problem: ProblemSpec
    run: RunConfig
    modes: tuple
    replications: int = 1
    warmup: int = 100
    out: str = "runs"
    problem_seed_pinned: bool = False


_RUN_KEYS = {"mode", "alpha0", "batch_size", "num_steps", "num_epochs", "seed", "budget",
             "fixed_batch"}
_TOP_KEYS = _RUN_KEYS | {"problem", "wolfe", "modes", "replications", "warmup", "out"}


def parse_config(raw):
    """Validate a config dict and turn it into an :class:`Experiment`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    prob = dict(raw.get("problem", {}))
    prob_fields = {f.name for f in fields(ProblemSpec)}
    bad = set(prob) - prob_fields
    if bad:
        raise ConfigError(f"unknown problem keys: {sorted(bad)}")
    pinned = "seed" in prob
    seed = raw.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
        raise ConfigError(f"seed must be a nonnegative integer, got {seed!r}")
    prob.setdefault("seed", seed)
    try:
        problem = ProblemSpec(**prob)
        wolfe = WolfeParams(**raw.get("wolfe", {}))
        run_cfg = RunConfig(wolfe=wolfe, **{k: raw[k] for k in _RUN_KEYS if k in raw})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    modes = tuple(raw.get("modes", [run_cfg.mode]))
    if not modes or any(m not in MODES for m in modes):
        raise ConfigError(f"modes must be a non-empty subset of {MODES}")
    reps = raw.get("replications", 1)
    if not isinstance(reps, int) or reps < 1:
        raise ConfigError("replications must be an integer >= 1")
    return Experiment(problem, run_cfg, modes, reps, int(raw.get("warmup", 100)),
                      str(raw.get("out", "runs")), pinned)


def load_config(path):
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    return parse_config(raw)


def atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _tag(mode, alpha0, rep):
    return f"{mode}_a{alpha0:g}_r{rep}"


def execute(exp, mode, alpha0, seed, problem=None):
    """One optimizer run; returns ``(trace, summary dict)``."""
    problem = make_problem(exp.problem) if problem is None else problem
    cfg = RunConfig(mode=mode, alpha0=alpha0, batch_size=exp.run.batch_size,
                    num_steps=exp.run.num_steps, num_epochs=exp.run.num_epochs, seed=seed,
                    budget=exp.run.budget, wolfe=exp.run.wolfe, fixed_batch=exp.run.fixed_batch)
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            trace = run(problem.objective, cfg)
            x0 = problem.objective.initial_point()
            initial_loss = problem.objective.full_loss(x0)
            final_loss = problem.objective.full_loss(trace.x_final)
    except (DegenerateSurrogateError, NonFiniteEvaluation, FloatingPointError) as exc:
        raise NumericalFailure(str(exc)) from exc
    summary = trace.summary(exp.warmup)
    summary.update(
        mode=mode, alpha0=alpha0, seed=seed,
        initial_full_loss=initial_loss, final_loss=final_loss,
        test_error=problem.test_error(trace.x_final),
        train_error=problem.train_error(trace.x_final),
    )
    summary["diverged"] = bool(trace.diverged or not math.isfinite(final_loss)
                               or final_loss > 10.0 * initial_loss)
    return trace, summary


def cmd_run(args):
    exp = load_config(args.config)
    mode = args.mode or exp.run.mode
    alpha0 = exp.run.alpha0 if args.alpha0 is None else args.alpha0
    seed = exp.run.seed if args.seed is None else args.seed
    if mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}")
    if not alpha0 > 0:
        raise ConfigError("alpha0 must be positive")
    if seed < 0:
        raise ConfigError("seed must be nonnegative")
    if args.seed is not None and not exp.problem_seed_pinned:
        # the data seed follows the run seed unless the config pins it
        exp.problem = ProblemSpec(**{**exp.problem.__dict__, "seed": seed})
    out = args.out or exp.out
    trace, summary = execute(exp, mode, alpha0, seed)
    tag = _tag(mode, alpha0, 0)
    atomic_write(os.path.join(out, f"trace_{tag}.csv"), trace.to_csv())
    atomic_write(os.path.join(out, f"summary_{tag}.json"), dump_json(summary))
    log.info("%s: final loss %.6g, %s evals", tag, summary["final_loss"], summary["total_evals"])
    if not math.isfinite(summary["final_loss"]):
        raise NumericalFailure("run diverged to a non-finite loss")
    return EXIT_OK


def aggregate(summaries, metrics=AGGREGATE_METRICS):
    """Mean and two standard deviations per ``(alpha0, mode)`` cell, in first-seen order."""
    cells = {}
    for s in summaries:
        cells.setdefault((s["alpha0"], s["mode"]), []).append(s)
    rows = []
    for (alpha0, mode), group in cells.items():
        row = {"alpha0": alpha0, "mode": mode, "replications": len(group),
               "diverged": sum(bool(s["diverged"]) for s in group)}
        for key in metrics:
            vals = np.array([np.nan if s.get(key) is None else s[key] for s in group], dtype=float)
            with np.errstate(invalid="ignore"):
                row[f"{key}_mean"] = float(np.mean(vals))
                row[f"{key}_2sd"] = 2.0 * float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def parse_alphas(text):
    try:
        alphas = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas must be a comma-separated list of numbers, got {text!r}") from None
    if not alphas or any(not a > 0 for a in alphas):
        raise ConfigError("--alphas must list at least one positive value")
    return alphas


def cmd_sweep(args):
    exp = load_config(args.config)
    alphas = parse_alphas(args.alphas)
    reps = exp.replications if args.reps is None else args.reps
    if reps < 1:
        raise ConfigError("--reps must be >= 1")
    out = args.out or exp.out
    problem = make_problem(exp.problem)
    summaries = []
    for alpha0 in alphas:
        for mode in exp.modes:
            for rep in range(reps):
                trace, summary = execute(exp, mode, alpha0, exp.run.seed + rep, problem)
                summary["replication"] = rep
                tag = _tag(mode, alpha0, rep)
                atomic_write(os.path.join(out, f"trace_{tag}.csv"), trace.to_csv())
                summaries.append(summary)
                log.info("%s: test error %s, final loss %.6g", tag, summary["test_error"],
                         summary["final_loss"])
    atomic_write(os.path.join(out, "summaries.json"), dump_json(summaries))
    atomic_write(os.path.join(out, "aggregate.csv"), rows_to_csv(aggregate(summaries)))
    return EXIT_OK


def cmd_gen_data(args):
    if args.classes < 1 or args.rows < 1 or args.dims < 1:
        raise ConfigError("--classes, --rows and --dims must be >= 1")
    if args.seed < 0:
        raise ConfigError("--seed must be nonnegative")
    if args.decades < 0:
        raise ConfigError("--decades must be nonnegative")
    data = gen_synth(args.classes, args.rows, args.dims, args.separation, args.seed,
                      decades=args.decades)
    write_csv(data, args.out)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="probls", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="one optimizer run: trace CSV plus summary JSON")
    p.add_argument("--config", required=True)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="grid over initial learning rates with replications")
    p.add_argument("--config", required=True)
    p.add_argument("--alphas", required=True, help="comma-separated, e.g. 1e-3,1e-2,1e-1")
    p.add_argument("--reps", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gen-data", help="write a synthetic Gaussian-mixture dataset as CSV")
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--dims", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--separation", type=float, default=2.0)
    p.add_argument("--decades", type=float, default=2.0,
                   help="width of the covariance spectrum in decades")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalFailure as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
