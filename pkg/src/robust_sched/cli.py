"""Command-line entry point: ``run``, ``compare`` and ``solve``.

Exit status: 0 on success, 2 for invalid input or configuration, 3 when
training diverges, 4 when a dual solver fails to converge.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import core, tasks
from .config import CompareConfig, ErmMethod, ExperimentConfig, IbrMethod, PrimalDualMethod
from .objectives import read_baselines, robust_loss, weighted_loss, write_baselines
from .optim import TrainingDiverged, erm_train, ibr_train, primal_dual_train, write_trajectory_csv
from .optim.training import ConfigError
from .solvers import SolverConfig, SolverError, best_response, project_chi_square

log = logging.getLogger("robust_sched")

EXIT_OK, EXIT_INVALID, EXIT_DIVERGED, EXIT_SOLVER = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
FINAL_HEADER = ("group", "final_loss", "q_final")


class UsageError(ValueError):
    """Bad command-line input; reported on stderr with exit status 2."""


def _setup_logging() -> None:
    name = os.environ.get("ROBUST_SCHED_LOG", "error").strip().lower()
    level = LOG_LEVELS.get(name)
    logging.basicConfig(level=level or logging.ERROR, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level is None:
        log.warning("ignoring ROBUST_SCHED_LOG=%r, expected one of %s", name, sorted(LOG_LEVELS))


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _validation_message(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(part) for part in e["loc"]) or "<config>"
        lines.append(f"{where}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def load_config(path: str | Path, model=ExperimentConfig, seed: int | None = None, output: str | None = None):
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise UsageError("config must be a JSON object")
    if seed is not None:
        raw["seed"] = seed
    if output is not None:
        raw["output_dir"] = output
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        raise UsageError(_validation_message(exc)) from exc


# running experiments


@dataclass(frozen=True)
class RunSummary:
    labels: tuple[str, ...]
    final_losses: np.ndarray
    final_q: np.ndarray
    average_loss: float
    worst_group_loss: float
    robust_loss: float


def execute(cfg: ExperimentConfig) -> RunSummary:
    """Train one configured method and write its artifacts to ``cfg.output_dir``."""
    spec = cfg.task.build()
    data = tasks.generate(spec, cfg.data_seed)
    model = tasks.model_for(spec)
    schedule = cfg.schedule.build()
    solver = cfg.solver.build()
    method = cfg.method
    n = data.n_groups
    baselines = None
    if getattr(method, "baselines_path", None) is not None:
        baselines = read_baselines(method.baselines_path).aligned(data.labels)

    log.info("running %s on %d groups (%d examples), seed %d", method.name, n, sum(data.sizes), cfg.seed)
    if isinstance(method, ErmMethod):
        result = erm_train(
            data, model, schedule, cfg.epochs, tau=method.tau, ema_lambda=cfg.ema_lambda, seed=cfg.seed,
            target_total=method.target_total,
        )
    elif isinstance(method, IbrMethod):
        result = ibr_train(
            data, model, method.set.build(n), schedule, cfg.epochs, baselines=baselines,
            ema_lambda=cfg.ema_lambda, seed=cfg.seed, cfg=solver, target_total=method.target_total,
            warm_start=method.warm_start,
        )
    else:
        steps = cfg.steps if cfg.steps is not None else cfg.epochs * max(1, sum(data.sizes) // method.batch_size)
        result = primal_dual_train(
            data, model, method.set.build(n), schedule, method.q_step, steps,
            gradient_mode=method.build_mode(n, data.sizes), baselines=baselines, ema_lambda=cfg.ema_lambda,
            seed=cfg.seed, cfg=solver, batch_size=method.batch_size,
        )

    final = model.group_losses(result.theta, data)
    p_train = result.p_train
    summary = RunSummary(
        labels=data.labels,
        final_losses=final,
        final_q=result.final_q.weights,
        average_loss=weighted_loss(final, p_train),
        worst_group_loss=float(final.max()),
        robust_loss=robust_loss(final, result.uset, baselines, solver),
    )

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(out / "trajectory.csv", result)
    _write_rows(
        out / "final.csv",
        FINAL_HEADER,
        [(g, _fmt(loss), _fmt(q)) for g, loss, q in zip(data.labels, final, summary.final_q)],
    )
    write_baselines(out / "baselines.tsv", data.labels, final)
    (out / "config.echo.json").write_text(
        json.dumps(cfg.model_dump(mode="json"), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (out / "summary.txt").write_text(
        f"average_loss\t{_fmt(summary.average_loss)}\n"
        f"worst_group_loss\t{_fmt(summary.worst_group_loss)}\n"
        f"robust_loss\t{_fmt(summary.robust_loss)}\n",
        encoding="utf-8",
    )
    log.info("wrote artifacts to %s", out)
    return summary


def _guarded(fn, *args) -> int:
    try:
        # divergence is reported through TrainingDiverged, not numpy warnings
        with np.errstate(over="ignore", invalid="ignore"):
            fn(*args)
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config, ExperimentConfig, args.seed, args.output)
    return _guarded(execute, cfg)


def _compare_one(cfg: ExperimentConfig):
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            return execute(cfg), None
    except (TrainingDiverged, SolverError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def cmd_compare(args) -> int:
    cfg = load_config(args.config, CompareConfig, args.seed, args.output)
    runs = [cfg.experiment(entry) for entry in cfg.methods]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_compare_one, runs))
    else:
        outcomes = [_compare_one(r) for r in runs]

    status = EXIT_OK
    rows, labels = [], None
    for entry, (summary, err) in zip(cfg.methods, outcomes):
        if err is not None:
            print(f"error: method {entry.label!r} failed: {err}", file=sys.stderr)
            status = EXIT_DIVERGED
            continue
        labels = summary.labels
        rows.append(
            [entry.label, _fmt(summary.average_loss), _fmt(summary.worst_group_loss), _fmt(summary.robust_loss)]
            + [_fmt(x) for x in summary.final_losses]
        )
    if labels is not None:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        header = ["method", "average_loss", "worst_group_loss", "robust_loss", *labels]
        _write_rows(out / "compare.csv", header, rows)
        print("\t".join(header))
        for row in rows:
            print("\t".join(row))
    return status


# solver access from the shell


def _parse_vector(text: str, flag: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise UsageError(f"{flag}: expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise UsageError(f"{flag}: empty vector")
    return values


def _solve_set(args, n: int) -> core.UncertaintySet:
    if args.center == "uniform":
        center = core.GroupWeights.uniform(n)
    else:
        center = core.GroupWeights(_parse_vector(args.center, "--center"))
        if len(center) != n:
            raise UsageError(f"--center has {len(center)} entries, --v has {n}")
    kind = args.set or ("cvar" if args.alpha is not None else "chi_square")
    if kind == "chi_square":
        if args.rho is None:
            raise UsageError("--rho is required for the chi_square set")
        return core.ChiSquare(args.rho, center)
    if kind == "cvar":
        if args.alpha is None:
            raise UsageError("--alpha is required for the cvar set")
        return core.CVaR(args.alpha, center)
    if kind == "singleton":
        return core.Singleton(center)
    return core.FullSimplex()


def cmd_solve(args) -> int:
    try:
        v = np.asarray(_parse_vector(args.v, "--v"))
        if args.baselines is not None:
            b = np.asarray(_parse_vector(args.baselines, "--baselines"))
            if b.size != v.size:
                raise UsageError(f"--baselines has {b.size} entries, --v has {v.size}")
            v = v - b
        uset = _solve_set(args, v.size)
        solver = SolverConfig(args.tol, args.max_iter)
        if args.what == "best-response":
            res = best_response(v, uset, solver)
            payload = {"q": res.q.tolist(), "objective": res.objective, "active": res.active}
        else:
            if not isinstance(uset, core.ChiSquare):
                raise UsageError("solve project supports only the chi_square set")
            q = project_chi_square(v, uset, solver)
            # objective of a projection is the Euclidean distance it minimizes
            distance = float(np.linalg.norm(q.weights - v))
            payload = {
                "q": q.tolist(),
                "objective": distance,
                "active": distance > 0.0,
                "divergence": core.chi_square_divergence(q, uset.center),
            }
    except SolverError as exc:
        print(f"error: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(json.dumps(payload))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-sched", description="Distributionally robust group reweighting.")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "train one configured method"), ("compare", "train several methods on one task")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--seed", type=int, help="training seed (overrides the config)")
        p.add_argument("--output", help="output directory (overrides the config)")
        if name == "compare":
            p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    solve = sub.add_parser("solve", help="run a solver on one loss vector and print JSON")
    solve.add_argument("what", choices=("best-response", "project"))
    solve.add_argument("--v", required=True, help="comma-separated losses (or the point to project)")
    solve.add_argument("--set", choices=("chi_square", "cvar", "full_simplex", "singleton"))
    solve.add_argument("--rho", type=float)
    solve.add_argument("--alpha", type=float)
    solve.add_argument("--center", default="uniform", help="'uniform' or comma-separated weights")
    solve.add_argument("--baselines", help="comma-separated baselines subtracted from --v")
    solve.add_argument("--tol", type=float, default=1e-10, help="dual tolerance")
    solve.add_argument("--max-iter", type=int, default=200)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    handlers = {"run": cmd_run, "compare": cmd_compare, "solve": cmd_solve}
    try:
        return handlers[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
