"""Monte-Carlo comparison of Catoni and vanilla ERM on the simulation designs.

A grid cell is one (task, beta, n) combination.  Each replication draws a
training set and an independent holdout set from its own seeded stream,
fits both arms on the same training data and scores both on the same
holdout.  Aggregation folds replications in index order, so output is
identical whatever the worker count.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import subprocess
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .clustering import (
    Codebook,
    catoni_distortion,
    holdout_distortion,
    kmeans_plus_plus,
    lloyd_catoni,
    lloyd_vanilla,
    vanilla_distortion,
)
from .datagen import (
    LinearModelSpec,
    MixtureSpec,
    ParetoSpec,
    data_hash,
    gen_mixture,
    gen_regression,
    make_rng,
    pareto_draw,
    stream_seed,
)
from .errors import BadTailIndex, CatoniError
from .erm_core import OptimizerOptions
from .regression import fit_catoni, fit_vanilla, holdout_risk, predict
from .robust_mean import alpha_finite_class, alpha_fixed_confidence, alpha_simple

log = logging.getLogger(__name__)

__all__ = [
    "ExperimentGrid",
    "CellResult",
    "RepResult",
    "oracle_variance",
    "choose_alpha",
    "run_replication",
    "run_cell",
    "run_grid",
    "write_results_csv",
    "CSV_COLUMNS",
]

DEFAULT_BETAS = (2.01, 2.50, 3.01, 3.50, 4.01, 4.50, 5.01, 5.50, 6.01)
DEFAULT_NS = (50, 100, 250, 500, 750, 1000)
CSV_COLUMNS = (
    "task",
    "beta",
    "n",
    "reps",
    "excess_catoni",
    "se_catoni",
    "excess_vanilla",
    "se_vanilla",
    "improvement_pct",
    "failed_reps",
)
ORACLE_DRAWS = 10_000_000
RESULTS_NAME = "results.csv"
PARTIAL_NAME = "results.partial.csv"
RESUME_NAME = "RESUME.json"


@dataclass
class ExperimentGrid:
    task: str = "regression"
    betas: tuple = DEFAULT_BETAS
    ns: tuple = DEFAULT_NS
    reps: int = 1000
    holdout_m: int = 100_000
    master_seed: int = 20_160_101
    variance_bound: Union[str, float] = "auto"
    alpha_rule: str = "simple"
    delta: float = 0.05
    class_size: float = 1.0
    # regression arm
    random_restarts: int = 4
    noise_scale: float = 1.0
    # k-means arms
    n_init: int = 10
    max_iter: int = 100

    def __post_init__(self):
        if self.task not in ("regression", "kmeans"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.reps < 1 or self.holdout_m < 1:
            raise ValueError("reps and holdout_m must be >= 1")
        if self.alpha_rule not in ("simple", "fixed", "finite-class"):
            raise ValueError(f"unknown alpha rule {self.alpha_rule!r}")
        if isinstance(self.variance_bound, str):
            if self.variance_bound not in ("auto", "oracle", "plugin"):
                self.variance_bound = float(self.variance_bound)
        self.betas = tuple(sorted(float(b) for b in self.betas))
        self.ns = tuple(sorted(int(n) for n in self.ns))
        low = [b for b in self.betas if b <= 2]
        if low:
            warnings.warn(f"tail indices {low} have infinite variance; no guarantee applies")

    def cells(self):
        return [(b, n) for b in self.betas for n in self.ns]


@dataclass
class RepResult:
    rep: int
    seed: int
    failed: bool = False
    error: str = ""
    risk_catoni: float = math.nan
    risk_vanilla: float = math.nan
    risk_optimal: float = math.nan
    alpha: float = math.nan
    hashes: dict = field(default_factory=dict)

    @property
    def excess_catoni(self) -> float:
        return self.risk_catoni - self.risk_optimal

    @property
    def excess_vanilla(self) -> float:
        return self.risk_vanilla - self.risk_optimal


@dataclass
class CellResult:
    task: str
    beta: float
    n: int
    reps: int
    excess_catoni: float
    se_catoni: float
    excess_vanilla: float
    se_vanilla: float
    improvement_pct: float
    failed_reps: int
    negative_excess: int = 0
    replications: list = field(default_factory=list, repr=False)

    def row(self) -> list[str]:
        return [
            self.task,
            _fmt(self.beta),
            str(self.n),
            str(self.reps),
            _fmt(self.excess_catoni),
            _fmt(self.se_catoni),
            _fmt(self.excess_vanilla),
            _fmt(self.se_vanilla),
            _fmt(self.improvement_pct),
            str(self.failed_reps),
        ]


def _fmt(x) -> str:
    return format(float(x), ".17g")


@lru_cache(maxsize=64)
def oracle_variance(task: str, beta: float, draws: int = ORACLE_DRAWS) -> float:
    """Variance bound derived from the generating law.

    k-means: ``V = 2 Var(Pareto)``, the trace of a component's covariance.
    Regression: ``Var(eps^2)``, the variance of the squared loss at theta*.
    It is closed-form when ``beta > 4``; below that it is infinite and a
    seeded Monte-Carlo estimate from ``draws`` draws stands in (finite, but
    driven by the largest draws).
    """
    spec = ParetoSpec(beta)
    if task == "kmeans":
        if not beta > 2:
            raise BadTailIndex("oracle V needs beta > 2")
        return 2.0 * spec.variance
    if beta > 4:
        return spec.central_moment(4) - spec.central_moment(2) ** 2
    rng = make_rng(stream_seed(0, "oracle", task, beta, draws))
    total = total_sq = 0.0
    chunk = 1_000_000
    left = draws
    while left > 0:
        size = min(chunk, left)
        e2 = pareto_draw(spec, rng, size) ** 2
        total += float(e2.sum())
        total_sq += float((e2 * e2).sum())
        left -= size
    mean = total / draws
    return total_sq / draws - mean * mean


def choose_alpha(rule: str, v: float, n: int, delta: float, class_size: float = 1.0) -> float:
    if rule == "simple":
        return alpha_simple(v, n)
    if rule == "fixed":
        return alpha_fixed_confidence(v, n, delta)
    if rule == "finite-class":
        return alpha_finite_class(v, n, delta, class_size)
    raise ValueError(f"unknown alpha rule {rule!r}")


def _regression_rep(grid: ExperimentGrid, beta: float, n: int, rep: int, v_cell) -> RepResult:
    seed = stream_seed(grid.master_seed, grid.task, beta, n, rep)
    out = RepResult(rep=rep, seed=seed)
    spec = LinearModelSpec(noise_scale=grid.noise_scale)
    pareto = ParetoSpec(beta)
    train = gen_regression(spec, pareto, n, make_rng(stream_seed(seed, "train")))
    hold = gen_regression(spec, pareto, grid.holdout_m, make_rng(stream_seed(seed, "holdout")))

    theta_v = fit_vanilla(train, 2)
    out.hashes["vanilla_train"] = data_hash(train.features, train.responses)
    if v_cell is None:
        resid = train.responses - predict(theta_v, train.features)
        v = float(np.var(resid**2))
    else:
        v = v_cell
    alpha = choose_alpha(grid.alpha_rule, v, n, grid.delta, grid.class_size)
    out.alpha = alpha
    opts = OptimizerOptions(
        inits=[theta_v],
        random_restarts=grid.random_restarts,
        seed=stream_seed(seed, "restarts"),
    )
    sol = fit_catoni(train, 2, alpha, opts)
    out.hashes["catoni_train"] = data_hash(train.features, train.responses)

    hold_hash = data_hash(hold.features, hold.responses)
    out.risk_catoni = holdout_risk(sol.theta, hold, 2)
    out.risk_vanilla = holdout_risk(theta_v, hold, 2)
    out.risk_optimal = holdout_risk(np.asarray(spec.theta_star), hold, 2)
    out.hashes["catoni_holdout"] = out.hashes["vanilla_holdout"] = hold_hash
    return out


def _kmeans_rep(grid: ExperimentGrid, beta: float, n: int, rep: int, v_cell) -> RepResult:
    seed = stream_seed(grid.master_seed, grid.task, beta, n, rep)
    out = RepResult(rep=rep, seed=seed)
    spec = MixtureSpec(beta)
    k = spec.k
    points = gen_mixture(spec, n, make_rng(stream_seed(seed, "train")))
    hold = gen_mixture(spec, grid.holdout_m, make_rng(stream_seed(seed, "holdout")))
    init_rng = make_rng(stream_seed(seed, "init"))
    inits = [kmeans_plus_plus(points, k, init_rng) for _ in range(grid.n_init)]

    vanilla = min(
        (lloyd_vanilla(points, k, c0, grid.max_iter) for c0 in inits),
        key=lambda cb: vanilla_distortion(points, cb),
    )
    out.hashes["vanilla_train"] = data_hash(points)
    if v_cell is None:
        V = vanilla_distortion(points, vanilla)
    else:
        V = v_cell
    delta = None if grid.alpha_rule == "simple" else grid.delta
    best = None
    for c0 in inits:
        cb = lloyd_catoni(points, k, c0, V, grid.max_iter, delta=delta)
        est = catoni_distortion(points, cb, V, delta)
        if best is None or est.value < best[0]:
            best = (est.value, cb, est.alpha_used)
    catoni = best[1]
    out.alpha = best[2]
    out.hashes["catoni_train"] = data_hash(points)

    hold_hash = data_hash(hold)
    out.risk_catoni = holdout_distortion(catoni, hold)
    out.risk_vanilla = holdout_distortion(vanilla, hold)
    out.risk_optimal = holdout_distortion(Codebook(np.asarray(spec.centers)), hold)
    out.hashes["catoni_holdout"] = out.hashes["vanilla_holdout"] = hold_hash
    return out


def run_replication(grid: ExperimentGrid, beta: float, n: int, rep: int, v_cell=None) -> RepResult:
    """One paired replication; failures are captured, never raised."""
    worker = _regression_rep if grid.task == "regression" else _kmeans_rep
    try:
        with threadpool_limits(1), np.errstate(over="ignore", invalid="ignore"):
            res = worker(grid, beta, n, rep, v_cell)
    except (CatoniError, ArithmeticError, np.linalg.LinAlgError) as exc:
        seed = stream_seed(grid.master_seed, grid.task, beta, n, rep)
        return RepResult(rep=rep, seed=seed, failed=True, error=f"{type(exc).__name__}: {exc}")
    risks = (res.risk_catoni, res.risk_vanilla, res.risk_optimal)
    if not all(math.isfinite(r) for r in risks):
        res.failed = True
        res.error = "non-finite holdout risk"
    return res


def _rep_task(args):
    return run_replication(*args)


def oracle_is_finite(task: str, beta: float) -> bool:
    """Whether the variance of the loss at the optimum is finite."""
    return beta > (4.0 if task == "regression" else 2.0)


def _cell_variance(grid: ExperimentGrid, beta: float):
    mode = grid.variance_bound
    if mode == "auto":
        mode = "oracle" if oracle_is_finite(grid.task, beta) else "plugin"
    if mode == "oracle":
        v = oracle_variance(grid.task, beta)
        if grid.task == "regression":
            v *= grid.noise_scale**4
        # noise-free design: every loss at theta* is 0 and any scale will do
        return v if v > 0 else 1.0
    if mode == "plugin":
        return None
    return float(mode)


def _summarise(grid, beta, n, reps: list[RepResult]) -> CellResult:
    ok = [r for r in reps if not r.failed]
    ec = np.array([r.excess_catoni for r in ok])
    ev = np.array([r.excess_vanilla for r in ok])

    def mean_se(a):
        if a.size == 0:
            return math.nan, math.nan
        se = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
        return float(a.mean()), se

    mc, sc = mean_se(ec)
    mv, sv = mean_se(ev)
    with np.errstate(divide="ignore", invalid="ignore"):
        improvement = float(np.float64(mv - mc) / np.float64(mc) * 100.0)
    negative = int(np.sum(ec < 0) + np.sum(ev < 0))
    return CellResult(
        task=grid.task,
        beta=beta,
        n=n,
        reps=len(ok),
        excess_catoni=mc,
        se_catoni=sc,
        excess_vanilla=mv,
        se_vanilla=sv,
        improvement_pct=improvement,
        failed_reps=len(reps) - len(ok),
        negative_excess=negative,
        replications=reps,
    )


def run_cell(
    grid: ExperimentGrid,
    beta: float,
    n: int,
    threads: int = 1,
    executor: Optional[ProcessPoolExecutor] = None,
) -> CellResult:
    """Run ``grid.reps`` paired replications of one (beta, n) cell."""
    v_cell = _cell_variance(grid, beta)
    args = [(grid, beta, n, r, v_cell) for r in range(grid.reps)]
    if executor is not None:
        chunk = max(1, grid.reps // (8 * max(threads, 1)))
        reps = list(executor.map(_rep_task, args, chunksize=chunk))
    elif threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return run_cell(grid, beta, n, threads, pool)
    else:
        reps = [_rep_task(a) for a in args]
    reps.sort(key=lambda r: r.rep)
    cell = _summarise(grid, beta, n, reps)
    if cell.failed_reps:
        log.warning("%s beta=%s n=%s: %d failed replications", grid.task, beta, n, cell.failed_reps)
    if cell.negative_excess:
        log.info(
            "%s beta=%s n=%s: %d negative excess risks (holdout noise)",
            grid.task, beta, n, cell.negative_excess,
        )
    return cell


def version_string() -> str:
    """``git describe``-style version, falling back to the package version."""
    try:
        here = Path(__file__).resolve().parent
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_results_csv(path, rows: Iterable[list[str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in rows:
            w.writerow(row)


def _grid_config(grid: ExperimentGrid) -> dict:
    cfg = asdict(grid)
    cfg["betas"] = list(grid.betas)
    cfg["ns"] = list(grid.ns)
    return cfg


def _read_partial(path: Path) -> dict:
    done = {}
    if path.exists():
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        for row in rows[1:]:
            done[(float(row[1]), int(row[2]))] = row
    return done


def run_grid(
    grid: ExperimentGrid,
    out_dir=None,
    threads: int = 1,
    resume: bool = False,
) -> list[CellResult]:
    """Run every cell (beta ascending, then n ascending).

    With ``out_dir`` the results CSV, a JSON-lines run manifest and a
    per-replication log are written there.  Rows are flushed to a partial
    file as cells finish; an interrupt leaves a resume marker so a rerun with
    ``resume=True`` skips finished cells.
    """
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        partial_path = out / PARTIAL_NAME
        marker = out / RESUME_NAME
        done = _read_partial(partial_path) if resume else {}
        if not resume and partial_path.exists():
            partial_path.unlink()
        manifest = open(out / "manifest.jsonl", "a" if resume else "w", encoding="utf-8")
        rep_log = open(out / "replications.jsonl", "a" if resume else "w", encoding="utf-8")
        manifest.write(
            json.dumps(
                {
                    "event": "start",
                    "version": version_string(),
                    "python": sys.version.split()[0],
                    "numpy": np.__version__,
                    "threads": threads,
                    "resume": resume,
                    "skipped_cells": [list(k) for k in sorted(done)],
                    "config": _grid_config(grid),
                },
                sort_keys=True,
            )
            + "\n"
        )
        if not partial_path.exists():
            write_results_csv(partial_path, [])
    else:
        done = {}

    results: list[CellResult] = []
    rows: dict = dict(done)
    pool = ProcessPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for beta, n in grid.cells():
            if (beta, n) in done:
                continue
            cell = run_cell(grid, beta, n, threads, pool)
            results.append(cell)
            rows[(beta, n)] = cell.row()
            if out is not None:
                with open(partial_path, "a", newline="", encoding="utf-8") as fh:
                    csv.writer(fh, lineterminator="\n").writerow(cell.row())
                for r in cell.replications:
                    rec = {
                        "task": grid.task,
                        "beta": beta,
                        "n": n,
                        "rep": r.rep,
                        "seed": r.seed,
                        "failed": r.failed,
                        "error": r.error,
                        "alpha": r.alpha,
                        "excess_catoni": r.excess_catoni,
                        "excess_vanilla": r.excess_vanilla,
                        "hashes": r.hashes,
                    }
                    rep_log.write(json.dumps(rec, sort_keys=True) + "\n")
                manifest.write(
                    json.dumps(
                        {"event": "cell", "beta": beta, "n": n, "reps": cell.reps,
                         "failed_reps": cell.failed_reps},
                        sort_keys=True,
                    )
                    + "\n"
                )
                manifest.flush()
                rep_log.flush()
    except KeyboardInterrupt:
        if out is not None:
            marker.write_text(
                json.dumps({"completed_cells": [list(k) for k in sorted(rows)]}, sort_keys=True)
                + "\n",
                encoding="utf-8",
            )
            manifest.write(json.dumps({"event": "interrupted"}) + "\n")
            manifest.close()
            rep_log.close()
        raise
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)

    if out is not None:
        ordered = [rows[key] for key in grid.cells() if key in rows]
        write_results_csv(out / RESULTS_NAME, ordered)
        partial_path.unlink()
        if marker.exists():
            marker.unlink()
        manifest.write(json.dumps({"event": "done", "cells": len(ordered)}) + "\n")
        manifest.close()
        rep_log.close()
    return results
