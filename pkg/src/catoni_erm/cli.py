"""Command-line entry point: ``catoni-erm <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import bounds_lab as bl
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
    gen_mixture,
    gen_regression,
    make_rng,
    pareto_draw,
    read_points_csv,
    read_regression_csv,
    stream_seed,
    write_points_csv,
    write_regression_csv,
)
from .errors import CatoniError
from .erm_core import OptimizerOptions
from .harness import (
    ExperimentGrid,
    choose_alpha,
    oracle_is_finite,
    oracle_variance,
    run_grid,
    version_string,
)
from .regression import fit_catoni, fit_vanilla, holdout_risk, predict
from .robust_mean import catoni_mean, median_of_means

log = logging.getLogger("catoni_erm")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _emit(rows, header, out=None) -> None:
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    finally:
        if out:
            fh.close()


def _common(p: argparse.ArgumentParser, grid: bool = False) -> None:
    if grid:
        p.add_argument("--beta", type=_floats, default=None, help="comma-separated tail indices")
        p.add_argument("--n", type=_ints, default=None, help="comma-separated sample sizes")
    else:
        p.add_argument("--beta", type=float, default=3.0, help="Pareto tail index")
        p.add_argument("--n", type=int, default=500, help="sample size")
    p.add_argument("--seed", type=int, default=20160101)
    p.add_argument(
        "--variance-bound", default="auto", help="auto, oracle, plugin or a number"
    )
    p.add_argument("--alpha-rule", choices=("simple", "fixed", "finite-class"), default="simple")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--class-size", type=float, default=1.0)
    p.add_argument("--out", default=None, help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="catoni-erm", description="Catoni-estimator risk minimisation toolkit"
    )
    parser.add_argument("--version", action="version", version=version_string())
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mean", help="robust mean of a sample")
    _common(p)
    p.add_argument("--input", help="file with one value per line (or first CSV column)")
    p.add_argument("--alpha", type=float, default=None, help="explicit scale parameter")
    p.add_argument("--blocks", type=int, default=None, help="median-of-means block count")
    p.set_defaults(func=cmd_mean)

    p = sub.add_parser("regress", help="fit Catoni and vanilla linear regression")
    _common(p)
    p.add_argument("--input", help="CSV with columns z1..zm,y")
    p.add_argument("--loss", type=int, choices=(1, 2), default=2)
    p.add_argument("--holdout-m", type=int, default=0)
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--save-data", default=None)
    p.set_defaults(func=cmd_regress)

    p = sub.add_parser("kmeans", help="fit Catoni and vanilla k-means")
    _common(p)
    p.add_argument("--input", help="CSV with columns x1..xm")
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--n-init", type=int, default=10)
    p.add_argument("--holdout-m", type=int, default=0)
    p.add_argument("--save-data", default=None)
    p.set_defaults(func=cmd_kmeans)

    p = sub.add_parser("bounds", help="tabulate excess-risk bound terms as CSV")
    p.add_argument("--variance", type=float, required=True, dest="v", help="variance bound v")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--alpha-rule", choices=("simple", "fixed", "finite-class"), default="simple")
    p.add_argument("--class-size", type=float, default=1.0)
    p.add_argument("--gamma2", type=float, default=0.0, help="gamma_2(F, d)")
    p.add_argument("--gamma1", type=float, default=0.0, help="gamma_1(F, D)")
    p.add_argument("--gamma-quantile", type=float, default=0.0, help="Gamma_delta")
    p.add_argument("--diam", type=float, default=0.0, help="diam_d(F)")
    p.add_argument("--L", type=float, default=1.0, dest="const_L")
    p.add_argument("--K", type=float, default=1.0, dest="const_K")
    p.add_argument("--rho", type=float, default=None, help="k-means centre-norm bound")
    p.add_argument("--dim", type=int, default=None, help="k-means data dimension")
    p.add_argument("--k", type=int, default=None, help="k-means codebook size")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("experiment", help="run a Monte-Carlo grid")
    p.add_argument("task", choices=("regression", "kmeans"))
    _common(p, grid=True)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--holdout-m", type=int, default=100_000)
    p.add_argument("--threads", type=int, default=1, help="worker processes")
    p.add_argument("--resume", action="store_true")
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("plot", help="render SVG figures from a results CSV")
    p.add_argument("results")
    p.add_argument("--out", default=None, help="directory (default: next to the CSV)")
    p.add_argument("--n", type=_ints, default=None)
    p.set_defaults(func=cmd_plot)
    return parser


def _variance(arg: str, oracle, finite: bool = True):
    """Resolve a variance-bound flag; ``None`` means use the plug-in value."""
    if arg == "auto":
        arg = "oracle" if finite else "plugin"
    if arg == "oracle":
        v = oracle()
        return v if v is not None and math.isfinite(v) else None
    if arg == "plugin":
        return None
    return float(arg)


def cmd_mean(args) -> int:
    if args.input:
        x = _read_column(args.input)
        oracle = None
    else:
        spec = ParetoSpec(args.beta)
        x = pareto_draw(spec, make_rng(stream_seed(args.seed, "mean")), args.n)
        oracle = spec.variance
    n = x.size
    if args.alpha is not None:
        alpha = args.alpha
    else:
        v = _variance(args.variance_bound, lambda: oracle, oracle is not None and math.isfinite(oracle))
        if v is None:
            v = float(np.var(x, ddof=1))
        alpha = choose_alpha(args.alpha_rule, v, n, args.delta, args.class_size)
    est = catoni_mean(x, alpha)
    blocks = args.blocks or max(1, min(n, math.ceil(8 * math.log(1 / args.delta))))
    rows = [
        ("catoni", est.value),
        ("median_of_means", median_of_means(x, blocks)),
        ("sample_mean", float(x.mean())),
        ("alpha", alpha),
        ("n", n),
    ]
    _emit(rows, ("estimator", "value"), args.out)
    return 0


def _read_column(path) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            cell = line.strip().split(",")[0]
            if not cell:
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                if vals:
                    raise
    return np.asarray(vals, dtype=float)


def cmd_regress(args) -> int:
    spec = LinearModelSpec()
    pareto = ParetoSpec(args.beta)
    truth = None
    if args.input:
        data = read_regression_csv(args.input)
    else:
        data = gen_regression(spec, pareto, args.n, make_rng(stream_seed(args.seed, "regress")))
        truth = np.asarray(spec.theta_star)
    if args.save_data:
        write_regression_csv(args.save_data, data)
    theta_v = fit_vanilla(data, args.loss)
    simulated = args.loss == 2 and truth is not None
    v = _variance(
        args.variance_bound,
        lambda: oracle_variance("regression", args.beta) if simulated else None,
        simulated and oracle_is_finite("regression", args.beta),
    )
    if v is None:
        r = np.abs(data.responses - predict(theta_v, data.features)) ** args.loss
        v = float(np.var(r))
    alpha = choose_alpha(args.alpha_rule, v, data.n, args.delta, args.class_size)
    sol = fit_catoni(
        data, args.loss, alpha, OptimizerOptions(inits=[theta_v], random_restarts=args.restarts)
    )
    rows = []
    for j in range(data.dim):
        rows.append((f"theta{j + 1}", sol.theta[j], theta_v[j], truth[j] if truth is not None else math.nan))
    rows.append(("train_catoni_risk", sol.catoni_risk, math.nan, math.nan))
    if args.holdout_m and truth is not None:
        hold = gen_regression(spec, pareto, args.holdout_m,
                              make_rng(stream_seed(args.seed, "regress-holdout")))
        rows.append((
            "holdout_risk",
            holdout_risk(sol.theta, hold, args.loss),
            holdout_risk(theta_v, hold, args.loss),
            holdout_risk(truth, hold, args.loss),
        ))
    rows.append(("alpha", alpha, math.nan, math.nan))
    _emit(rows, ("quantity", "catoni", "vanilla", "truth"), args.out)
    return 0


def cmd_kmeans(args) -> int:
    truth = None
    if args.input:
        points = read_points_csv(args.input)
    else:
        spec = MixtureSpec(args.beta)
        points = gen_mixture(spec, args.n, make_rng(stream_seed(args.seed, "kmeans")))
        truth = Codebook(np.asarray(spec.centers))
    if args.save_data:
        write_points_csv(args.save_data, points)
    k = args.k
    rng = make_rng(stream_seed(args.seed, "kmeans-init"))
    inits = [kmeans_plus_plus(points, k, rng) for _ in range(args.n_init)]
    vanilla = min((lloyd_vanilla(points, k, c) for c in inits),
                  key=lambda cb: vanilla_distortion(points, cb))
    V = _variance(
        args.variance_bound,
        lambda: oracle_variance("kmeans", args.beta) if truth is not None else None,
        truth is not None and oracle_is_finite("kmeans", args.beta),
    )
    if V is None:
        V = vanilla_distortion(points, vanilla)
    delta = None if args.alpha_rule == "simple" else args.delta
    catoni = min((lloyd_catoni(points, k, c, V, delta=delta) for c in inits),
                 key=lambda cb: catoni_distortion(points, cb, V, delta).value)
    rows = []
    for j in range(k):
        for arm, cb in (("catoni", catoni), ("vanilla", vanilla)):
            rows.append((arm, j, *cb.centers[j]))
    _emit(rows, ["arm", "center"] + [f"x{i + 1}" for i in range(points.shape[1])], args.out)
    if args.holdout_m and truth is not None:
        hold = gen_mixture(MixtureSpec(args.beta), args.holdout_m,
                           make_rng(stream_seed(args.seed, "kmeans-holdout")))
        opt = holdout_distortion(truth, hold)
        print(
            f"# holdout excess distortion: catoni={holdout_distortion(catoni, hold) - opt:.6g} "
            f"vanilla={holdout_distortion(vanilla, hold) - opt:.6g}",
            file=sys.stderr,
        )
    return 0


def cmd_bounds(args) -> int:
    alpha = args.alpha
    if alpha is None:
        alpha = choose_alpha(args.alpha_rule, args.v, args.n, args.delta, args.class_size)
    gamma2, gamma1 = args.gamma2, args.gamma1
    rows = []
    if args.rho is not None and args.dim is not None and args.k is not None:
        log_n = bl.kmeans_log_covering(args.rho, args.dim, args.k)
        gamma2 = bl.dudley_integral(log_n, 2.0 * args.rho, 2)
        gamma1 = bl.dudley_integral(log_n, 2.0 * args.rho, 1)
        rows += [("gamma2_entropy_integral", gamma2), ("gamma1_entropy_integral", gamma1)]
    inputs = bl.BoundInputs(
        alpha=alpha, v=args.v, n=args.n, delta=args.delta,
        gamma2_d=gamma2, gamma1_D=gamma1,
        gamma2_quantile=args.gamma_quantile, diam_d=args.diam,
    )
    t1 = bl.theorem1_bound(inputs, args.const_L)
    t2 = bl.theorem2_bound(inputs, args.const_K)
    rows = [
        ("alpha", alpha),
        ("catoni_term", bl.catoni_term(alpha, args.v, args.n, args.delta)),
    ] + rows + [
        ("theorem1_catoni_part", t1.catoni_term),
        ("theorem1_complexity_part", t1.complexity_term),
        ("theorem1_bound", t1.value),
        ("theorem1_condition_holds", int(t1.condition_holds)),
        ("theorem2_complexity_part", t2.complexity_term),
        ("theorem2_bound", t2.value),
        ("theorem2_condition_holds", int(t2.condition_holds)),
        ("inverse_alpha", 1.0 / alpha),
    ]
    _emit(rows, ("term", "value"), args.out)
    return 0


def cmd_experiment(args) -> int:
    kw = {}
    if args.beta:
        kw["betas"] = tuple(args.beta)
    if args.n:
        kw["ns"] = tuple(args.n)
    grid = ExperimentGrid(
        task=args.task,
        reps=args.reps,
        holdout_m=args.holdout_m,
        master_seed=args.seed,
        variance_bound=args.variance_bound,
        alpha_rule=args.alpha_rule,
        delta=args.delta,
        class_size=args.class_size,
        **kw,
    )
    out = Path(args.out or f"results_{args.task}")
    cells = run_grid(grid, out, threads=args.threads, resume=args.resume)
    for c in cells:
        log.info("%s beta=%g n=%d improvement=%.2f%%", c.task, c.beta, c.n, c.improvement_pct)
    print(out / "results.csv")
    if not args.no_plot:
        from .plotting import plot_results

        for path in plot_results(out / "results.csv", out):
            print(path)
    return 0


def cmd_plot(args) -> int:
    from .plotting import plot_results

    out = args.out or str(Path(args.results).parent)
    for path in plot_results(args.results, out, args.n):
        print(path)
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CatoniError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("interrupted; rerun with --resume to continue", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
