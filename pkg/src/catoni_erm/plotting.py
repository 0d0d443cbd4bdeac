"""Static SVG figures from an experiment results CSV."""
from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .errors import MissingColumns  # noqa: E402
from .harness import CSV_COLUMNS  # noqa: E402

__all__ = ["read_results", "padded_limits", "plot_results", "figure_style"]

MARGIN = 0.05
TASK_TITLES = {
    "regression": "L2 regression",
    "kmeans": "k-means quantizer",
}


def figure_style() -> dict:
    return {
        "font.size": 9,
        "axes.titlesize": 10,
        "axes.labelsize": 9,
        "legend.fontsize": 8,
        "lines.linewidth": 1.4,
        "lines.markersize": 4,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "svg.hashsalt": "catoni-erm",
        "svg.fonttype": "none",
    }


def read_results(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in header]
        if missing:
            raise MissingColumns(f"{path}: missing columns {missing}")
        rows = list(reader)
    if not rows:
        raise MissingColumns(f"{path}: no result rows")
    out = []
    for r in rows:
        rec = dict(r)
        for key in CSV_COLUMNS[1:]:
            rec[key] = int(r[key]) if key in ("n", "reps", "failed_reps") else float(r[key])
        out.append(rec)
    return out


def padded_limits(values, log: bool = False, margin: float = MARGIN) -> tuple[float, float]:
    """Data extent widened by ``margin`` of its span on each side.

    On a log axis the padding is applied to log10 values.  A zero span is
    widened to ``margin`` of the value itself (or +-margin around 0).
    """
    vals = [v for v in values if math.isfinite(v) and (v > 0 or not log)]
    if not vals:
        return (0.1, 10.0) if log else (-1.0, 1.0)
    if log:
        lo, hi = padded_limits([math.log10(v) for v in vals], False, margin)
        return 10.0**lo, 10.0**hi
    lo, hi = min(vals), max(vals)
    span = hi - lo
    if span == 0:
        pad = abs(lo) * margin if lo != 0 else margin
    else:
        pad = span * margin
    return lo - pad, hi + pad


def _panel_excess(ax, rows, task):
    betas = [r["beta"] for r in rows]
    ys = []
    for key, label, marker in (
        ("excess_catoni", "Catoni", "o"),
        ("excess_vanilla", "vanilla", "s"),
    ):
        y = [r[key] if r[key] > 0 else math.nan for r in rows]
        ys += y
        ax.plot(betas, y, marker=marker, label=label)
    ax.set_yscale("log")
    ax.set_xlim(*padded_limits(betas))
    ax.set_ylim(*padded_limits(ys, log=True))
    ax.set_xlabel("tail parameter beta")
    ax.set_ylabel("excess risk")
    ax.set_title(f"(a) {TASK_TITLES.get(task, task)}: excess risk")
    ax.legend()


def _panel_improvement(ax, rows, task):
    betas = [r["beta"] for r in rows]
    y = [r["improvement_pct"] for r in rows]
    ax.plot(betas, y, marker="o", color="C2")
    ax.axhline(0.0, color="0.5", lw=0.8)
    ax.set_xlim(*padded_limits(betas))
    ax.set_ylim(*padded_limits(y))
    ax.set_xlabel("tail parameter beta")
    ax.set_ylabel("improvement (%)")
    ax.set_title("(b) improvement of Catoni over vanilla")


def plot_results(csv_path, out_dir, ns=None) -> list[Path]:
    """Write one two-panel SVG per (task, n) found in the results CSV."""
    rows = read_results(csv_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    tasks = sorted({r["task"] for r in rows})
    for task in tasks:
        task_rows = [r for r in rows if r["task"] == task]
        wanted = sorted({r["n"] for r in task_rows}) if ns is None else list(ns)
        for n in wanted:
            sel = sorted((r for r in task_rows if r["n"] == n), key=lambda r: r["beta"])
            if not sel:
                continue
            with plt.rc_context(figure_style()):
                fig, (ax_a, ax_b) = plt.subplots(1, 2, figsize=(9.0, 3.6))
                _panel_excess(ax_a, sel, task)
                _panel_improvement(ax_b, sel, task)
                fig.suptitle(f"n = {n}")
                fig.tight_layout()
                path = out / f"{task}_n{n}.svg"
                fig.savefig(path, format="svg", metadata={"Date": None})
                plt.close(fig)
            written.append(path)
    return written
