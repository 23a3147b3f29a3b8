"""Figures for sweep results, rendered to files with the Agg backend."""
from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

MARKERS = {"factored_unif": "o", "factored_rkf": "s", "sparse_unif": "^", "dense": "x"}


def _num(v) -> float:
    if v in ("", None):
        return math.nan
    return float(v)


def _finite_positive(v: float) -> bool:
    return math.isfinite(v) and v > 0


def plot_time_accuracy(rows: list[dict], path, title: str | None = None) -> Path:
    """Wall time against KL, one panel per query variable, one series per method.

    Zero KL values are drawn at the smallest positive value in the panel;
    infinite ones are dropped.
    """
    by_var = defaultdict(list)
    for r in rows:
        by_var[r["query_var"]].append(r)
    fig, axes = plt.subplots(1, max(1, len(by_var)), figsize=(4.5 * max(1, len(by_var)), 3.6), squeeze=False)
    for ax, (var, vrows) in zip(axes[0], sorted(by_var.items())):
        kls = [_num(r["kl"]) for r in vrows]
        floor = min([k for k in kls if _finite_positive(k)], default=1e-16)
        series = defaultdict(lambda: ([], [], []))
        for r, kl in zip(vrows, kls):
            wall = _num(r["wall_ms"])
            if not math.isfinite(kl) or not math.isfinite(wall):
                continue
            xs, ys, labels = series[r["method"]]
            xs.append(wall)
            ys.append(max(kl, floor))
            labels.append(r["param"])
        for method, (xs, ys, labels) in sorted(series.items()):
            ax.plot(xs, ys, MARKERS.get(method, "d"), label=method, alpha=0.8)
            for x, y, lab in zip(xs, ys, labels):
                ax.annotate(lab, (x, y), fontsize=6, xytext=(3, 3), textcoords="offset points")
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("wall time [ms]")
        ax.set_ylabel("KL(exact || approx)")
        ax.set_title(f"query {var}")
        ax.grid(True, which="both", alpha=0.3)
    axes[0][0].legend(fontsize=7)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_horizon(rows: list[dict], path, title: str | None = None) -> Path:
    """KL and, where available, the error bound against query time.

    Each (method, param) pair is one curve; the plotted KL is the maximum over
    query variables at each time.
    """
    curves = defaultdict(dict)
    bounds = defaultdict(dict)
    for r in rows:
        key = (r["method"], r["param"])
        t = _num(r["query_t"])
        kl = _num(r["kl"])
        if math.isfinite(kl):
            curves[key][t] = max(curves[key].get(t, 0.0), kl)
        b = _num(r.get("theorem4_bound"))
        if math.isfinite(b):
            bounds[key][t] = b
    fig, ax = plt.subplots(figsize=(6, 4))
    for i, (key, pts) in enumerate(sorted(curves.items())):
        ts = sorted(pts)
        color = f"C{i % 10}"
        label = f"{key[0]} {key[1]}".strip()
        ax.plot(ts, [max(pts[t], 1e-18) for t in ts], "-o", color=color, ms=3, label=f"KL {label}")
        if bounds.get(key):
            bt = sorted(bounds[key])
            ax.plot(bt, [bounds[key][t] for t in bt], "--", color=color, label=f"bound {label}")
    ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.set_ylabel("max marginal KL")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_results(rows: list[dict], path, title: str | None = None) -> Path:
    """Pick the horizon view when queries span several times, else time-accuracy."""
    times = {str(r["query_t"]) for r in rows}
    if len(times) > 1:
        return plot_horizon(rows, path, title)
    return plot_time_accuracy(rows, path, title)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
