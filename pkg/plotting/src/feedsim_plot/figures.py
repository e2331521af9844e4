"""Render the figure set from a directory of sweep metrics CSVs.

Input files follow the simulator's metrics schema (one row per tick per run).
Each metric becomes one figure: algorithms are colored series, prevalence and
feed length combinations are facets, seeds are averaged with a min-max band,
and a dashed line marks the tick-24 ledger reset.  Every figure is written as
PNG and SVG plus a data table CSV holding exactly the plotted values.
"""

from __future__ import annotations

import logging
import os
from glob import glob

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import pandas as pd

log = logging.getLogger(__name__)

SCHEMA = ["tick", "algorithm", "feed_length", "prevalence", "seed", "b_local",
          "gini", "precision_at_10", "precision_at_30", "unique_edges_seen",
          "mean_likes_given", "mean_likes_received"]

# metric column -> y-axis label, log-scale flag
METRICS = {
    "b_local": ("local bias", False),
    "gini": ("Gini coefficient", False),
    "precision_at_10": ("precision@10", False),
    "precision_at_30": ("precision@30", False),
    "unique_edges_seen": ("unique edges seen (log)", True),
    "mean_likes_given": ("mean likes given", False),
    "mean_likes_received": ("mean likes received", False),
}

RESET_TICK = 24

_COLORS = plt.get_cmap("tab10").colors


class FigureError(Exception):
    pass


def load_runs(csv_dir) -> pd.DataFrame:
    """Read every run CSV in the directory into one frame; NA stays NaN."""
    paths = sorted(p for p in glob(os.path.join(csv_dir, "*.csv"))
                   if not os.path.basename(p).startswith("manifest"))
    if not paths:
        raise FigureError(f"no metrics CSV files in {csv_dir!r}")
    frames = []
    for p in paths:
        df = pd.read_csv(p, na_values=["NA"])
        missing = [c for c in SCHEMA if c not in df.columns]
        if missing:
            raise FigureError(f"{os.path.basename(p)}: missing column {missing[0]!r}")
        extra = [c for c in df.columns if c not in SCHEMA]
        if extra:
            raise FigureError(f"{os.path.basename(p)}: unexpected column {extra[0]!r}")
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def seed_bands(df: pd.DataFrame, metric: str) -> pd.DataFrame:
    """Mean and min-max band of one metric across seeds, per series point.

    NA ticks are dropped per seed before aggregation, so a tick's mean uses
    however many seeds have a defined value there.
    """
    rows = df.dropna(subset=[metric])
    grouped = rows.groupby(["algorithm", "prevalence", "feed_length", "tick"])[metric]
    out = grouped.agg(mean="mean", low="min", high="max", n_seeds="count").reset_index()
    return out


def render_figures(csv_dir, out_dir, metrics=None, reset_tick: int = RESET_TICK) -> list[str]:
    """Write PNG + SVG + data table per metric; returns the image paths."""
    wanted = list(METRICS) if metrics is None else list(metrics)
    unknown = [m for m in wanted if m not in METRICS]
    if unknown:
        raise FigureError(f"unknown metric {unknown[0]!r}; choose from {sorted(METRICS)}")
    df = load_runs(csv_dir)
    os.makedirs(out_dir, exist_ok=True)

    prevalences = sorted(df["prevalence"].unique())
    lengths = sorted(df["feed_length"].unique())
    algorithms = sorted(df["algorithm"].unique())
    colors = {a: _COLORS[i % len(_COLORS)] for i, a in enumerate(algorithms)}

    written = []
    for metric in wanted:
        ylabel, log_scale = METRICS[metric]
        bands = seed_bands(df, metric)
        bands.insert(0, "metric", metric)
        bands.to_csv(os.path.join(out_dir, f"{metric}_data.csv"), index=False)

        fig, axes = plt.subplots(len(prevalences), len(lengths), squeeze=False,
                                 figsize=(4.2 * len(lengths), 3.2 * len(prevalences)),
                                 sharex=True)
        for i, prev in enumerate(prevalences):
            for j, n in enumerate(lengths):
                ax = axes[i][j]
                facet = bands[(bands["prevalence"] == prev) & (bands["feed_length"] == n)]
                for algo in algorithms:
                    series = facet[facet["algorithm"] == algo].sort_values("tick")
                    if series.empty:
                        log.warning("no data for %s at prevalence %s feed length %s; skipped",
                                    algo, prev, n)
                        continue
                    ax.plot(series["tick"], series["mean"], label=algo,
                            color=colors[algo], linewidth=1.4)
                    ax.fill_between(series["tick"], series["low"], series["high"],
                                    color=colors[algo], alpha=0.15, linewidth=0)
                ax.axvline(reset_tick, linestyle="--", color="grey", linewidth=0.9)
                if log_scale:
                    ax.set_yscale("log")
                ax.set_title(f"P(X=1)={prev:g}, n={n}", fontsize=9)
                if i == len(prevalences) - 1:
                    ax.set_xlabel("tick")
                if j == 0:
                    ax.set_ylabel(ylabel)
        handles, labels = axes[0][0].get_legend_handles_labels()
        if handles:
            fig.legend(handles, labels, loc="lower center",
                       ncol=min(len(labels), 5), frameon=False, fontsize=8)
        fig.tight_layout(rect=(0, 0.06, 1, 1))
        for ext in ("png", "svg"):
            path = os.path.join(out_dir, f"{metric}.{ext}")
            fig.savefig(path, dpi=120)
            written.append(path)
        plt.close(fig)
    return written
