"""S1: the plot pipeline renders the full figure set from a desk-sweep output
directory, and the exported data tables match independently recomputed
per-tick seed means to 1e-9.

If FEEDSIM_SWEEP_DIR points at a real sweep output (e.g. exported by the
simulator's acceptance suite), that is used; otherwise a schema-identical
three-seed fixture sweep stands in, so this suite is runnable on its own.
"""

import os

import pandas as pd
import pytest

from feedsim_plot import METRICS, load_runs
from feedsim_plot.cli import main as cli_main

from test_figures import write_run


@pytest.fixture
def sweep_source(tmp_path):
    env = os.environ.get("FEEDSIM_SWEEP_DIR")
    if env and os.path.isdir(env) and any(n.endswith(".csv") for n in os.listdir(env)):
        return env
    d = tmp_path / "fixture_sweep"
    d.mkdir()
    for algo in ("random", "chronological", "ncf", "widedeep", "minimize_rho"):
        for seed in (1, 2, 3):
            write_run(d / f"{algo}_p0.15_n30_s{seed}.csv", algo, 0.15, 30, seed)
    return str(d)


def test_s1_plot_pipeline(sweep_source, tmp_path):
    out = tmp_path / "figures"
    assert cli_main(["--in", sweep_source, "--out", str(out)]) == 0

    images = [n for n in os.listdir(out) if n.endswith(".png")]
    assert sorted(images) == sorted(f"{m}.png" for m in METRICS)
    assert all((out / f"{m}.svg").exists() for m in METRICS)

    raw = load_runs(sweep_source)
    worst = 0.0
    for metric in METRICS:
        table = pd.read_csv(out / f"{metric}_data.csv")
        assert not table.empty
        for _, row in table.iterrows():
            sel = raw[(raw["algorithm"] == row["algorithm"])
                      & (raw["prevalence"] == row["prevalence"])
                      & (raw["feed_length"] == row["feed_length"])
                      & (raw["tick"] == row["tick"])][metric].dropna()
            worst = max(worst, abs(sel.mean() - row["mean"]))
            assert abs(sel.mean() - row["mean"]) <= 1e-9
    print(f"\nS1 PASS: 7 figures emitted; data tables match recomputed seed means "
          f"(max deviation {worst:.2e}) from {sweep_source}")
