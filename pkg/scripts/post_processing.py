"""
post_processing.py
==================
Scan every run directory below --root (anything holding a summary.json
written by `hopeful train`), aggregate the per-seed metrics.csv files and
draw:

* learning curves per run (mean over seeds, min/max band)
* optimism-slope ablation bars from eta_<value> sibling directories
* the softmax-dynamics heatmap grid (agent x step x action)

Every figure gets a CSV twin next to it.
"""

# ---------- imports ---------------------------------------------------------
import argparse
import json
import re
import sys
from pathlib import Path

import numpy as np
import pandas as pd
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# ---------- configuration ---------------------------------------------------
SUMMARY_FILE     = "summary.json"
METRICS_FILE     = "metrics.csv"
TRAJECTORY_FILE  = "trajectory.csv"
ETA_DIR          = re.compile(r"^eta_(?P<eta>[-+0-9.eE]+)$")


# ---------- data loading ----------------------------------------------------
def find_runs(root: Path) -> list[Path]:
    return sorted(p.parent for p in root.rglob(SUMMARY_FILE))


def load_curves(run_dir: Path) -> pd.DataFrame:
    """All seeds' metrics.csv stacked, with a ``seed`` column."""
    frames = []
    for seed_dir in sorted(run_dir.glob("seed_*")):
        csv_path = seed_dir / METRICS_FILE
        if not csv_path.exists():
            print(f"  ⚠️  {csv_path} not found – skipping")
            continue
        df = pd.read_csv(csv_path)
        df["seed"] = int(seed_dir.name.split("_", 1)[1])
        frames.append(df)
    if not frames:
        return pd.DataFrame()
    return pd.concat(frames, ignore_index=True)


def curve_band(curves: pd.DataFrame, metric: str = "mean_return") -> pd.DataFrame:
    """mean / min / max of ``metric`` across seeds per iteration."""
    return (
        curves.groupby("iteration")[metric]
              .agg(["mean", "min", "max"])
              .reset_index()
    )


def ablation_table(root: Path) -> pd.DataFrame:
    """One row per eta_<value> directory: slope, mean greedy return, success."""
    rows = []
    for run_dir in find_runs(root):
        m = ETA_DIR.match(run_dir.name)
        if not m:
            continue
        data = json.loads((run_dir / SUMMARY_FILE).read_text(encoding="utf-8"))
        rows.append({
            "task":             data["task"],
            "eta":              float(m.group("eta")),
            "mean":             data.get("mean"),
            "std":              data.get("std"),
            "success_fraction": data.get("success_fraction"),
        })
    if not rows:
        return pd.DataFrame(columns=["task", "eta", "mean", "std", "success_fraction"])
    return pd.DataFrame(rows).sort_values(["task", "eta"], ascending=[True, False])


def dynamics_grid(trajectory: pd.DataFrame) -> dict[int, pd.DataFrame]:
    """agent -> (action x step) probability table."""
    return {
        agent: grp.pivot(index="action", columns="step", values="probability")
        for agent, grp in trajectory.groupby("agent")
    }


# ---------- plots -----------------------------------------------------------
def plot_learning_curve(band: pd.DataFrame, *, title: str, out: Path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(band["iteration"], band["mean"], lw=1.5, label="mean over seeds")
    ax.fill_between(band["iteration"], band["min"], band["max"], alpha=0.25,
                    label="min / max")
    ax.set_xlabel("Iteration")
    ax.set_ylabel("Episode return")
    ax.set_title(title)
    ax.legend(loc="lower right")
    plt.tight_layout()
    plt.savefig(out, dpi=150)
    plt.close(fig)
    band.to_csv(out.with_suffix(".csv"), index=False)
    print(f"  ✅ saved {out}")


def plot_ablation(table: pd.DataFrame, *, out: Path):
    tasks = list(table["task"].unique())
    fig, axes = plt.subplots(1, len(tasks), figsize=(5 * len(tasks), 4), squeeze=False)
    for ax, task in zip(axes[0], tasks):
        sub = table[table["task"] == task]
        labels = [f"{e:g}" for e in sub["eta"]]
        bars = ax.bar(labels, sub["mean"], yerr=sub["std"].fillna(0),
                      color=plt.cm.viridis(np.linspace(0.2, 0.9, len(sub))))
        ax.bar_label(bars, fmt="%g", padding=3)
        ax.set_xlabel("optimism slope eta")
        ax.set_ylabel("greedy return")
        ax.set_title(task)
    plt.tight_layout()
    plt.savefig(out, dpi=150)
    plt.close(fig)
    table.to_csv(out.with_suffix(".csv"), index=False)
    print(f"  ✅ saved {out}")


def plot_dynamics(frame: pd.DataFrame, *, title: str, out: Path):
    grids = dynamics_grid(frame)
    fig, axes = plt.subplots(1, len(grids), figsize=(5 * len(grids), 3),
                             sharey=True, constrained_layout=True)
    axes = np.atleast_1d(axes)
    for ax, (agent, grid) in zip(axes, grids.items()):
        mesh = ax.pcolormesh(
            np.arange(grid.shape[1] + 1), np.arange(grid.shape[0] + 1), grid.values,
            cmap="viridis", vmin=0.0, vmax=1.0, edgecolors="darkgray", linewidth=0.5,
        )
        ax.set_xticks(np.arange(grid.shape[1]) + 0.5)
        ax.set_xticklabels(grid.columns)
        ax.set_yticks(np.arange(grid.shape[0]) + 0.5)
        ax.set_yticklabels(grid.index)
        ax.set_xlabel("Step")
        ax.set_ylabel("Action")
        ax.set_title(f"Agent {agent}")
        ax.invert_yaxis()
    fig.suptitle(title)
    fig.colorbar(mesh, ax=axes.ravel().tolist(), label="probability", shrink=0.8)
    plt.savefig(out, bbox_inches="tight", dpi=150)
    plt.close(fig)
    frame.to_csv(out.with_suffix(".csv"), index=False)
    print(f"  ✅ saved {out}")


# ---------- main ------------------------------------------------------------
def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--root", default="runs", help="Folder that holds the run dirs")
    ap.add_argument("--out", default="plots", help="Where figures and CSV twins go")
    args = ap.parse_args(argv)

    root = Path(args.root).resolve()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = find_runs(root)
    if not runs:
        sys.exit(f"❌  no {SUMMARY_FILE} below {root}, aborting")
    print(f"--- Found {len(runs)} runs ---")

    for run_dir in runs:
        name = "__".join(run_dir.relative_to(root).parts) or run_dir.name
        trajectories = sorted(run_dir.glob(f"seed_*/{TRAJECTORY_FILE}"))
        if trajectories:
            plot_dynamics(pd.read_csv(trajectories[0]), title=name,
                          out=out_dir / f"dynamics_{name}.png")
            continue
        curves = load_curves(run_dir)
        if curves.empty:
            print(f"  ⚠️  {run_dir} has no metrics – skipping")
            continue
        plot_learning_curve(curve_band(curves), title=name,
                            out=out_dir / f"curve_{name}.png")

    table = ablation_table(root)
    if not table.empty:
        plot_ablation(table, out=out_dir / "eta_ablation.png")

    print("🎉  All plots generated")


if __name__ == "__main__":
    main()
