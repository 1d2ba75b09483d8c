"""Aggregate result CSVs into summary tables and render figures.

The delimited files are the canonical record; figures are rendered next to
them as a convenience view.  Aggregates recompute mean and sample standard
deviation from the per-fold rows, so a summary can always be rebuilt from the
results directory alone.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Sequence

import numpy as np


def read_result_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def read_curve_csv(path) -> list[tuple[int, float]]:
    with open(path, newline="") as fh:
        return [(int(row["limit"]), float(row["mape"])) for row in csv.DictReader(fh)]


def collect_results(results_root) -> dict[tuple[str, str], list[dict[str, str]]]:
    """All per-fold rows under <root>/results, keyed by (scenario, method)."""
    results_dir = Path(results_root) / "results"
    collected: dict[tuple[str, str], list[dict[str, str]]] = {}
    for path in sorted(results_dir.glob("*.csv")):
        for row in read_result_csv(path):
            key = (row["scenario"], row["method"])
            collected.setdefault(key, []).append(row)
    if not collected:
        raise FileNotFoundError(f"no result CSVs under {results_dir}")
    return collected


def _agg(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(np.mean(arr)), std


def build_summary(results_root) -> dict[str, dict[str, dict[str, object]]]:
    summary: dict[str, dict[str, dict[str, object]]] = {}
    for (scenario, method), rows in collect_results(results_root).items():
        mape_mean, mape_std = _agg([float(r["mape"]) for r in rows])
        rmse_mean, rmse_std = _agg([float(r["rmse_last_cycle"]) for r in rows])
        summary.setdefault(scenario, {})[method] = {
            "mape_mean": mape_mean,
            "mape_std": mape_std,
            "rmse_last_cycle_mean": rmse_mean,
            "rmse_last_cycle_std": rmse_std,
            "n_records": len(rows),
            "eval_mode": rows[0]["eval_mode"],
        }
    return summary


def write_summary_files(summary: dict, out_root) -> tuple[Path, Path]:
    out = Path(out_root)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "summary.json"
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    csv_path = out / "summary.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scenario", "method", "mape_mean", "mape_std",
             "rmse_last_cycle_mean", "rmse_last_cycle_std", "n_records"]
        )
        for scenario in sorted(summary):
            for method in sorted(summary[scenario]):
                entry = summary[scenario][method]
                writer.writerow(
                    [scenario, method, repr(entry["mape_mean"]), repr(entry["mape_std"]),
                     repr(entry["rmse_last_cycle_mean"]), repr(entry["rmse_last_cycle_std"]),
                     entry["n_records"]]
                )
    return json_path, csv_path


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_metric_bars(summary: dict, out_root, metric: str = "mape") -> Path | None:
    """Grouped bar chart of <metric>_mean by scenario and method."""
    plt = _pyplot()
    scenarios = sorted(summary)
    methods = sorted({m for entry in summary.values() for m in entry})
    if not scenarios or not methods:
        return None
    mean_key = "mape_mean" if metric == "mape" else "rmse_last_cycle_mean"
    std_key = "mape_std" if metric == "mape" else "rmse_last_cycle_std"

    fig, ax = plt.subplots(figsize=(max(6.0, 0.9 * len(scenarios) * len(methods)), 4.0))
    x = np.arange(len(scenarios), dtype=np.float64)
    width = 0.8 / len(methods)
    for i, method in enumerate(methods):
        means = [summary[s].get(method, {}).get(mean_key, np.nan) for s in scenarios]
        stds = [summary[s].get(method, {}).get(std_key, 0.0) for s in scenarios]
        ax.bar(x + (i - (len(methods) - 1) / 2) * width, means, width,
               yerr=stds, capsize=2, label=method)
    ax.set_xticks(x)
    ax.set_xticklabels(scenarios, rotation=45, ha="right")
    ax.set_ylabel("fleet MAPE" if metric == "mape" else "last-cycle RMSE")
    ax.set_xlabel("scenario")
    ax.legend(fontsize="small")
    fig.tight_layout()
    out = Path(out_root) / "figures"
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{metric}_by_scenario.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_curve(curve: Sequence[tuple[int, float]], png_path, title: str) -> Path:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    if curve:
        limits, mapes = zip(*curve)
        ax.plot(limits, mapes, marker=".", linewidth=1.0)
    ax.set_xlabel("RUL limit (cycles)")
    ax.set_ylabel("fleet MAPE")
    ax.set_title(title)
    fig.tight_layout()
    png_path = Path(png_path)
    png_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(png_path, dpi=120)
    plt.close(fig)
    return png_path


def render_report(results_root, out_root=None) -> list[Path]:
    """Summary JSON/CSV plus figures for everything under a results root."""
    out_root = Path(out_root) if out_root is not None else Path(results_root)
    summary = build_summary(results_root)
    written = list(write_summary_files(summary, out_root))
    for metric in ("mape", "rmse"):
        path = render_metric_bars(summary, out_root, metric)
        if path is not None:
            written.append(path)
    curves_dir = Path(results_root) / "curves"
    if curves_dir.is_dir():
        for csv_path in sorted(curves_dir.glob("*.csv")):
            curve = read_curve_csv(csv_path)
            png = Path(out_root) / "figures" / f"curve_{csv_path.stem}.png"
            written.append(render_curve(curve, png, csv_path.stem))
    return written
