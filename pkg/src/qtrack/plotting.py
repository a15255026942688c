"""Evaluation report files: JSON, CSV tables and matplotlib figures.

Figures are drawn on bare ``Figure`` objects with the Agg canvas so no pyplot
state or display backend is involved.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import List

from matplotlib import rc_context
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .evaluation import EvalReport

STYLE = {
    "font.size": 10,
    "axes.labelsize": 11,
    "axes.titlesize": 11,
    "legend.fontsize": 8,
    "xtick.direction": "in",
    "ytick.direction": "in",
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _figure(width=5.0, height=None) -> Figure:
    golden_ratio = (math.sqrt(5) - 1.0) / 2.0
    fig = Figure(figsize=(width, height or width * golden_ratio), facecolor="w")
    FigureCanvasAgg(fig)
    return fig


def plot_ap_by_threshold(report: EvalReport, path) -> Path:
    with rc_context(STYLE):
        fig = _figure()
        ax = fig.add_subplot(1, 1, 1)
        thresholds = sorted(report.ap_per_threshold)
        ax.plot(thresholds, [report.ap_per_threshold[t] for t in thresholds], "o-", color="k")
        ax.axhline(report.ap, ls="--", color="0.5", lw=1, label=f"AP = {report.ap:.3f}")
        ax.set_xlabel("spatio-temporal IoU threshold")
        ax.set_ylabel("AP")
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
    return Path(path)


def plot_pr_curves(report: EvalReport, path, thresholds=(0.5, 0.75)) -> Path:
    with rc_context(STYLE):
        fig = _figure(width=5.0, height=4.0)
        ax = fig.add_subplot(1, 1, 1)
        styles = ["-", "--", ":", "-."]
        for (cls, thr), (recall, precision) in sorted(report.pr_curves.items()):
            if thr not in thresholds:
                continue
            ls = styles[list(thresholds).index(thr) % len(styles)]
            # step curve from recall 0 so single-point curves remain visible
            ax.step([0.0, *recall], [precision[0] if len(precision) else 0.0, *precision],
                    where="pre", ls=ls, label=f"class {cls} @ {thr:.2f}")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("interpolated precision")
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="lower left", frameon=False)
        fig.tight_layout()
        fig.savefig(path, dpi=150)
    return Path(path)


def write_report(report: EvalReport, out_dir) -> List[Path]:
    """Write report.json, per-threshold and per-class CSV tables, and two figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    path = out / "report.json"
    path.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n")
    written.append(path)

    path = out / "ap_by_threshold.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iou_threshold", "AP"])
        for t in sorted(report.ap_per_threshold):
            w.writerow([f"{t:.2f}", f"{report.ap_per_threshold[t]:.6f}"])
    written.append(path)

    path = out / "ap_by_class.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_id", "AP"])
        for c in sorted(report.ap_per_class):
            w.writerow([c, f"{report.ap_per_class[c]:.6f}"])
    written.append(path)

    written.append(plot_ap_by_threshold(report, out / "ap_by_threshold.png"))
    written.append(plot_pr_curves(report, out / "pr_curves.png"))
    return written
