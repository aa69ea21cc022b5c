"""Render experiment CSVs to matplotlib figures saved next to the data.

The CSV stays the canonical output; figures are a convenience view of the
same rows: distortion curves with standard-error bars against the sweep
variable, plus the lower bound where it is defined.
"""

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

_SERIES = (
    # column, stderr column, label, line style
    ("D", "se_D", "D", "o-"),
    ("D_cs", "se_Dcs", "D_cs", "s--"),
    ("D_oracle", "se_Doracle", "oracle", "d:"),
    ("bound", None, "lower bound", "-."),
)


def read_rows(csv_path):
    with open(csv_path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        return [row for row in reader]


def _column(rows, name):
    if not rows or name not in rows[0]:
        return None
    vals = [float(r[name]) for r in rows]
    if all(math.isnan(v) for v in vals):
        return None
    return vals


def render_experiment_csv(csv_paths, out_path, xlabel="sweep", logx=True, logy=True):
    """Plot one or more experiment CSVs into a single figure file."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for path in csv_paths:
        rows = read_rows(path)
        if not rows:
            continue
        xs = [float(r["sweep"]) for r in rows]
        stem = Path(path).stem
        for col, se_col, label, style in _SERIES:
            ys = _column(rows, col)
            if ys is None:
                continue
            errs = _column(rows, se_col) if se_col else None
            name = f"{stem}: {label}" if len(csv_paths) > 1 else label
            if errs is not None:
                ax.errorbar(xs, ys, yerr=errs, fmt=style, ms=4, capsize=2, label=name)
            else:
                ax.plot(xs, ys, style, label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("MSE")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return Path(out_path)


def figure_path_for(csv_path):
    p = Path(csv_path)
    return p.with_suffix(".png")
