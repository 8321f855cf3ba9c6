#!/usr/bin/env python3
"""Quiver plot of an exported field next to the oracle score.

Usage:
    python3 plot_field.py FIELD_CSV [ORACLE_CSV] [OUT_PNG]

Reads the CSVs written by `gradfield export-field` (columns
x1,x2,psi1,psi2[,phi]) and draws one panel per file. When a phi column is
present it is shown as a filled contour under the arrows.
"""

import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def load(path):
    with open(path) as f:
        rows = list(csv.DictReader(f))
    x1 = np.array([float(r["x1"]) for r in rows])
    x2 = np.array([float(r["x2"]) for r in rows])
    p1 = np.array([float(r["psi1"]) for r in rows])
    p2 = np.array([float(r["psi2"]) for r in rows])
    phi = None
    if rows and "phi" in rows[0]:
        phi = np.array([float(r["phi"]) for r in rows])
    return x1, x2, p1, p2, phi


def panel(ax, path, title):
    x1, x2, p1, p2, phi = load(path)
    n = int(round(len(x1) ** 0.5))
    if phi is not None and n * n == len(x1):
        g1 = x1.reshape(n, n)
        g2 = x2.reshape(n, n)
        ax.contourf(g1, g2, phi.reshape(n, n), levels=30, cmap="viridis", alpha=0.6)
    step = max(1, n // 20) if n * n == len(x1) else 1
    idx = np.arange(len(x1))
    if n * n == len(x1):
        keep = (idx // n % step == 0) & (idx % n % step == 0)
        idx = idx[keep]
    ax.quiver(x1[idx], x2[idx], p1[idx], p2[idx], color="black", width=0.003)
    ax.set_title(title)
    ax.set_aspect("equal")


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    field_csv = sys.argv[1]
    oracle_csv = sys.argv[2] if len(sys.argv) > 2 else None
    out = sys.argv[3] if len(sys.argv) > 3 else "field.png"

    ncols = 2 if oracle_csv else 1
    fig, axes = plt.subplots(1, ncols, figsize=(6 * ncols, 6), squeeze=False)
    panel(axes[0][0], field_csv, "learned field")
    if oracle_csv:
        panel(axes[0][1], oracle_csv, "analytic smoothed score")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
