"""Render the harness CSV files as PNG figures. Not part of the tested surface.

usage: python scripts/plot_results.py <results dir>
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd


def convergence(path: Path) -> None:
    df = pd.read_csv(path)
    fig, ax = plt.subplots()
    for mode, g in df.groupby("mode"):
        ax.plot(g["sweep"], g["stat_err"], label=f"mode {mode} statistical")
        ax.plot(g["sweep"], g["opt_err"], "--", label=f"mode {mode} optimization")
    ax.set_xlabel("sweep")
    ax.set_ylabel("log relative error")
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=120)


def sweep(path: Path) -> None:
    df = pd.read_csv(path)
    df["err"] = df["fpr"] + df["fnr"]
    fig, ax = plt.subplots()
    for mode, g in df.groupby("mode"):
        m = g.groupby("lambda")["err"].mean()
        ax.semilogx(m.index, m.values, marker="o", label=f"mode {mode}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("FPR + FNR (mean over seeds)")
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=120)


def mismatch(path: Path) -> None:
    df = pd.read_csv(path)
    fig, ax = plt.subplots()
    for mode, g in df.groupby("mode"):
        m = g.groupby("lambda")["mcc"].mean()
        ax.semilogx(m.index, m.values, marker="o", label=f"mode {mode}")
    ax.set_title(f"generator {df['generator'].iloc[0]}")
    ax.set_xlabel("lambda")
    ax.set_ylabel("MCC (mean over seeds)")
    ax.legend()
    fig.savefig(path.with_suffix(".png"), dpi=120)


def main() -> None:
    root = Path(sys.argv[1])
    for path in sorted(root.glob("*.csv")):
        if path.name.startswith("convergence_") and not path.name.startswith("convergence_w_"):
            convergence(path)
        elif path.name == "lambda_sweep.csv":
            sweep(path)
        elif path.name == "mismatch.csv":
            mismatch(path)


if __name__ == "__main__":
    main()
