#!/usr/bin/env python3
"""Plot pipeline outputs: ROC sweep, group risk, and block-maxima spread.

Usage: python3 tools/plot_results.py <out_dir> [plot_dir]
"""

import csv
import json
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_csv(path):
    with open(path) as f:
        return list(csv.DictReader(f))


def plot_roc_sweep(out_dir, plot_dir):
    path = os.path.join(out_dir, "risk", "roc_sweep.csv")
    if not os.path.exists(path):
        return
    rows = [r for r in read_csv(path) if r["skipped"] == "0"]
    if not rows:
        return
    omegas = [float(r["omega"]) for r in rows]
    aucs = [float(r["auc"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(omegas, aucs, "o-")
    ax.axhline(0.5, color="gray", lw=0.8, ls="--")
    ax.set_xlabel("severity threshold (negated TTC, s)")
    ax.set_ylabel("ROC-AUC")
    ax.set_ylim(0.4, 1.02)
    ax.set_title("Classification accuracy across severity thresholds")
    fig.tight_layout()
    fig.savefig(os.path.join(plot_dir, "roc_sweep.png"), dpi=150)


def plot_group_cor(out_dir, plot_dir):
    path = os.path.join(out_dir, "risk", "cor_groups.csv")
    if not os.path.exists(path):
        return
    rows = read_csv(path)
    groups = [r["group_id"] for r in rows]
    cor = [float(r["cor"]) for r in rows]
    lo = [float(r["cor"]) - float(r["cor_lo"]) for r in rows]
    hi = [float(r["cor_hi"]) - float(r["cor"]) for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(groups, cor, yerr=[lo, hi], capsize=3, color="#4878a8")
    ax.set_xlabel("group")
    ax.set_ylabel("crash occurrence risk (events/s)")
    summary = os.path.join(out_dir, "risk", "cor_summary.json")
    if os.path.exists(summary):
        with open(summary) as f:
            doc = json.load(f)
        ax.set_title(f"Group risk at omega = {doc['omega']} "
                     f"(corridor total {doc['cf_total']:.4g})")
    fig.tight_layout()
    fig.savefig(os.path.join(plot_dir, "cor_groups.png"), dpi=150)


def plot_block_maxima(out_dir, plot_dir):
    for suffix in ("vv", "vi"):
        path = os.path.join(out_dir, f"blocks_{suffix}.csv")
        if not os.path.exists(path):
            continue
        rows = read_csv(path)
        if not rows:
            continue
        ttc = [-float(r["z"]) for r in rows]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.hist(ttc, bins=24, color="#a85448", edgecolor="white")
        ax.set_xlabel("block minimum 2D-TTC (s)")
        ax.set_ylabel("blocks")
        ax.set_title(f"Block maxima sample ({suffix.upper()}, n={len(rows)})")
        fig.tight_layout()
        fig.savefig(os.path.join(plot_dir, f"blocks_{suffix}.png"), dpi=150)


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        return 2
    out_dir = sys.argv[1]
    plot_dir = sys.argv[2] if len(sys.argv) > 2 else os.path.join(out_dir, "plots")
    os.makedirs(plot_dir, exist_ok=True)
    plot_roc_sweep(out_dir, plot_dir)
    plot_group_cor(out_dir, plot_dir)
    plot_block_maxima(out_dir, plot_dir)
    print(f"plots written to {plot_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
