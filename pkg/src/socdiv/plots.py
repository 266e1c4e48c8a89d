"""Matplotlib figure rendering for the report paths (written next to the tables)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def plot_training_trajectory(records, path):
    """Losses, validation recall and user-friend similarity over epochs."""
    epochs = [r.epoch for r in records]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(7, 6), sharex=True)
    ax1.plot(epochs, [r.l_rec for r in records], label="ranking loss")
    if any(r.l_distill != 0 for r in records):
        ax1.plot(epochs, [r.l_distill for r in records], label="distill loss")
    ax1.set_ylabel("loss")
    ax1.legend()
    ax2.plot(epochs, [r.val_recall for r in records], label="validation recall")
    psi = [r.mean_psi for r in records]
    if not all(np.isnan(psi)):
        ax2b = ax2.twinx()
        ax2b.plot(epochs, psi, color="tab:red", label="mean user-friend cosine")
        ax2b.set_ylabel("mean cosine", color="tab:red")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("recall")
    ax2.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_beta_sweep(rows, path):
    """Recall and coverage as a function of the distillation weight."""
    betas = [r["beta"] for r in rows]
    fig, ax1 = plt.subplots(figsize=(6, 4))
    ax1.plot(betas, [r["recall"] for r in rows], "o-", label="recall")
    ax1.set_xscale("log")
    ax1.set_xlabel("distillation weight")
    ax1.set_ylabel("recall")
    ax2 = ax1.twinx()
    ax2.plot(betas, [r["coverage"] for r in rows], "s--", color="tab:orange",
             label="coverage")
    ax2.set_ylabel("coverage", color="tab:orange")
    fig.legend(loc="upper center", ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_compare_social(rows, path):
    """Grouped bars of recall and coverage for each backbone/variant pair."""
    labels = [f"{r['backbone']}\n{r['variant']}" for r in rows]
    x = np.arange(len(rows))
    width = 0.35
    fig, ax = plt.subplots(figsize=(1.2 * len(rows) + 2, 4))
    ax.bar(x - width / 2, [r["recall"] for r in rows], width, label="recall")
    ax.bar(x + width / 2, [r["coverage"] for r in rows], width, label="coverage")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylabel("fraction")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
