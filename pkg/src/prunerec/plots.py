"""Matplotlib figures rendered next to the delimited reports.

Figures are a convenience view of the CSV contents; the CSV stays the
artifact of record (figures carry no data the report lacks).
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def smoothness_figure(neighbor_l1, random_l1, neighbor_cos, random_cos, path: str) -> None:
    """Two-panel histogram: update-prediction error for neighbor vs random baselines."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    bins = 30
    ax1.hist(random_l1, bins=bins, alpha=0.6, label="random kept tokens", color="tab:orange")
    ax1.hist(neighbor_l1, bins=bins, alpha=0.6, label="nearest kept tokens", color="tab:blue")
    ax1.axvline(np.median(neighbor_l1), color="tab:blue", linestyle="--")
    ax1.axvline(np.median(random_l1), color="tab:orange", linestyle="--")
    ax1.set_xlabel("L1 distance to mean update")
    ax1.set_ylabel("count")
    ax1.legend()
    ax2.hist(random_cos, bins=bins, alpha=0.6, label="random kept tokens", color="tab:orange")
    ax2.hist(neighbor_cos, bins=bins, alpha=0.6, label="nearest kept tokens", color="tab:blue")
    ax2.set_xlabel("cosine similarity to mean update")
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def bounds_figure(per_token_err, bound_2b: float, bound_smooth: float, path: str) -> None:
    """Per-token reconstruction errors against the certified bound."""
    fig, ax = plt.subplots(figsize=(7, 4))
    err = np.asarray(per_token_err, dtype=float)
    ax.plot(np.arange(err.size), err, ".", label="per-token error")
    ax.axhline(bound_2b, color="tab:red", linestyle="--", label="2B(L+1) bound")
    ax.axhline(bound_smooth, color="tab:green", linestyle=":", label="smoothness bound")
    ax.set_xlabel("removed token (rank order)")
    ax.set_ylabel("l2 reconstruction error")
    ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def sweep_figure(axis: str, values, flops_ratio, max_err, path: str) -> None:
    """FLOPs ratio and worst reconstruction error across one swept knob."""
    fig, ax1 = plt.subplots(figsize=(7, 4))
    ax1.plot(values, flops_ratio, "o-", color="tab:blue", label="FLOPs ratio vs vanilla")
    ax1.set_xlabel(axis)
    ax1.set_ylabel("FLOPs ratio", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(values, max_err, "s--", color="tab:red", label="max reconstruction error")
    ax2.set_ylabel("max reconstruction error", color="tab:red")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
