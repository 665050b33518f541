"""Figure rendering for report outputs.

Figures are written as PNG files next to the CSV reports.  Date metadata is
stripped so repeated runs with the same seed produce byte-identical images.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_SAVE_KW = {"dpi": 110, "metadata": {"Date": None}}


def convergence_figure(report, path):
    """Training loss, per-iteration regression discrepancy, and oracle errors
    against the iteration index."""
    ks = [r.k for r in report.records]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if ks:
        ax.semilogy(ks, [max(r.train_loss, 1e-300) for r in report.records],
                    marker="o", label="train loss")
        ax.semilogy(ks, [max(r.eps_k, 1e-300) for r in report.records],
                    marker="s", label="eps_k")
        sup = [r.sup_err for r in report.records]
        if np.all(np.isfinite(sup)):
            ax.semilogy(ks, np.maximum(sup, 1e-300), marker="^",
                        label="sup error vs oracle")
        l1 = [r.l1_mu_err for r in report.records]
        if np.all(np.isfinite(l1)):
            ax.semilogy(ks, np.maximum(l1, 1e-300), marker="v",
                        label="mean abs error vs oracle")
    ax.set_xlabel("iteration k")
    ax.set_ylabel("value (log scale)")
    ax.set_title("Fitted Q-iteration convergence")
    if ks:
        ax.legend(loc="best")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def bounds_figure(summary_rows, path):
    """Hold rate per bound, with the worst margin annotated."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    names = [row["name"] for row in summary_rows]
    rates = [row["hold_rate"] for row in summary_rows]
    if names:
        pos = np.arange(len(names))
        ax.bar(pos, rates, color="tab:blue")
        ax.set_xticks(pos)
        ax.set_xticklabels(names, rotation=20, ha="right")
        for p, row in zip(pos, summary_rows):
            if np.isfinite(row["worst_margin"]):
                ax.annotate(f"margin {row['worst_margin']:.3g}",
                            (p, min(row["hold_rate"], 1.0)),
                            ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.12)
    ax.set_ylabel("hold rate")
    ax.set_title("Bound check summary")
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
