"""Matplotlib figures rendered alongside report files.

All plotting targets files via the Agg backend, so figures work in
headless runs.  Each helper writes one PNG and closes its figure.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  backend must be pinned first


def loss_curve(loss_trace, path):
    """Per-epoch loss components from a training trace."""
    epochs, recon, contrast, total = [], [], [], []
    for e in loss_trace:
        if isinstance(e, dict):
            epochs.append(e["epoch"])
            recon.append(e["recon"])
            contrast.append(e["contrast"])
            total.append(e["total"])
        else:
            epochs.append(e.epoch)
            recon.append(e.recon)
            contrast.append(e.contrast)
            total.append(e.total)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, recon, label="reconstruction")
    ax.plot(epochs, contrast, label="contrastive")
    ax.plot(epochs, total, label="total")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def mof_bars(per_activity, path, initial=None):
    """Per-activity MoF bars; optional second series for the initial
    (pre-decoding) predictions."""
    names = sorted(per_activity)
    decoded = [per_activity[n]["mof"] for n in names]
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(names)), 4))
    positions = range(len(names))
    if initial is not None:
        init_vals = [initial[n]["mof"] for n in names]
        ax.bar([p - 0.2 for p in positions], init_vals, width=0.4, label="initial")
        ax.bar([p + 0.2 for p in positions], decoded, width=0.4, label="decoded")
        ax.legend()
    else:
        ax.bar(list(positions), decoded, width=0.6)
    ax.set_xticks(list(positions))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("MoF")
    ax.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def mof_vs_k(k_values, mof_values, path, true_k=None):
    """MoF as a function of the concept count."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(list(k_values), list(mof_values), marker="o")
    if true_k is not None:
        ax.axvline(true_k, linestyle="--", color="gray")
    ax.set_xlabel("concept count")
    ax.set_ylabel("MoF")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
