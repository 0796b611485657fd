"""Figure rendering for run reports.

Every function takes in-memory results and writes one PNG through the
Agg backend; nothing here opens a window or touches global state.  The
delimited logs written by the command layer remain the canonical
record, figures are a reading aid next to them.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_MARKERS = ("o", "^", "s", "D", "v", "P", "X")


def _finish(fig, path) -> str:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def pca_2d(z: np.ndarray) -> np.ndarray:
    """Project rows onto the top two principal components."""
    z = np.asarray(z, dtype=np.float64)
    centered = z - z.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    k = min(2, vt.shape[0])
    out = centered @ vt[:k].T
    if k < 2:
        out = np.column_stack([out, np.zeros(len(out))])
    return out


def plot_loss_curves(records, path) -> str:
    """Objective components over epochs, checkpoint boundaries marked."""
    l_t, l_e, l_se, total, bounds = [], [], [], [], []
    for rec in records:
        for b in rec.epoch_losses:
            l_t.append(b.l_t)
            l_e.append(b.l_e)
            l_se.append(b.l_se)
            total.append(b.total)
        bounds.append(len(total))
    x = np.arange(1, len(total) + 1)
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(x, total, label="total", color="black", lw=1.6)
    ax.plot(x, l_t, label="triplet", lw=1.0)
    ax.plot(x, l_e, label="reconstruction", lw=1.0)
    ax.plot(x, l_se, label="similarity", lw=1.0)
    for edge in bounds[:-1]:
        ax.axvline(edge + 0.5, color="grey", lw=0.6, ls=":")
    ax.set_xlabel("epoch (all checkpoints)")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_silhouette_curve(initial: float, records, path) -> str:
    scores = [initial] + [rec.silhouette for rec in records]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(range(len(scores)), scores, marker="o")
    ax.set_xlabel("checkpoint (0 = untrained)")
    ax.set_ylabel("pooled silhouette")
    ax.set_ylim(min(-0.1, min(scores) - 0.05), 1.0)
    ax.grid(alpha=0.3)
    return _finish(fig, path)


def plot_embeddings(sets, path, max_points: int = 2000) -> str:
    """Pooled 2-D projection of several sensors' embeddings.

    One marker per sensor, one color per class; the projection is fitted
    on the pooled cloud so cross-sensor overlap is visible directly.
    """
    pooled = np.vstack([s.z for s in sets])
    coords = pca_2d(pooled)
    fig, ax = plt.subplots(figsize=(5.5, 5))
    offset = 0
    for i, s in enumerate(sets):
        xy = coords[offset:offset + s.n]
        offset += s.n
        keep = slice(None)
        if s.n > max_points:
            keep = np.linspace(0, s.n - 1, max_points).astype(int)
        ax.scatter(xy[keep, 0], xy[keep, 1], c=s.labels[keep], cmap="tab10",
                   marker=_MARKERS[i % len(_MARKERS)], s=12, alpha=0.6,
                   label=s.sensor_id, linewidths=0)
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.legend(title="sensor", fontsize=8)
    return _finish(fig, path)


def plot_knn_sweep(ks, accuracies: dict[str, list[float]], path) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    for label, acc in accuracies.items():
        ax.plot(ks, acc, marker="o", label=label)
    ax.set_xlabel("k")
    ax.set_ylabel("overall accuracy")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_ablation(rows: list[tuple[str, float]], path) -> str:
    """Horizontal silhouette bars, one per ablation cell."""
    labels = [r[0] for r in rows]
    values = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6.5, 0.35 * len(rows) + 1.2))
    y = np.arange(len(rows))
    ax.barh(y, values, color="steelblue")
    ax.set_yticks(y, labels, fontsize=7)
    ax.invert_yaxis()
    ax.set_xlabel("final pooled silhouette")
    ax.set_xlim(min(0.0, min(values) - 0.05), 1.0)
    return _finish(fig, path)


def plot_fold_mse(fold_mses, path) -> str:
    fold_mses = np.asarray(fold_mses, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    x = np.arange(1, len(fold_mses) + 1)
    ax.bar(x, fold_mses, color="steelblue", width=0.6)
    ax.axhline(fold_mses.mean(), color="black", lw=1.0, ls="--",
               label=f"mean {fold_mses.mean():.4g}")
    ax.set_xlabel("fold")
    ax.set_ylabel("held-out latent MSE")
    ax.set_xticks(x)
    ax.legend(fontsize=8)
    return _finish(fig, path)


def plot_mapping_curve(epoch_losses: list[tuple[float, float]], path) -> str:
    latent = [p[0] for p in epoch_losses]
    recon = [p[1] for p in epoch_losses]
    x = np.arange(1, len(latent) + 1)
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    ax.plot(x, latent, label="latent gap term")
    ax.plot(x, recon, label="reconstruction term")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    return _finish(fig, path)
