"""Matplotlib figure rendering for the CLI report paths.

Kept separate from the numeric core so library users never pay the
matplotlib import. All figures are written headlessly to files.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

PNG_METADATA = {"Software": "occufield"}


def save_field_figure(grid, scene, path, title=None):
    """Heatmap of the normalized prior with walls and source overlaid."""
    fig, ax = plt.subplots(figsize=(6, 5))
    x0, y0 = grid.origin
    extent = [x0, x0 + grid.width * grid.cell_size,
              y0, y0 + grid.height * grid.cell_size]
    im = ax.imshow(grid.values, origin="lower", extent=extent, cmap="viridis",
                   vmin=0.0, vmax=1.0, interpolation="nearest")
    for wall in scene.walls:
        ax.plot([wall.a[0], wall.b[0]], [wall.a[1], wall.b[1]], "w-", lw=2)
    ax.plot(scene.source.x, scene.source.y, "r*", ms=12)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="normalized prior")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def save_loss_figure(trace, path):
    """Training loss curve (log scale) from the (epoch, lr, loss) trace."""
    epochs = [row[0] for row in trace]
    losses = [row[2] for row in trace]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(epochs, losses, "-")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return path


def save_metrics_figure(reports, path):
    """Per-clip bars for each populated metric column."""
    from .metrics import METRIC_COLUMNS

    cols = [c for c in METRIC_COLUMNS
            if any(getattr(r, c) is not None for r in reports.values())]
    cols = cols or ["mag"]
    fig, axes = plt.subplots(len(cols), 1, figsize=(7, 2.2 * len(cols)),
                             squeeze=False)
    clip_ids = sorted(reports)
    xs = np.arange(len(clip_ids))
    for ax, col in zip(axes[:, 0], cols):
        vals = [getattr(reports[cid], col) for cid in clip_ids]
        vals = [v if v is not None else np.nan for v in vals]
        ax.bar(xs, vals, width=0.8)
        ax.set_ylabel(col)
        ax.set_xticks(xs[:: max(1, len(xs) // 20)])
    axes[-1, 0].set_xlabel("clip")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return path
