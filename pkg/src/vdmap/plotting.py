"""Report figures, rendered to files with the non-interactive Agg backend."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
    "svg.hashsalt": "vdmap",
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, metadata={"Software": None} if str(path).endswith(".png") else None)
    plt.close(fig)
    return path


def plot_comparison(reports, path):
    """Element counts (log scale) and RMSE per method, side by side."""
    with plt.rc_context(STYLE):
        fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(8, 3.2))
        names = [r.method for r in reports]
        x = np.arange(len(names))
        ax0.bar(x, [max(r.element_count, 1) for r in reports], color="0.45")
        ax0.set_yscale("log")
        ax0.set_xticks(x, names, rotation=30, ha="right")
        ax0.set_ylabel("elements")
        rmse = [np.nan if r.rmse_mm is None else r.rmse_mm for r in reports]
        ax1.bar(x, rmse, color="tab:blue")
        ax1.set_xticks(x, names, rotation=30, ha="right")
        ax1.set_ylabel("RMSE [mm]")
        return _save(fig, path)


def plot_error_histogram(distances_m, path, label="model"):
    """Histogram of nearest-neighbor errors in millimeters."""
    d = np.asarray(distances_m, dtype=float) * 1e3
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.hist(d, bins=60, color="0.4")
        rmse = float(np.sqrt(np.mean(d * d))) if len(d) else float("nan")
        ax.axvline(rmse, color="tab:red", lw=1, label=f"RMSE {rmse:.1f} mm")
        ax.set_xlabel("distance to reference [mm]")
        ax.set_ylabel("points")
        ax.set_title(label)
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_size_vs_depth(depth, sigma_max, path, bin_width=0.5):
    """Mean ellipsoid major-axis sigma per depth bin."""
    depth = np.asarray(depth, dtype=float)
    sigma_max = np.asarray(sigma_max, dtype=float)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        ax.scatter(depth, sigma_max * 1e3, s=1, color="0.7", rasterized=True)
        if len(depth):
            edges = np.arange(np.floor(depth.min()), depth.max() + bin_width, bin_width)
            idx = np.digitize(depth, edges)
            centers, means = [], []
            for k in np.unique(idx):
                centers.append(depth[idx == k].mean())
                means.append(sigma_max[idx == k].mean() * 1e3)
            ax.plot(centers, means, "o-", color="tab:red", ms=3)
        ax.set_xlabel("depth [m]")
        ax.set_ylabel(r"$\sqrt{\lambda_{max}}$ [mm]")
        return _save(fig, path)
