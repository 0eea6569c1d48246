"""Figure renderers for CLI reports.

All functions take data plus an output path, render with the Agg backend,
and return the path so report manifests can list the artifacts.  Nothing
here opens a window.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_waveforms(signals: np.ndarray, sample_rate: float, path) -> Path:
    """Stacked per-channel waveforms of a (channels, samples) array."""
    x = np.atleast_2d(np.asarray(signals))
    t = np.arange(x.shape[1]) / sample_rate
    fig, axes = plt.subplots(
        x.shape[0], 1, sharex=True, figsize=(8, 1.2 * x.shape[0] + 1), squeeze=False
    )
    for m, ax in enumerate(axes[:, 0]):
        ax.plot(t, x[m], linewidth=0.4)
        ax.set_ylabel(f"ch {m}", fontsize=8)
    axes[-1, 0].set_xlabel("time [s]")
    fig.suptitle("recorded channels")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_geometry_map(
    source_positions, image_positions, dims, offsets, array_positions, path
) -> Path:
    """Top view of the fitted room, sources, images, and microphones."""
    fig, ax = plt.subplots(figsize=(7, 6))
    ox, oy = offsets[0], offsets[1]
    ax.add_patch(
        plt.Rectangle((ox, oy), dims[0], dims[1], fill=False, edgecolor="k", label="fitted room")
    )
    arr = np.atleast_2d(array_positions)
    ax.scatter(arr[:, 0], arr[:, 1], marker="^", s=20, c="gray", label="microphones")
    src = np.atleast_2d(source_positions)
    ax.scatter(src[:, 0], src[:, 1], marker="*", s=120, c="tab:red", label="sources")
    for k, imgs in enumerate(image_positions):
        imgs = np.atleast_2d(imgs)
        if imgs.size:
            ax.scatter(imgs[:, 0], imgs[:, 1], s=25, alpha=0.7, label=f"images of source {k}")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_aspect("equal")
    ax.legend(fontsize=7)
    ax.set_title("estimated geometry (top view)")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_absorption_bars(coefficients: dict, path, truth: dict | None = None) -> Path:
    """Per-surface absorption/reflection coefficient bars."""
    names = list(coefficients)
    vals = [float(np.mean(coefficients[n])) for n in names]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.38 if truth else 0.6
    ax.bar(x, vals, width=width, label="estimated")
    if truth:
        ax.bar(x + width, [float(truth.get(n, 0.0)) for n in names], width=width, label="true")
    ax.set_xticks(x + (width / 2 if truth else 0.0))
    ax.set_xticklabels(names)
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("reflection coefficient")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_sir_bars(labels, values_db, path) -> Path:
    """Per-source SIR bars in dB."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = np.arange(len(labels))
    ax.bar(x, values_db)
    ax.set_xticks(x)
    ax.set_xticklabels(labels)
    ax.set_ylabel("SIR [dB]")
    ax.axhline(0.0, color="k", linewidth=0.5)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_coherence_scatter(uniform_mu, random_mu, path) -> Path:
    """Per-layout coherence of compact-uniform vs large-random arrays."""
    fig, ax = plt.subplots(figsize=(5, 5))
    u = np.asarray(uniform_mu)
    r = np.asarray(random_mu)
    ax.scatter(u, r, s=30)
    lim = [0.0, max(1.0, float(max(u.max(), r.max())) * 1.05)]
    ax.plot(lim, lim, "k--", linewidth=0.8)
    ax.set_xlabel("coherence, compact uniform array")
    ax.set_ylabel("coherence, wide random array")
    ax.set_title("points below the diagonal favor random placement")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
