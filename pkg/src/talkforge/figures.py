"""Report figures rendered to files next to the delimited outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .audio import AudioClip, plot_decimate, write_plot_points


def waveform_figure(clip: AudioClip, png_path, txt_path=None,
                    max_points: int = 2000, title: str = "waveform") -> None:
    """Decimated waveform plot; optionally also writes the two-column text."""
    points = plot_decimate(clip, max_points)
    if txt_path is not None:
        write_plot_points(points, txt_path)
    t = [p[0] for p in points]
    a = [p[1] for p in points]
    fig, ax = plt.subplots(figsize=(8, 2.6))
    ax.plot(t, a, linewidth=0.6, color="#1f77b4")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("amplitude")
    ax.set_title(f"{title} ({clip.sample_rate} Hz, {clip.duration_seconds:.2f} s)")
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)


def histogram_figure(hists: np.ndarray, dists: np.ndarray, png_path) -> None:
    """Last-frame channel histograms plus the consecutive L1 distance curve."""
    fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(9, 3))
    for c, color in enumerate(("r", "g", "b")):
        ax0.plot(hists[-1, c], color=color, linewidth=0.8)
    ax0.set_title("last-frame channel histograms")
    ax0.set_xlabel("intensity")
    ax0.set_ylabel("pixels")
    ax1.plot(np.arange(1, len(dists) + 1), dists, linewidth=0.8, color="#444")
    ax1.set_title("consecutive-frame histogram L1")
    ax1.set_xlabel("transition")
    ax1.set_ylabel("L1 distance")
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)


def lipsync_figure(times, opening, envelope, r, png_path) -> None:
    fig, ax = plt.subplots(figsize=(8, 2.6))
    ax.plot(times, opening / max(np.max(opening), 1e-12), label="mouth opening",
            color="#d62728")
    ax.plot(times, envelope / max(np.max(envelope), 1e-12), label="RMS envelope",
            color="#1f77b4", alpha=0.7)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("normalized")
    ax.set_title(f"lip sync (Pearson r = {r:.3f})")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)


def summary_figure(rows: list, png_path) -> None:
    """Per-clip identity and lip-sync metric overview for a dataset."""
    clips = [r["clip"] for r in rows]
    ident = [r.get("identity_min") for r in rows]
    lip = [r.get("lip_sync_r") for r in rows]
    x = np.arange(len(clips))
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(max(6, len(clips) * 0.45), 5),
                                   sharex=True)
    ax0.bar(x, [v if v is not None else 0 for v in ident], color="#1f77b4")
    ax0.set_ylabel("identity min")
    ax0.set_ylim(0, 1.05)
    ax1.bar(x, [v if v is not None else 0 for v in lip], color="#d62728")
    ax1.set_ylabel("lip-sync r")
    ax1.set_ylim(0, 1.05)
    ax1.set_xticks(x)
    ax1.set_xticklabels(clips, rotation=90, fontsize=6)
    fig.tight_layout()
    fig.savefig(png_path, dpi=110)
    plt.close(fig)
