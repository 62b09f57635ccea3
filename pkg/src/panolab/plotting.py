"""Figure rendering for reports.

Everything draws through the Agg backend and saves atomically, so the CLI
can run headless and reruns stay byte-stable. Each function takes already
computed results; nothing here recomputes metrics.
"""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .media_io import atomic_write_bytes

_PNG_META = {"Software": "panolab"}


def _save(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", dpi=110, metadata=_PNG_META)
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def seam_figure(per_frame, mean: float, path) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    frames = np.arange(len(per_frame))
    ax.plot(frames, per_frame, marker="o", lw=1.2, color="#2a6f97")
    ax.axhline(mean, color="#d1495b", lw=1.0, ls="--", label=f"mean {mean:.4f}")
    ax.set_xlabel("frame")
    ax.set_ylabel("seam correlation")
    ax.set_title("Left/right seam consistency")
    ax.legend(loc="lower right")
    fig.tight_layout()
    _save(fig, path)


def motion_figure(direction_means: dict, per_pair: dict, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.6))
    names = list(direction_means)
    ax1.bar(names, [direction_means[n] for n in names], color="#2a6f97")
    ax1.set_ylabel("mean flow magnitude (px)")
    ax1.set_title("Cardinal motion means")
    for name in names:
        ax2.plot(per_pair[name], marker=".", label=name)
    ax2.set_xlabel("frame pair")
    ax2.set_ylabel("mean flow magnitude (px)")
    ax2.set_title("Per-pair motion")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def pose_stats_figure(stats, path) -> None:
    labels = [row[0] for row in stats]
    means = [row[1] for row in stats]
    stds = [row[2] for row in stats]
    fig, ax = plt.subplots(figsize=(7.2, 3.8))
    x = np.arange(len(labels))
    ax.bar(x, means, yerr=stds, capsize=4, color="#2a6f97", ecolor="#d1495b")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("mean with sample std")
    ax.set_title("Camera trajectory statistics")
    fig.tight_layout()
    _save(fig, path)


def rank_margins_figure(report: dict, path) -> None:
    combos = report["combos"]
    labels = [f"{'x'.join(str(d) for d in c['dims'])}/{c['activation']}/r{c['rank']}"
              for c in combos]
    margins = [max(c["worst_margin"], 1e-20) for c in combos]
    fig, ax = plt.subplots(figsize=(max(7.0, 0.45 * len(labels)), 4.0))
    ax.bar(np.arange(len(labels)), margins, color="#2a6f97")
    ax.axhline(report["rel_tol"], color="#d1495b", ls="--", lw=1.0,
               label=f"tolerance {report['rel_tol']:g}")
    ax.set_yscale("log")
    ax.set_xticks(np.arange(len(labels)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("worst excluded singular value ratio")
    ax.set_title("Rank bound margins by configuration")
    ax.legend()
    fig.tight_layout()
    _save(fig, path)


def coverage_figure(report: dict, path) -> None:
    per_rank = report["per_rank"]
    ranks = [r["lora_rank"] for r in per_rank]
    residuals = [max(r["fit_residual"], 1e-18) for r in per_rank]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.0, 3.8))
    ax1.plot(ranks, residuals, marker="o", color="#2a6f97")
    ax1.axhline(report["residual_threshold"], color="#d1495b", ls="--", lw=1.0,
                label=f"threshold {report['residual_threshold']:g}")
    ax1.set_yscale("log")
    ax1.set_xlabel("adapter rank")
    ax1.set_ylabel("worst target fit residual")
    ax1.set_title("Coverage residual vs rank")
    ax1.legend()
    for r in per_rank:
        angles = np.degrees(r["principal_angles_rad"])
        ax2.plot(np.arange(1, len(angles) + 1), angles, marker=".",
                 label=f"r={r['lora_rank']}")
    ax2.set_ylim(-3, 93)
    ax2.set_xlabel("angle index")
    ax2.set_ylabel("principal angle (deg)")
    ax2.set_title("Target subspace principal angles")
    ax2.legend(fontsize=8)
    fig.tight_layout()
    _save(fig, path)


def warp_preview_figure(frame_data: np.ndarray, mask: np.ndarray, coverage: float,
                        path) -> None:
    shown = frame_data if frame_data.shape[2] == 3 else np.repeat(frame_data, 3, axis=2)
    fig, ax = plt.subplots(figsize=(8.0, 4.2))
    ax.imshow(np.clip(shown, 0.0, 1.0))
    overlay = np.zeros(mask.shape + (4,))
    overlay[~mask] = (0.82, 0.29, 0.36, 0.35)
    ax.imshow(overlay)
    ax.set_title(f"Warped panorama, covered solid angle {coverage:.4f}")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    _save(fig, path)
