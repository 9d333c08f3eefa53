"""Matplotlib figures rendered next to the delimited reports.

Everything here draws to files through the Agg backend; no display needed.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_DPI = 110


def _save(fig, path: Path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)


def render_session_figures(records, render_records, summary, out_dir: Path) -> list[Path]:
    out_dir = Path(out_dir)
    written = []

    fig, ax = plt.subplots(figsize=(8, 3.2))
    for cam in sorted({r["cam"] for r in records}):
        rows = [r for r in records if r["cam"] == cam]
        ax.plot([r["frame"] for r in rows], [r["msg_bytes"] for r in rows], lw=0.9, label=f"camera {cam}")
        keyframes = [r for r in rows if r["keyframe"]]
        ax.plot([r["frame"] for r in keyframes], [r["msg_bytes"] for r in keyframes], "o", ms=3)
    ax.set_xlabel("frame")
    ax.set_ylabel("message bytes")
    ax.set_title("video message size per frame (dots: keyframes)")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper right", fontsize=8)
    path = out_dir / "fig_message_bytes.png"
    _save(fig, path)
    written.append(path)

    fig, ax = plt.subplots(figsize=(8, 3.2))
    frames = sorted({r["frame"] for r in records})
    completed = 0
    ratio = []
    per_frame = {f: [] for f in frames}
    for r in records:
        per_frame[r["frame"]].append(r["status"])
    for i, f in enumerate(frames):
        completed += sum(1 for s in per_frame[f] if s in ("decoded", "stale"))
        ratio.append(completed / ((i + 1) * max(1, len(per_frame[f]))))
    ax.plot(frames, ratio, lw=1.2)
    ax.axhline(summary["completion_ratio"], color="gray", ls="--", lw=0.8)
    ax.set_xlabel("frame")
    ax.set_ylabel("cumulative completion")
    ax.set_ylim(0, 1.02)
    ax.set_title(f"frame completion (final {summary['completion_ratio']:.3f})")
    ax.grid(alpha=0.3)
    path = out_dir / "fig_completion.png"
    _save(fig, path)
    written.append(path)

    if render_records:
        fig, ax = plt.subplots(figsize=(8, 3.2))
        ax.plot(
            [r["frame"] for r in render_records],
            [r["coverage"] for r in render_records],
            "o-",
            lw=1.0,
            ms=3,
        )
        ax.set_xlabel("frame")
        ax.set_ylabel("coverage")
        ax.set_ylim(0, 1.02)
        ax.set_title("silhouette coverage of rendered frames")
        ax.grid(alpha=0.3)
        path = out_dir / "fig_coverage.png"
        _save(fig, path)
        written.append(path)
    return written


def render_codec_bench_figure(rows, out_dir: Path) -> Path:
    """rows: dicts with frame, raw_bytes, depth_bytes, color_bytes."""
    out_dir = Path(out_dir)
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.2))
    frames = [r["frame"] for r in rows]
    axes[0].plot(frames, [r["depth_bytes"] for r in rows], lw=1.0, label="depth")
    axes[0].plot(frames, [r["color_bytes"] for r in rows], lw=1.0, label="color")
    axes[0].set_xlabel("frame")
    axes[0].set_ylabel("encoded bytes")
    axes[0].legend(fontsize=8)
    axes[0].grid(alpha=0.3)
    ratios = [r["raw_bytes"] / max(1, r["depth_bytes"] + r["color_bytes"]) for r in rows]
    axes[1].plot(frames, ratios, lw=1.0, color="tab:green")
    axes[1].set_xlabel("frame")
    axes[1].set_ylabel("compression ratio")
    axes[1].grid(alpha=0.3)
    fig.suptitle("codec benchmark")
    path = out_dir / "fig_bench_codec.png"
    _save(fig, path)
    return path


def render_fec_bench_figure(rows, out_dir: Path) -> Path:
    """rows: dicts with loss, success_rate."""
    out_dir = Path(out_dir)
    fig, ax = plt.subplots(figsize=(6, 3.6))
    ax.plot([r["loss"] for r in rows], [r["success_rate"] for r in rows], "o-", lw=1.2)
    ax.set_xlabel("packet loss probability")
    ax.set_ylabel("decode success rate")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.set_title("fountain decode success vs loss")
    path = out_dir / "fig_bench_fec.png"
    _save(fig, path)
    return path
