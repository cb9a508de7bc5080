"""Stick-figure and loss-curve rendering (matplotlib, headless)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .motion import SkeletonSpec, forward_kinematics, upper_body_skeleton  # noqa: E402


def _draw(ax, joints, parents, color="k"):
    for j, p in enumerate(parents):
        if p >= 0:
            ax.plot([joints[p, 0], joints[j, 0]], [joints[p, 1], joints[j, 1]], color=color, lw=2)
    ax.scatter(joints[:, 0], joints[:, 1], s=6, color=color)
    ax.set_aspect("equal")
    ax.axis("off")


def _limits(positions):
    lo, hi = positions[..., :2].min(axis=(0, 1)), positions[..., :2].max(axis=(0, 1))
    pad = 0.1 * float(np.max(hi - lo) + 1e-6)
    return (lo[0] - pad, hi[0] + pad), (lo[1] - pad, hi[1] + pad)


def render_keyframes(frames, path, skeleton: SkeletonSpec | None = None, n_keys=6, title=None):
    """Front view (x, y) of ``n_keys`` evenly spaced frames side by side."""
    skeleton = skeleton or upper_body_skeleton()
    pos = forward_kinematics(np.asarray(frames, dtype=np.float64), skeleton)
    keys = np.linspace(0, len(pos) - 1, n_keys).round().astype(int)
    xlim, ylim = _limits(pos)
    fig, axes = plt.subplots(1, n_keys, figsize=(2 * n_keys, 2.6))
    for ax, k in zip(np.atleast_1d(axes), keys):
        _draw(ax, pos[k], skeleton.parents)
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        ax.set_title(f"frame {k}", fontsize=8)
    if title:
        fig.suptitle(title, fontsize=9)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=80)
    plt.close(fig)
    return path


def render_sequence(frames, out_dir, skeleton: SkeletonSpec | None = None, every=1):
    """One PNG per rendered frame; returns the written paths."""
    skeleton = skeleton or upper_body_skeleton()
    pos = forward_kinematics(np.asarray(frames, dtype=np.float64), skeleton)
    xlim, ylim = _limits(pos)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(2.5, 2.5))
    paths = []
    for k in range(0, len(pos), every):
        ax.clear()
        _draw(ax, pos[k], skeleton.parents)
        ax.set_xlim(*xlim)
        ax.set_ylim(*ylim)
        p = out_dir / f"frame_{k:04d}.png"
        fig.savefig(p, dpi=60)
        paths.append(p)
    plt.close(fig)
    return paths


def plot_loss_curves(history, path, names=None):
    """One panel per loss component against the generator step."""
    names = names or [k for k in history[0] if k not in ("step", "epoch")]
    steps = np.array([h["step"] for h in history])
    fig, axes = plt.subplots(len(names), 1, figsize=(6, 1.6 * len(names)), sharex=True)
    for ax, name in zip(np.atleast_1d(axes), names):
        ax.plot(steps, [h[name] for h in history], lw=1)
        ax.set_ylabel(name, fontsize=8)
    np.atleast_1d(axes)[-1].set_xlabel("step")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=80)
    plt.close(fig)
    return path
