"""Report figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

STYLE = {"font.size": 8, "axes.linewidth": 0.6, "lines.linewidth": 1.0}
PALETTE = ("#2b59c3", "#d1495b", "#2a9d3f", "#edae49", "#66458e", "#00798c")


def _figure(n_rows: int = 1, width: float = 6.0, height: float = 3.2):
    fig = Figure(figsize=(width, height * n_rows), dpi=110, facecolor="white")
    FigureCanvasAgg(fig)
    axes = [fig.add_subplot(n_rows, 1, i + 1) for i in range(n_rows)]
    for ax in axes:
        ax.tick_params(labelsize=STYLE["font.size"], width=0.5, length=2)
        for s in ax.spines.values():
            s.set_linewidth(STYLE["axes.linewidth"])
        ax.spines["top"].set_visible(False)
        ax.spines["right"].set_visible(False)
    return fig, axes


def _save(fig, path: str | Path) -> Path:
    fig.tight_layout()
    # no timestamp metadata, so reruns give identical files
    fig.savefig(path, format="png", metadata={"Software": None})
    return Path(path)


def plot_loss(history: Sequence[float], path: str | Path) -> Path:
    fig, (ax,) = _figure()
    h = np.maximum(np.asarray(history, float), 1e-300)
    ax.semilogy(np.arange(len(h)), h, color=PALETTE[0])
    ax.set_xlabel("Adam step", fontsize=8)
    ax.set_ylabel("shape loss (m$^2$)", fontsize=8)
    return _save(fig, path)


def plot_tracking(per_frame: np.ndarray, names: Sequence[str], fps: float, path: str | Path) -> Path:
    """Per-frame key-joint position error (T x J, meters)."""
    fig, (ax,) = _figure()
    t = np.arange(per_frame.shape[0]) / fps
    for j, name in enumerate(names):
        ax.plot(t, 100 * per_frame[:, j], color=PALETTE[j % len(PALETTE)],
                ls="-" if j < len(PALETTE) else "--", label=name)
    ax.set_xlabel("time (s)", fontsize=8)
    ax.set_ylabel("error (cm)", fontsize=8)
    ax.legend(fontsize=6, ncol=2, frameon=False)
    return _save(fig, path)


def plot_locomotion(cmds, path: str | Path) -> Path:
    fig, (a1, a2) = _figure(2, height=2.2)
    t = np.array([c.timestamp for c in cmds])
    a1.plot(t, [c.forward for c in cmds], color=PALETTE[0], label="forward")
    a1.plot(t, [c.lateral for c in cmds], color=PALETTE[1], label="lateral")
    a1.set_ylabel("velocity (m/s)", fontsize=8)
    a1.legend(fontsize=6, frameon=False)
    a2.plot(t, [c.yaw_rate for c in cmds], color=PALETTE[2])
    a2.set_ylabel("yaw rate (rad/s)", fontsize=8)
    a2.set_xlabel("time (s)", fontsize=8)
    return _save(fig, path)


def plot_wrists(traces: dict, fps: float, path: str | Path) -> Path:
    """Wrist height over time for each labelled trajectory, e.g. before/after editing."""
    fig, (ax,) = _figure()
    for k, (label, z) in enumerate(traces.items()):
        ax.plot(np.arange(len(z)) / fps, z, color=PALETTE[k % len(PALETTE)], label=label)
    ax.set_xlabel("time (s)", fontsize=8)
    ax.set_ylabel("wrist height (m)", fontsize=8)
    ax.legend(fontsize=6, frameon=False)
    return _save(fig, path)
