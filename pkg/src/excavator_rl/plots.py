"""SVG figures: tracked paths and learning curves."""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import TraceRow  # noqa: E402

RC = {
    "svg.fonttype": "none",
    "svg.hashsalt": "excavator-rl",
    "path.simplify": False,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as exc:
        raise OSError(f"cannot write plot to {path}: {exc}") from exc
    finally:
        plt.close(fig)
    return path


def plot_trace(rows: Sequence[TraceRow], path, title: str = "") -> Path:
    """Target waypoints vs bucket-tip path in a 3D view."""
    if not rows:
        raise ValueError("nothing to plot: empty trace")
    tgt = np.array([(r.target_x, r.target_y, r.target_z) for r in rows])
    tip = np.array([(r.tip_x, r.tip_y, r.tip_z) for r in rows])
    with plt.rc_context(RC):
        fig = plt.figure(figsize=(5.5, 4.5))
        ax = fig.add_subplot(projection="3d")
        ax.plot(tgt[:, 0], tgt[:, 1], tgt[:, 2], color="0.55", lw=1.0, ls="--",
                marker="o", ms=2.5, label="target", gid="target-path")
        ax.plot(tip[:, 0], tip[:, 1], tip[:, 2], color="C3", lw=1.2,
                label="bucket tip", gid="actual-path")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
        ax.set_zlabel("z (m)")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", frameon=False)
        return _save(fig, path)


def plot_learning_curve(returns: Sequence[float], path, window: int = 50, title: str = "") -> Path:
    """Episode return with a trailing moving average."""
    y = np.asarray(returns, dtype=np.float64)
    if y.size == 0:
        raise ValueError("nothing to plot: empty training log")
    x = np.arange(y.size)
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        ax.plot(x, y, color="C0", lw=0.6, alpha=0.45, label="episode return", gid="returns")
        w = max(1, min(window, y.size))
        ma = np.convolve(y, np.ones(w) / w, mode="valid")
        ax.plot(x[w - 1:], ma, color="C0", lw=1.6, label=f"{w}-episode mean", gid="returns-mean")
        ax.set_xlabel("episode")
        ax.set_ylabel("return")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False)
        fig.tight_layout()
        return _save(fig, path)


def export_plot(data, path, **kwargs) -> Path:
    """Trace rows go to :func:`plot_trace`; anything else is treated as a
    training log (episode records or plain returns)."""
    data = list(data)
    if not data:
        raise ValueError("nothing to plot")
    if isinstance(data[0], TraceRow):
        return plot_trace(data, path, **kwargs)
    returns = [getattr(d, "ret", d) for d in data]
    return plot_learning_curve(returns, path, **kwargs)
