"""Optional SVG line charts; matplotlib is imported lazily."""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "lateral-ukf"
    import matplotlib.pyplot as plt

    return plt


def save_channels(path, t, series: dict, title: str = "") -> None:
    """One panel per channel; `series` maps channel -> {label: values}."""
    plt = _pyplot()
    fig, axes = plt.subplots(len(series), 1, sharex=True, figsize=(9, 2.4 * len(series)))
    axes = np.atleast_1d(axes)
    for ax, (channel, lines) in zip(axes, series.items()):
        for label, (tt, values) in lines.items():
            ax.plot(tt, values, label=label, linewidth=1.0)
        ax.set_ylabel(channel)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper right", fontsize="small")
    axes[-1].set_xlabel("t [s]")
    if title:
        axes[0].set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
