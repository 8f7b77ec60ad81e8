"""Matplotlib figures written next to the CSV/JSON outputs of the CLI."""

from __future__ import annotations

import os
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .ortho import ViewGrid  # noqa: E402
from .protocol import ExperimentReport, window_accuracies  # noqa: E402

PathLike = Union[str, os.PathLike]

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 120,
}


def _save(fig, path: PathLike) -> None:
    fig.savefig(path, metadata={"Software": None})
    plt.close(fig)


def plot_views(grids: Sequence[ViewGrid], path: PathLike, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(grids), figsize=(2.6 * len(grids), 2.8))
        for ax, grid in zip(np.atleast_1d(axes), grids):
            ax.imshow(grid.values, origin="lower", cmap="gray", vmin=0, vmax=1,
                      extent=(-1, 1, -1, 1), interpolation="nearest")
            ax.set_title(grid.view)
            ax.set_xticks([-1, 0, 1])
            ax.set_yticks([-1, 0, 1])
        if title:
            fig.suptitle(title)
        fig.tight_layout()
        _save(fig, path)


def plot_protocol_run(report: ExperimentReport, path: PathLike) -> None:
    """Windowed accuracy and known-category count against question index."""
    known, known_curve, window_x = 0, [], []
    asks = 0
    for event in report.events:
        if event.kind == "introduce":
            known += 1
        elif event.kind == "ask":
            asks += 1
            known_curve.append(known)
            if asks >= report.config.window_factor * known:
                window_x.append(asks)
    accs = window_accuracies(report.events, report.config.window_factor)
    with plt.rc_context(STYLE):
        fig, (top, bottom) = plt.subplots(2, 1, figsize=(6, 4.2), sharex=True)
        top.plot(window_x, accs, lw=1, color="C0")
        top.axhline(report.config.intro_threshold, color="C3", ls="--", lw=0.8, label="threshold")
        top.set_ylim(0, 1.05)
        top.set_ylabel("window accuracy")
        top.legend(loc="lower right", frameon=False)
        top.set_title(f"seed {report.config.seed}: {report.termination}, "
                      f"GCA {report.gca:.3f}, APA {report.apa:.3f}")
        bottom.step(np.arange(1, len(known_curve) + 1), known_curve, where="post", color="C2")
        bottom.set_ylabel("known categories")
        bottom.set_xlabel("question / correction iteration")
        fig.tight_layout()
        _save(fig, path)


def plot_summary(reports: Sequence[ExperimentReport], path: PathLike) -> None:
    seeds = [str(r.config.seed) for r in reports]
    x = np.arange(len(reports))
    with plt.rc_context(STYLE):
        fig, (left, right) = plt.subplots(1, 2, figsize=(7, 2.8))
        left.bar(x - 0.2, [r.gca for r in reports], 0.4, label="GCA")
        left.bar(x + 0.2, [r.apa for r in reports], 0.4, label="APA")
        left.set_ylim(0, 1.05)
        left.set_xticks(x, seeds)
        left.set_xlabel("seed")
        left.legend(frameon=False, loc="lower right")
        right.bar(x, [r.qc_iterations for r in reports], 0.6, color="C2")
        right.set_xticks(x, seeds)
        right.set_xlabel("seed")
        right.set_ylabel("QCI")
        fig.tight_layout()
        _save(fig, path)
