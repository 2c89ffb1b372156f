"""Figure rendering for benchmark and evaluation outputs.

Everything here draws to files (Agg backend); nothing opens a window. The
overview figure shows the square root of the Lyapunov candidate as a colormap
(level sets stay visible over the candidate's large dynamic range), the
stabilized displacement field as arrows, and the demonstrations next to their
stabilized rollouts. Figures are a rendering of the CSV grids written by the
benchmark, never a separate computation.
"""

from __future__ import annotations

import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be fixed first
import numpy as np  # noqa: E402

logger = logging.getLogger(__name__)

_QUIVER_ARROWS = 24


def render_shape_overview(
    path: str | Path,
    grid_shape: tuple[int, ...],
    points: np.ndarray,
    values: np.ndarray,
    displacement: np.ndarray | None,
    demos: list,
    rollouts: list[np.ndarray],
    title: str = "",
) -> Path | None:
    """Colormap of sqrt(value) + displacement arrows + demos and rollouts.

    ``displacement`` may be None to skip the arrow layer (evaluation runs do
    not sweep the control solve over the grid). Only planar (2-D) state
    spaces are drawn; higher dimensions are skipped with a log message
    because a single figure cannot show them faithfully.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[1] != 2:
        logger.info("skipping overview figure: state dimension %d", points.shape[1])
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    gx = points[:, 0].reshape(grid_shape)
    gy = points[:, 1].reshape(grid_shape)
    sq = np.sqrt(np.maximum(np.asarray(values, dtype=float), 0.0)).reshape(grid_shape)

    fig, ax = plt.subplots(figsize=(7.0, 6.0))
    mesh = ax.pcolormesh(gx, gy, sq, shading="auto", cmap="viridis", rasterized=True)
    fig.colorbar(mesh, ax=ax, label="sqrt(candidate value)")

    if displacement is not None:
        disp = np.asarray(displacement, dtype=float)
        # Thin the grid so the arrows stay readable.
        stride = max(1, grid_shape[0] // _QUIVER_ARROWS)
        sl = (slice(None, None, stride), slice(None, None, stride))
        ax.quiver(
            gx[sl],
            gy[sl],
            disp[:, 0].reshape(grid_shape)[sl],
            disp[:, 1].reshape(grid_shape)[sl],
            color="white",
            alpha=0.6,
            width=0.0022,
        )

    for i, demo in enumerate(demos):
        states = np.asarray(getattr(demo, "states", demo), dtype=float)
        ax.plot(
            states[:, 0],
            states[:, 1],
            "--",
            color="0.9",
            lw=1.4,
            label="demonstration" if i == 0 else None,
        )
    for i, rollout in enumerate(rollouts):
        rollout = np.asarray(rollout, dtype=float)
        ax.plot(
            rollout[:, 0],
            rollout[:, 1],
            color="C1",
            lw=1.4,
            label="stabilized rollout" if i == 0 else None,
        )
    ax.plot(0.0, 0.0, "k*", ms=11, label="origin")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", framealpha=0.85, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_report_summary(path: str | Path, report) -> Path | None:
    """Grouped bar chart of mean reproduction area per shape and CLF kind."""
    shapes = [s for s in report.shapes if s.error is None and s.cells]
    if not shapes:
        return None
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    kinds = list(report.config.clf_kinds)
    width = 0.8 / len(kinds)
    xs = np.arange(len(shapes))

    fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(shapes), 4.2))
    for j, kind in enumerate(kinds):
        heights = []
        for shape in shapes:
            cell = next((c for c in shape.cells if c.kind == kind), None)
            heights.append(cell.reproduction_mean if cell is not None else 0.0)
        ax.bar(xs + (j - (len(kinds) - 1) / 2) * width, heights, width, label=kind)
    ax.set_xticks(xs)
    ax.set_xticklabels([s.shape for s in shapes])
    ax.set_ylabel("mean reproduction area")
    ax.set_yscale("log")
    ax.legend(title="CLF")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
