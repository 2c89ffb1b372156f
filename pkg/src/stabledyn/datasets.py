"""Synthetic handwriting-style demonstration shapes.

Each shape is a family of smooth planar demonstrations that end next to (but
not exactly at) the origin, mimicking recorded pen strokes. The S shape is
deliberately adversarial to quadratic-style Lyapunov candidates: along its
middle stretch the state moves *away* from the origin for a while, so any
candidate whose sublevel sets are star-shaped around the origin must increase
along the motion there.

Demonstrations are generated deterministically from a seed: each demo applies
a small rotation, scaling, and smooth bending to the shape's anchor polyline
and ends at its own endpoint near the origin (distinct endpoints keep the
pooled pair set free of duplicate rows).
"""

from __future__ import annotations

import zlib
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .trajectory import Trajectory, save_trajectory_csv

# Anchor polylines, traced start-to-end; the final anchor is replaced by a
# per-demo endpoint near the origin.
_SHAPES: dict[str, list[tuple[float, float]]] = {
    # Distance to origin along the anchors: 45, 41, 32, 21, 16, 24, 31, 26,
    # 13, 4.5 — the rebound from 16 up to 31 is the adversarial stretch.
    "SShape": [
        (-34.0, 30.0),
        (-22.0, 34.0),
        (-10.0, 30.0),
        (-6.0, 20.0),
        (-12.0, 10.0),
        (-24.0, 4.0),
        (-30.0, -6.0),
        (-22.0, -14.0),
        (-8.0, -10.0),
        (-2.0, -4.0),
        (-0.5, -0.8),
    ],
    "CShape": [
        (16.0, 30.0),
        (2.0, 36.0),
        (-12.0, 32.0),
        (-20.0, 20.0),
        (-22.0, 6.0),
        (-16.0, -8.0),
        (-4.0, -14.0),
        (8.0, -11.0),
        (0.8, -0.6),
    ],
    "JShape": [
        (24.0, 44.0),
        (20.0, 26.0),
        (17.0, 12.0),
        (12.0, -14.0),
        (0.0, -20.0),
        (-12.0, -14.0),
        (-16.0, -2.0),
        (-10.0, 6.0),
        (-0.6, 0.7),
    ],
}


def available_shapes() -> list[str]:
    """Names of the built-in shapes."""
    return sorted(_SHAPES)


def _chord_parameter(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    return arc / arc[-1]


def synthetic_shape(
    name: str,
    n_demos: int = 3,
    n_points: int = 250,
    seed: int = 0,
) -> list[Trajectory]:
    """Generate demonstrations for one shape.

    Each demonstration samples ``n_points`` states from a cubic spline through
    a perturbed copy of the shape's anchors. Perturbations are smooth and
    small (a couple of degrees of rotation, a few percent of scaling, a gentle
    bend that vanishes at the endpoint), so the demos look like repeated
    executions of the same motion. Endpoints sit within about one unit of the
    origin, each demo at a different spot.
    """
    if name not in _SHAPES:
        raise ValueError(f"unknown shape {name!r}; available: {available_shapes()}")
    if n_demos < 1:
        raise ValueError(f"n_demos must be >= 1, got {n_demos}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    # crc32 keeps the per-shape stream stable across runs (str hash is salted).
    rng = np.random.default_rng(seed + (zlib.crc32(name.encode()) % (2**16)))
    base = np.asarray(_SHAPES[name], dtype=float)
    demos = []
    for i in range(n_demos):
        spread = (i - (n_demos - 1) / 2.0) / max((n_demos - 1) / 2.0, 1.0)  # in [-1, 1]
        angle = np.deg2rad(2.0 * spread + rng.normal(scale=0.3))
        scale = 1.0 + 0.04 * spread + rng.normal(scale=0.01)
        rot = np.array(
            [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
        )
        anchors = scale * base @ rot.T
        # Per-demo endpoint near the origin, never on it.
        end_angle = rng.uniform(0.0, 2.0 * np.pi)
        end_radius = 0.45 + 0.15 * i
        anchors[-1] = end_radius * np.array([np.cos(end_angle), np.sin(end_angle)])

        t = _chord_parameter(anchors)
        spline = CubicSpline(t, anchors, axis=0)
        s = np.linspace(0.0, 1.0, n_points)
        states = spline(s)

        # Smooth bend that fades to zero at the endpoint so the demo still
        # finishes where intended.
        amp = rng.uniform(0.3, 0.7, size=2)
        freq = rng.uniform(1.0, 2.0, size=2)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
        window = (1.0 - s)[:, None]
        states = states + window * amp * np.sin(2.0 * np.pi * freq * s[:, None] + phase)

        demos.append(Trajectory(states=states, name=f"{name.lower()}_demo_{i}"))
    return demos


def synthetic_contraction(
    n_demos: int = 3,
    n_points: int = 40,
    seed: int = 0,
) -> list[Trajectory]:
    """Demonstrations of a linear contraction x_{k+1} = A x_k.

    A is a rotation scaled by 0.85, so every demo spirals monotonically toward
    the origin and a common quadratic Lyapunov function exists. This is the
    easy counterpart to the handwriting shapes: every CLF family should track
    it with near-zero reproduction error.
    """
    if n_demos < 1:
        raise ValueError(f"n_demos must be >= 1, got {n_demos}")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    rng = np.random.default_rng(seed + (zlib.crc32(b"Contraction") % (2**16)))
    theta = np.deg2rad(12.0)
    step = 0.85 * np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    demos = []
    for i in range(n_demos):
        angle = 2.0 * np.pi * i / n_demos + rng.normal(scale=0.2)
        radius = 38.0 + 4.0 * rng.uniform(-1.0, 1.0)
        x = radius * np.array([np.cos(angle), np.sin(angle)])
        states = [x]
        for _ in range(n_points - 1):
            x = step @ x
            states.append(x)
        demos.append(
            Trajectory(states=np.array(states), name=f"contraction_demo_{i}")
        )
    return demos


def synthetic_dataset(
    out_dir: str | Path,
    shapes: list[str] | None = None,
    n_demos: int = 3,
    n_points: int = 250,
    seed: int = 0,
) -> Path:
    """Write shape subdirectories of demonstration CSVs under ``out_dir``.

    Layout: out_dir/<shape>/<demo>.csv, one file per demonstration — the
    layout the benchmark consumes. Returns ``out_dir``.
    """
    out_dir = Path(out_dir)
    for name in shapes if shapes is not None else available_shapes():
        for traj in synthetic_shape(name, n_demos=n_demos, n_points=n_points, seed=seed):
            save_trajectory_csv(traj, out_dir / name / f"{traj.name}.csv")
    return out_dir
