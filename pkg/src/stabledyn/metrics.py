"""Similarity and timing metrics for comparing rollouts with demonstrations.

The reproduction error treats two curves as piecewise-linear paths, resamples
both at the same number of points uniformly in normalized arc length, and sums
the areas of the triangles that tile the strip between them. It is symmetric
in the two curves, zero exactly for identical curves, and invariant under
rigid motions applied to both.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

RESAMPLE_POINTS = 1000


def resample_arc_length(curve: np.ndarray, n_points: int = RESAMPLE_POINTS) -> np.ndarray:
    """Resample a polyline at n_points uniform in normalized arc length.

    The first and last points are preserved exactly. A degenerate curve whose
    total length is zero resamples to n_points copies of its single location.
    """
    curve = np.atleast_2d(np.asarray(curve, dtype=float))
    if curve.shape[0] < 1:
        raise ValueError("curve must contain at least one point")
    if n_points < 2:
        raise ValueError(f"n_points must be >= 2, got {n_points}")
    if curve.shape[0] == 1:
        return np.repeat(curve, n_points, axis=0)
    seg = np.linalg.norm(np.diff(curve, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    total = arc[-1]
    if total == 0.0:
        return np.repeat(curve[:1], n_points, axis=0)
    s = np.linspace(0.0, total, n_points)
    out = np.column_stack(
        [np.interp(s, arc, curve[:, i]) for i in range(curve.shape[1])]
    )
    out[0] = curve[0]
    out[-1] = curve[-1]
    return out


def _triangle_areas(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Unsigned triangle areas for batches of vertex triples in any dimension.

    Uses the Gram-determinant form 0.5 * sqrt(|u|^2 |v|^2 - (u.v)^2) with
    u = b - a, v = c - a, which reduces to the usual cross-product magnitude
    in two and three dimensions.
    """
    u = b - a
    v = c - a
    uu = np.einsum("ni,ni->n", u, u)
    vv = np.einsum("ni,ni->n", v, v)
    uv = np.einsum("ni,ni->n", u, v)
    return 0.5 * np.sqrt(np.maximum(uu * vv - uv**2, 0.0))


def _strip_area(p: np.ndarray, q: np.ndarray) -> float:
    """Area of the strip between two equally-sampled polylines.

    Each quad (p_j, p_{j+1}, q_{j+1}, q_j) is split along a diagonal into two
    triangles. The split direction is arbitrary for non-planar or non-convex
    quads, so both diagonals are evaluated and averaged, which restores
    symmetry under swapping the two curves.
    """
    p0, p1 = p[:-1], p[1:]
    q0, q1 = q[:-1], q[1:]
    split_a = _triangle_areas(p0, p1, q0) + _triangle_areas(q0, q1, p1)
    split_b = _triangle_areas(p0, p1, q1) + _triangle_areas(q0, q1, p0)
    return float(0.5 * (split_a + split_b).sum())


def _as_curve(obj) -> np.ndarray:
    states = getattr(obj, "states", obj)
    return np.atleast_2d(np.asarray(states, dtype=float))


def reproduction_error(reference, rollout, n_points: int = RESAMPLE_POINTS) -> float:
    """Area between a demonstration and a rollout after arc-length resampling.

    Accepts Trajectory objects, rollout results, or plain (n, d) arrays. Both
    curves are resampled to ``n_points`` and the strip between them is tiled
    with triangles. Two parallel straight segments of length L separated by h
    give exactly L * h; identical curves give exactly 0.
    """
    ref = resample_arc_length(_as_curve(reference), n_points)
    rol = resample_arc_length(_as_curve(rollout), n_points)
    if ref.shape[1] != rol.shape[1]:
        raise ValueError(
            f"curves live in different dimensions: {ref.shape[1]} vs {rol.shape[1]}"
        )
    return _strip_area(ref, rol)


@dataclass(frozen=True)
class GridTiming:
    """Per-query control timing over a batch of states.

    ``seconds`` and ``nontrivial`` keep the raw per-query log: wall time of
    each stabilize_step call and whether it returned a nonzero control.
    ``mean_seconds`` averages only over nontrivial queries and is None when
    every control came out zero; ``mean_seconds_all`` averages everything.
    """

    seconds: np.ndarray
    nontrivial: np.ndarray
    mean_seconds: float | None
    mean_seconds_all: float
    n_nontrivial: int
    n_queries: int

    @classmethod
    def from_log(cls, seconds: np.ndarray, nontrivial: np.ndarray) -> GridTiming:
        seconds = np.asarray(seconds, dtype=float)
        nontrivial = np.asarray(nontrivial, dtype=bool)
        if seconds.shape != nontrivial.shape:
            raise ValueError("per-query logs must have matching lengths")
        n_solve = int(nontrivial.sum())
        return cls(
            seconds=seconds,
            nontrivial=nontrivial,
            mean_seconds=float(seconds[nontrivial].mean()) if n_solve else None,
            mean_seconds_all=float(seconds.mean()) if seconds.size else 0.0,
            n_nontrivial=n_solve,
            n_queries=int(seconds.size),
        )


def time_control_queries(stabilized, points: np.ndarray) -> GridTiming:
    """Time stabilize_step over each row of ``points``."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    seconds = np.empty(points.shape[0])
    nontrivial = np.empty(points.shape[0], dtype=bool)
    for i, x in enumerate(points):
        t0 = time.perf_counter()
        diag = stabilized.stabilize_step(x)
        seconds[i] = time.perf_counter() - t0
        nontrivial[i] = bool(np.any(diag.control != 0.0))
    return GridTiming.from_log(seconds, nontrivial)


def grid_points(bounding_box: np.ndarray, points_per_side: int = 100) -> np.ndarray:
    """Uniform grid over a (d, 2) box, flattened to (points_per_side**d, d)."""
    bounding_box = np.asarray(bounding_box, dtype=float)
    axes = [
        np.linspace(lo, hi, points_per_side) for lo, hi in bounding_box
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def grid_timing(stabilized, bounds: np.ndarray, points_per_side: int = 100) -> GridTiming:
    """Time the control solve over a uniform grid spanning ``bounds`` (d, 2)."""
    return time_control_queries(stabilized, grid_points(bounds, points_per_side))
