"""Demonstration trajectories and the supervision pairs derived from them.

A demonstration is an ordered sequence of states recorded from a discrete-time
motion (one row per time step). Training data for the dynamics model is the set
of consecutive-state pairs pooled over all demonstrations, optionally augmented
with the origin fixed point so the learned model has an equilibrium there.

All containers are immutable after construction and safe to share across
threads.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

# Two rows closer than this in every coordinate are treated as the same sample.
DUPLICATE_TOL = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trajectory:
    """One demonstration: an ordered sequence of d-dimensional states.

    Attributes:
        states: array of shape (n, d), n >= 2, all entries finite.
        name: text label, typically the source file stem.
    """

    states: np.ndarray
    name: str = ""

    def __post_init__(self) -> None:
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ValueError(
                f"trajectory '{self.name}': states must be a 2-D array, got shape {states.shape}"
            )
        if states.shape[0] < 2:
            raise ValueError(f"trajectory '{self.name}': shorter than 2 states")
        if states.shape[1] < 1:
            raise ValueError(f"trajectory '{self.name}': state dimension must be >= 1")
        if not np.all(np.isfinite(states)):
            bad = np.argwhere(~np.isfinite(states))[0]
            raise ValueError(
                f"trajectory '{self.name}': non-finite value at row {bad[0]}, column {bad[1]}"
            )
        object.__setattr__(self, "states", _readonly(states))

    def __len__(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def start(self) -> np.ndarray:
        return self.states[0]

    @property
    def end(self) -> np.ndarray:
        return self.states[-1]


@dataclass(frozen=True)
class PairSet:
    """Supervision pairs (x_k, x_{k+1}) pooled from demonstrations.

    Rows of ``inputs`` and rows of ``targets`` must each be pairwise distinct:
    the noise-free regression this data feeds interpolates exactly, and repeated
    samples make its kernel matrix singular. Duplicates are rejected at
    construction, never merged.

    Attributes:
        inputs: (M, d) array of states x_k.
        targets: (M, d) array of successor states x_{k+1}.
        augmented_origin: whether the trailing pair is the added (0, 0) fixed point.
    """

    inputs: np.ndarray
    targets: np.ndarray
    augmented_origin: bool = False

    def __post_init__(self) -> None:
        inputs = np.asarray(self.inputs, dtype=float)
        targets = np.asarray(self.targets, dtype=float)
        if inputs.ndim != 2 or targets.ndim != 2:
            raise ValueError("pair set inputs and targets must be 2-D arrays")
        if inputs.shape != targets.shape:
            raise ValueError(
                f"pair set inputs {inputs.shape} and targets {targets.shape} differ in shape"
            )
        if inputs.shape[0] < 1:
            raise ValueError("pair set must contain at least one pair")
        if not (np.all(np.isfinite(inputs)) and np.all(np.isfinite(targets))):
            raise ValueError("pair set contains non-finite values")
        _check_distinct_rows(inputs, "input")
        _check_distinct_rows(targets, "target")
        if self.augmented_origin:
            zero = np.all(np.abs(inputs) <= DUPLICATE_TOL, axis=1) & np.all(
                np.abs(targets) <= DUPLICATE_TOL, axis=1
            )
            if np.count_nonzero(zero) != 1:
                raise ValueError(
                    "augmented_origin is set but the (0, 0) pair is not present exactly once"
                )
        object.__setattr__(self, "inputs", _readonly(inputs))
        object.__setattr__(self, "targets", _readonly(targets))

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    @cached_property
    def fingerprint(self) -> str:
        """SHA-256 over the raw pair data; used to tie models to their training set."""
        h = hashlib.sha256()
        h.update(str(self.inputs.shape).encode())
        h.update(np.ascontiguousarray(self.inputs).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()

    def diameter(self) -> float:
        """Largest pairwise distance among all states appearing in the pair set."""
        pts = np.vstack([self.inputs, self.targets])
        diff = pts[:, None, :] - pts[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=2)).max())

    def bounding_box(self, margin: float = 0.0) -> np.ndarray:
        """(d, 2) array of [low, high] per dimension over inputs and targets."""
        pts = np.vstack([self.inputs, self.targets])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        pad = margin * np.maximum(hi - lo, 1.0)
        return np.column_stack([lo - pad, hi + pad])


def _check_distinct_rows(rows: np.ndarray, kind: str) -> None:
    m = rows.shape[0]
    if m < 2:
        return
    # Chebyshev distance <= tol in every coordinate means a collision.
    close = np.all(np.abs(rows[:, None, :] - rows[None, :, :]) <= DUPLICATE_TOL, axis=2)
    close[np.diag_indices(m)] = False
    if close.any():
        i, j = np.argwhere(close)[0]
        raise ValueError(
            f"duplicate {kind} rows {i} and {j}: {rows[i].tolist()} vs {rows[j].tolist()} "
            f"(within {DUPLICATE_TOL} per coordinate); the noise-free model requires "
            f"distinct samples"
        )


def load_trajectory_csv(path: str | Path) -> Trajectory:
    """Read one demonstration from a CSV file.

    One row per time step, d comma-separated decimal columns. Lines starting
    with '#' are treated as header/comment lines and skipped.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"trajectory file not found: {path}")
    rows: list[list[float]] = []
    width: int | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c.strip() for c in text.split(",")]
            try:
                values = [float(c) for c in cells]
            except ValueError as exc:
                raise ValueError(f"{path}, row {lineno}: non-numeric cell ({exc})") from None
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}, row {lineno}: non-finite value")
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(
                    f"{path}, row {lineno}: expected {width} columns, got {len(values)}"
                )
            rows.append(values)
    if len(rows) < 2:
        raise ValueError(f"{path}: trajectory shorter than 2 states")
    return Trajectory(states=np.array(rows, dtype=float), name=path.stem)


def load_dataset(path: str | Path, pattern: str = "*.csv") -> list[Trajectory]:
    """Load every demonstration file in a directory (one trajectory per file)."""
    path = Path(path)
    if not path.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {path}")
    files = sorted(path.glob(pattern))
    if not files:
        raise FileNotFoundError(f"no '{pattern}' files in {path}")
    trajectories = [load_trajectory_csv(f) for f in files]
    dims = {t.dim for t in trajectories}
    if len(dims) > 1:
        raise ValueError(f"{path}: trajectories disagree on state dimension: {sorted(dims)}")
    return trajectories


def save_trajectory_csv(traj: Trajectory, path: str | Path) -> Path:
    """Write a demonstration as CSV with a comment header naming the columns."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "# " + ",".join(f"x{i + 1}" for i in range(traj.dim))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for row in traj.states:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def downsample(traj: Trajectory, factor: int) -> Trajectory:
    """Keep every ``factor``-th state starting at index 0, plus the final state.

    The recorded endpoint is always retained so each demonstration still ends
    where it was demonstrated to end.
    """
    if factor < 1:
        raise ValueError(f"downsample factor must be >= 1, got {factor}")
    n = len(traj)
    if factor > n - 1:
        raise ValueError(f"downsample factor {factor} exceeds trajectory length {n} - 1")
    idx = list(range(0, n, factor))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    return Trajectory(states=traj.states[idx].copy(), name=traj.name)


def to_pairs(trajectories: list[Trajectory], augment_origin: bool = True) -> PairSet:
    """Pool consecutive-state pairs from all demonstrations into one PairSet.

    With ``augment_origin`` the fixed-point pair (0, 0) is appended, which pins
    an equilibrium of the learned model at the origin. Duplicate rows anywhere
    in the pooled set raise (see PairSet).
    """
    if not trajectories:
        raise ValueError("to_pairs requires at least one trajectory")
    dims = {t.dim for t in trajectories}
    if len(dims) > 1:
        raise ValueError(f"trajectories disagree on state dimension: {sorted(dims)}")
    inputs = np.vstack([t.states[:-1] for t in trajectories])
    targets = np.vstack([t.states[1:] for t in trajectories])
    if augment_origin:
        zero = np.zeros((1, inputs.shape[1]))
        inputs = np.vstack([inputs, zero])
        targets = np.vstack([targets, zero])
    return PairSet(inputs=inputs, targets=targets, augmented_origin=augment_origin)
