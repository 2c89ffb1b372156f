"""Benchmark harness comparing CLF families on demonstration datasets.

For every shape subdirectory in a dataset this trains the GP dynamics once,
fits each configured Lyapunov candidate (nonparametric, weighted sum of
asymmetric quadratics, sum of squares), rolls the stabilized model out from
every demonstration start, and scores how closely the rollouts reproduce the
demonstrations, how long fitting took, and how long the per-query control
solve takes on a uniform state grid. Results are written as ``report.json``
plus a Markdown table, with per-rollout CSVs and field grids alongside.

A rollout that stops early (inside the stop radius) is closed with a straight
segment to the origin before the area metric is computed, so the remaining
tail of the demonstration is charged against that segment instead of being
truncated away.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import fit_baseline, hinge_loss
from .gp import DEFAULT_JITTER
from .gpssm import Gpssm, train_gpssm
from .metrics import (
    RESAMPLE_POINTS,
    GridTiming,
    grid_points,
    reproduction_error,
)
from .npclf import fit_np_clf
from .simulate import TERMINATION_RADIUS, SimulationResult, simulate
from .stabilizer import SolverConfig, StabilizedModel
from .trajectory import PairSet, Trajectory, downsample, load_dataset, to_pairs

logger = logging.getLogger(__name__)

CLF_KINDS = ("np", "wsaqf", "sos")

_EARLY_STOP_NOTE = (
    "rollouts that stop inside the stop radius are closed with a segment to "
    "the origin before the reproduction area is computed"
)
_TIMING_NOTE = (
    "control_time_ms averages only queries that returned a nonzero control; "
    "null means every grid query was trivial"
)


@dataclass(frozen=True)
class BenchmarkConfig:
    """Settings for :func:`run_benchmark` (and the CLI).

    ``grid_bounds`` overrides the per-shape bounding box (plus
    ``grid_margin``) when given; it is a (d, 2) array-like of [low, high]
    rows. ``dataset`` is only consulted by the CLI when no dataset argument
    is passed on the command line.
    """

    downsample_factor: int = 10
    clf_kinds: tuple[str, ...] = CLF_KINDS
    solver: SolverConfig = field(default_factory=SolverConfig)
    points_per_side: int = 100
    grid_margin: float = 0.25
    grid_bounds: tuple[tuple[float, float], ...] | None = None
    resample_points: int = RESAMPLE_POINTS
    stop_radius: float = 10.0
    max_steps: int = 1000
    seed: int = 0
    jitter: float = DEFAULT_JITTER
    figures: bool = True
    dataset: str | None = None

    def __post_init__(self) -> None:
        if self.downsample_factor < 1:
            raise ValueError(f"downsample_factor must be >= 1, got {self.downsample_factor}")
        unknown = [k for k in self.clf_kinds if k not in CLF_KINDS]
        if unknown:
            raise ValueError(f"unknown CLF kinds {unknown}; choose from {list(CLF_KINDS)}")
        if not self.clf_kinds:
            raise ValueError("clf_kinds must not be empty")
        if self.points_per_side < 2:
            raise ValueError(f"points_per_side must be >= 2, got {self.points_per_side}")
        if self.resample_points < 2:
            raise ValueError(f"resample_points must be >= 2, got {self.resample_points}")
        if self.grid_bounds is not None:
            bounds = tuple(tuple(float(v) for v in row) for row in self.grid_bounds)
            for row in bounds:
                if len(row) != 2 or not row[0] < row[1]:
                    raise ValueError(f"grid_bounds rows must be (low, high), got {row}")
            object.__setattr__(self, "grid_bounds", bounds)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "downsample_factor": self.downsample_factor,
            "clf_kinds": list(self.clf_kinds),
            "solver": self.solver.to_dict(),
            "grid": {
                "points_per_side": self.points_per_side,
                "margin": self.grid_margin,
                "bounds": None
                if self.grid_bounds is None
                else [list(row) for row in self.grid_bounds],
            },
            "resample_points": self.resample_points,
            "stop_radius": self.stop_radius,
            "max_steps": self.max_steps,
            "seed": self.seed,
            "jitter": self.jitter,
            "figures": self.figures,
        }

    @classmethod
    def from_dict(cls, data: dict) -> BenchmarkConfig:
        data = dict(data)
        kwargs: dict = {}
        grid = data.pop("grid", None)
        if grid is not None:
            grid = dict(grid)
            if "points_per_side" in grid:
                kwargs["points_per_side"] = int(grid.pop("points_per_side"))
            if "margin" in grid:
                kwargs["grid_margin"] = float(grid.pop("margin"))
            bounds = grid.pop("bounds", None)
            if bounds is not None:
                kwargs["grid_bounds"] = tuple(tuple(row) for row in bounds)
            if grid:
                raise ValueError(f"unknown grid settings: {sorted(grid)}")
        solver = data.pop("solver", None)
        if solver is not None:
            kwargs["solver"] = SolverConfig.from_dict(solver)
        if "clf_kinds" in data:
            kwargs["clf_kinds"] = tuple(data.pop("clf_kinds"))
        for key in (
            "dataset",
            "downsample_factor",
            "resample_points",
            "stop_radius",
            "max_steps",
            "seed",
            "jitter",
            "figures",
            "grid_margin",
            "points_per_side",
        ):
            if key in data:
                kwargs[key] = data.pop(key)
        if data:
            raise ValueError(f"unknown benchmark settings: {sorted(data)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class RolloutAssessment:
    """One stabilized rollout scored against the demonstration it reproduces."""

    demo_name: str
    result: SimulationResult
    reproduction_error: float

    def summary(self) -> dict:
        final = self.result.states[-1]
        return {
            "trajectory": self.demo_name,
            "termination": self.result.termination,
            "steps": int(len(self.result.controls)),
            "final_radius": float(np.linalg.norm(final)),
            "reproduction_error": self.reproduction_error,
        }


def closed_rollout_curve(result: SimulationResult) -> np.ndarray:
    """Rollout states, extended to the origin when the rollout stopped early."""
    states = result.states
    if result.termination == TERMINATION_RADIUS:
        states = np.vstack([states, np.zeros((1, states.shape[1]))])
    return states


def rollout_against_demos(
    stabilized: StabilizedModel,
    demos: list[Trajectory],
    config: BenchmarkConfig | None = None,
) -> list[RolloutAssessment]:
    """Simulate from each demonstration's start and score the reproduction."""
    config = config or BenchmarkConfig()
    out = []
    for demo in demos:
        result = simulate(
            stabilized,
            demo.states[0],
            max_steps=config.max_steps,
            stop_radius=config.stop_radius,
        )
        area = reproduction_error(
            demo, closed_rollout_curve(result), n_points=config.resample_points
        )
        out.append(
            RolloutAssessment(
                demo_name=demo.name, result=result, reproduction_error=area
            )
        )
    return out


@dataclass(frozen=True)
class GridSweep:
    """One stabilize_step evaluation per grid node, with everything retained."""

    points: np.ndarray
    next_states: np.ndarray
    controls: np.ndarray
    values: np.ndarray
    timing: GridTiming


def sweep_grid(stabilized: StabilizedModel, points: np.ndarray) -> GridSweep:
    """Run the control solve on every row of ``points``, timing each query."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = points.shape[0]
    next_states = np.empty_like(points)
    controls = np.empty_like(points)
    values = np.empty(n)
    seconds = np.empty(n)
    nontrivial = np.empty(n, dtype=bool)
    for i, x in enumerate(points):
        t0 = time.perf_counter()
        diag = stabilized.stabilize_step(x)
        seconds[i] = time.perf_counter() - t0
        next_states[i] = diag.next_state
        controls[i] = diag.control
        values[i] = diag.value
        nontrivial[i] = bool(np.any(diag.control != 0.0))
    return GridSweep(
        points=points,
        next_states=next_states,
        controls=controls,
        values=values,
        timing=GridTiming.from_log(seconds, nontrivial),
    )


def _write_grid_csv(path: Path, header: list[str], columns: list[np.ndarray]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack(columns)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# " + ",".join(header) + "\n")
        for row in table:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def export_field(
    model: Gpssm,
    clf,
    bounds,
    n: int,
    out: str | Path,
    solver: SolverConfig | None = None,
    sweep: GridSweep | None = None,
) -> dict[str, Path]:
    """Write CSV grids of the learned dynamics and the Lyapunov candidate.

    Three files land in ``out``: ``field_nominal.csv`` holds the uncontrolled
    prediction at each node, ``field_stabilized.csv`` the controlled
    displacement (next state minus current state), and ``field_values.csv``
    the candidate's value and its square root (the square root compresses the
    range enough to make level sets visible in a colormap). Each file has a
    comment header naming the columns and one row per grid node.

    A precomputed ``sweep`` over exactly this grid may be passed to avoid
    re-running the control solve. Returns the written paths keyed by role.
    """
    out = Path(out)
    points = grid_points(np.asarray(bounds, dtype=float), n)
    if sweep is None:
        sweep = sweep_grid(StabilizedModel(model=model, clf=clf, config=solver or SolverConfig()), points)
    elif sweep.points.shape != points.shape or not np.allclose(sweep.points, points):
        raise ValueError("precomputed sweep does not match the requested grid")
    dim = points.shape[1]
    xcols = [f"x{i + 1}" for i in range(dim)]
    nominal = model.predict(points)
    paths = {
        "nominal": _write_grid_csv(
            out / "field_nominal.csv",
            xcols + [f"mu{i + 1}" for i in range(dim)],
            [points[:, i] for i in range(dim)] + [nominal[:, i] for i in range(dim)],
        ),
        "stabilized": _write_grid_csv(
            out / "field_stabilized.csv",
            xcols + [f"dx{i + 1}" for i in range(dim)],
            [points[:, i] for i in range(dim)]
            + [(sweep.next_states - points)[:, i] for i in range(dim)],
        ),
        "values": _write_grid_csv(
            out / "field_values.csv",
            xcols + ["value", "sqrt_value"],
            [points[:, i] for i in range(dim)]
            + [sweep.values, np.sqrt(np.maximum(sweep.values, 0.0))],
        ),
    }
    return paths


@dataclass(frozen=True)
class ClfCell:
    """Benchmark results for one CLF kind on one shape."""

    kind: str
    fit_seconds: float
    hinge: float
    n_pairs: int
    increase_pairs: tuple[int, ...]
    rollouts: tuple[dict, ...]
    reproduction_errors: tuple[float, ...]
    control_time_seconds: float | None
    control_time_all_seconds: float
    n_nontrivial: int
    n_grid_queries: int

    @property
    def reproduction_mean(self) -> float:
        return float(np.mean(self.reproduction_errors))

    @property
    def reproduction_total(self) -> float:
        return float(np.sum(self.reproduction_errors))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "fit_seconds": self.fit_seconds,
            "hinge_loss": self.hinge,
            "n_pairs": self.n_pairs,
            "n_increase_pairs": len(self.increase_pairs),
            "increase_pairs": list(self.increase_pairs),
            "rollouts": list(self.rollouts),
            "n_rollouts": len(self.rollouts),
            "reproduction_errors": list(self.reproduction_errors),
            "reproduction_error_mean": self.reproduction_mean,
            "reproduction_error_total": self.reproduction_total,
            "control_time_seconds": self.control_time_seconds,
            "control_time_all_seconds": self.control_time_all_seconds,
            "n_nontrivial": self.n_nontrivial,
            "n_grid_queries": self.n_grid_queries,
        }


@dataclass(frozen=True)
class ShapeResult:
    """Everything the benchmark measured on one shape subdirectory."""

    shape: str
    n_demos: int = 0
    n_pairs: int = 0
    model_train_seconds: float = 0.0
    cells: tuple[ClfCell, ...] = ()
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "shape": self.shape,
            "n_demos": self.n_demos,
            "n_pairs": self.n_pairs,
            "model_train_seconds": self.model_train_seconds,
            "cells": [c.to_dict() for c in self.cells],
            "error": self.error,
        }


@dataclass(frozen=True)
class BenchmarkReport:
    """Per-shape, per-CLF comparison plus the configuration that produced it."""

    dataset: str
    config: BenchmarkConfig
    shapes: tuple[ShapeResult, ...]
    notes: tuple[str, ...] = (_EARLY_STOP_NOTE, _TIMING_NOTE)

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "config": self.config.to_dict(),
            "shapes": [s.to_dict() for s in self.shapes],
            "notes": list(self.notes),
        }

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path

    def to_markdown(self) -> str:
        lines = [
            "# Benchmark report",
            "",
            f"Dataset: `{self.dataset}`",
            f"Seed: {self.config.seed}, downsample factor: {self.config.downsample_factor}, "
            f"grid: {self.config.points_per_side} points per side",
            "",
            "| shape | CLF | repr. area (mean) | repr. area (total) | hinge loss "
            "| fit time [s] | control time [ms] | nontrivial queries | reached stop |",
            "|---|---|---|---|---|---|---|---|---|",
        ]
        for shape in self.shapes:
            if shape.error is not None:
                lines.append(f"| {shape.shape} | — | failed: {shape.error} | | | | | | |")
                continue
            for cell in shape.cells:
                reached = sum(
                    1 for r in cell.rollouts if r["termination"] == TERMINATION_RADIUS
                )
                t_ms = (
                    "—"
                    if cell.control_time_seconds is None
                    else f"{1e3 * cell.control_time_seconds:.2f}"
                )
                lines.append(
                    f"| {shape.shape} | {cell.kind} "
                    f"| {cell.reproduction_mean:.2f} | {cell.reproduction_total:.2f} "
                    f"| {cell.hinge:.3f} | {cell.fit_seconds:.2f} | {t_ms} "
                    f"| {cell.n_nontrivial}/{cell.n_grid_queries} "
                    f"| {reached}/{len(cell.rollouts)} |"
                )
        lines += [
            "",
            "GP training time per shape: "
            + ", ".join(
                f"{s.shape} {s.model_train_seconds:.2f}s"
                for s in self.shapes
                if s.error is None
            ),
            "",
        ]
        lines += [f"Note: {n}." for n in self.notes]
        return "\n".join(lines) + "\n"

    def save_markdown(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_markdown(), encoding="utf-8")
        return path


def fit_clf(pairs: PairSet, kind: str, seed: int = 0, jitter: float = DEFAULT_JITTER):
    """Fit one Lyapunov candidate by kind name ('np', 'wsaqf', or 'sos')."""
    if kind == "np":
        return fit_np_clf(pairs, jitter=jitter, seed=seed)
    return fit_baseline(pairs, kind, seed=seed)


def _increase_pairs(clf, pairs: PairSet) -> tuple[int, ...]:
    """Indices of training pairs whose candidate value increases along the step."""
    v_in = clf.value_many(pairs.inputs)
    v_next = clf.value_many(pairs.targets)
    return tuple(int(i) for i in np.flatnonzero(v_next > v_in))


def _shape_bounds(pairs: PairSet, config: BenchmarkConfig) -> np.ndarray:
    if config.grid_bounds is not None:
        return np.asarray(config.grid_bounds, dtype=float)
    return pairs.bounding_box(margin=config.grid_margin)


def benchmark_shape(
    shape: str,
    demos: list[Trajectory],
    config: BenchmarkConfig,
    out_dir: Path | None = None,
) -> ShapeResult:
    """Benchmark every configured CLF kind on one shape's demonstrations."""
    demos = [downsample(t, config.downsample_factor) for t in demos]
    pairs = to_pairs(demos, augment_origin=True)
    t0 = time.perf_counter()
    model = train_gpssm(pairs, jitter=config.jitter, seed=config.seed)
    model_seconds = time.perf_counter() - t0
    bounds = _shape_bounds(pairs, config)
    grid = grid_points(bounds, config.points_per_side)

    cells = []
    for kind in config.clf_kinds:
        t0 = time.perf_counter()
        clf = fit_clf(pairs, kind, seed=config.seed, jitter=config.jitter)
        fit_seconds = time.perf_counter() - t0
        stabilized = StabilizedModel(model=model, clf=clf, config=config.solver)
        assessments = rollout_against_demos(stabilized, demos, config)
        sweep = sweep_grid(stabilized, grid)
        cell = ClfCell(
            kind=kind,
            fit_seconds=fit_seconds,
            hinge=hinge_loss(clf, pairs),
            n_pairs=len(pairs),
            increase_pairs=_increase_pairs(clf, pairs),
            rollouts=tuple(a.summary() for a in assessments),
            reproduction_errors=tuple(a.reproduction_error for a in assessments),
            control_time_seconds=sweep.timing.mean_seconds,
            control_time_all_seconds=sweep.timing.mean_seconds_all,
            n_nontrivial=sweep.timing.n_nontrivial,
            n_grid_queries=sweep.timing.n_queries,
        )
        cells.append(cell)
        logger.info(
            "%s/%s: repr. area mean %.2f, hinge %.3f, %d/%d nontrivial",
            shape,
            kind,
            cell.reproduction_mean,
            cell.hinge,
            cell.n_nontrivial,
            cell.n_grid_queries,
        )
        if out_dir is not None:
            kind_dir = out_dir / shape / kind
            for assessment in assessments:
                assessment.result.save_csv(
                    kind_dir / f"rollout_{assessment.demo_name}.csv"
                )
            export_field(
                model,
                clf,
                bounds,
                config.points_per_side,
                kind_dir,
                solver=config.solver,
                sweep=sweep,
            )
            if config.figures:
                from . import plots

                plots.render_shape_overview(
                    kind_dir / "overview.png",
                    grid_shape=(config.points_per_side,) * pairs.dim,
                    points=grid,
                    values=sweep.values,
                    displacement=sweep.next_states - grid,
                    demos=demos,
                    rollouts=[closed_rollout_curve(a.result) for a in assessments],
                    title=f"{shape} / {kind}",
                )
    return ShapeResult(
        shape=shape,
        n_demos=len(demos),
        n_pairs=len(pairs),
        model_train_seconds=model_seconds,
        cells=tuple(cells),
    )


def run_benchmark(
    dataset_dir: str | Path,
    config: BenchmarkConfig | None = None,
    out_dir: str | Path | None = None,
) -> BenchmarkReport:
    """Benchmark every shape subdirectory of ``dataset_dir``.

    A shape that fails to process (bad CSVs, singular kernel, ...) is recorded
    in the report with its error message; remaining shapes still run. With
    ``out_dir`` the report is written as ``report.json`` and ``report.md``,
    next to per-shape rollout CSVs, field grids, and (unless disabled)
    rendered figures.
    """
    config = config or BenchmarkConfig()
    dataset_dir = Path(dataset_dir)
    if not dataset_dir.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {dataset_dir}")
    out_path = None if out_dir is None else Path(out_dir)
    results = []
    for shape_dir in sorted(p for p in dataset_dir.iterdir() if p.is_dir()):
        try:
            demos = load_dataset(shape_dir)
            results.append(benchmark_shape(shape_dir.name, demos, config, out_path))
        except Exception as exc:  # noqa: BLE001 - per-shape failures are reported
            logger.warning("shape %s failed: %s", shape_dir.name, exc)
            results.append(ShapeResult(shape=shape_dir.name, error=str(exc)))
    report = BenchmarkReport(
        dataset=str(dataset_dir), config=config, shapes=tuple(results)
    )
    if out_path is not None:
        report.save(out_path / "report.json")
        report.save_markdown(out_path / "report.md")
        if config.figures:
            from . import plots

            plots.render_report_summary(out_path / "reproduction_errors.png", report)
    return report
