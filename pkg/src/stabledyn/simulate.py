"""Closed-loop rollouts of a stabilized model and their on-disk format."""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .stabilizer import StabilizedModel

DEFAULT_STOP_RADIUS = 10.0
DEFAULT_MAX_STEPS = 1000

TERMINATION_RADIUS = "reached-radius"
TERMINATION_STEPS = "step-limit"


@dataclass(frozen=True)
class SimulationResult:
    """One rollout. With n steps taken: n+1 states and values, n controls.

    ``wall_times`` records seconds spent computing each step's control.
    ``termination`` is "reached-radius" when the state entered the stop ball,
    "step-limit" when the step budget ran out first.
    """

    states: np.ndarray
    controls: np.ndarray
    values: np.ndarray
    wall_times: np.ndarray
    termination: str

    def __post_init__(self) -> None:
        states = np.ascontiguousarray(np.asarray(self.states, dtype=float))
        controls = np.ascontiguousarray(np.asarray(self.controls, dtype=float))
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        wall = np.ascontiguousarray(np.asarray(self.wall_times, dtype=float))
        n = states.shape[0] - 1
        if controls.shape != (n, states.shape[1]):
            raise ValueError(
                f"{states.shape[0]} states need {n} controls, got shape {controls.shape}"
            )
        if values.shape != (n + 1,) or wall.shape != (n,):
            raise ValueError("values must have one entry per state, wall_times one per step")
        if self.termination not in (TERMINATION_RADIUS, TERMINATION_STEPS):
            raise ValueError(f"unknown termination reason {self.termination!r}")
        for arr in (states, controls, values, wall):
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "wall_times", wall)

    @property
    def n_steps(self) -> int:
        return self.controls.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def summary(self) -> dict:
        """JSON-ready digest of the rollout."""
        nonzero = int(np.sum(np.any(self.controls != 0.0, axis=1)))
        return {
            "start": [float(v) for v in self.states[0]],
            "final_state": [float(v) for v in self.states[-1]],
            "final_radius": float(np.linalg.norm(self.states[-1])),
            "steps": int(self.n_steps),
            "termination": self.termination,
            "initial_value": float(self.values[0]),
            "final_value": float(self.values[-1]),
            "nonzero_control_steps": nonzero,
            "control_wall_seconds": float(self.wall_times.sum()),
        }

    def save_csv(self, path: str | Path) -> Path:
        """Write one row per state.

        Columns: step, x1..xd, u1..ud, value, wall_time. The final row has no
        outgoing step, so its control and wall-time cells are NaN.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        d = self.dim
        header = (
            "step,"
            + ",".join(f"x{i + 1}" for i in range(d))
            + ","
            + ",".join(f"u{i + 1}" for i in range(d))
            + ",value,wall_time"
        )
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# termination: {self.termination}\n")
            fh.write(header + "\n")
            for k in range(self.states.shape[0]):
                state = ",".join(repr(float(v)) for v in self.states[k])
                if k < self.n_steps:
                    control = ",".join(repr(float(v)) for v in self.controls[k])
                    wall = repr(float(self.wall_times[k]))
                else:
                    control = ",".join("nan" for _ in range(d))
                    wall = "nan"
                fh.write(f"{k},{state},{control},{repr(float(self.values[k]))},{wall}\n")
        return path

    @classmethod
    def load_csv(cls, path: str | Path) -> "SimulationResult":
        path = Path(path)
        termination = TERMINATION_STEPS
        rows: list[list[str]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                text = line.strip()
                if text.startswith("# termination:"):
                    termination = text.split(":", 1)[1].strip()
                    continue
                if not text or text.startswith("#") or text.startswith("step,"):
                    continue
                rows.append(text.split(","))
        if not rows:
            raise ValueError(f"{path}: empty rollout file")
        d = (len(rows[0]) - 3) // 2
        states = np.array([[float(c) for c in r[1 : 1 + d]] for r in rows])
        controls_all = np.array([[float(c) for c in r[1 + d : 1 + 2 * d]] for r in rows])
        values = np.array([float(r[1 + 2 * d]) for r in rows])
        wall_all = np.array([float(r[2 + 2 * d]) for r in rows])
        return cls(
            states=states,
            controls=controls_all[:-1],
            values=values,
            wall_times=wall_all[:-1],
            termination=termination,
        )


def simulate(
    stabilized: StabilizedModel,
    start: np.ndarray,
    max_steps: int = DEFAULT_MAX_STEPS,
    stop_radius: float = DEFAULT_STOP_RADIUS,
) -> SimulationResult:
    """Roll the controlled system out from ``start``.

    Before each step the stop test ||x|| <= stop_radius runs; if it passes the
    rollout ends with termination "reached-radius" and the current state is the
    last one recorded. Otherwise the rollout ends after ``max_steps`` steps
    with termination "step-limit".
    """
    if max_steps < 0:
        raise ValueError(f"max_steps must be >= 0, got {max_steps}")
    if stop_radius < 0.0:
        raise ValueError(f"stop_radius must be >= 0, got {stop_radius}")
    x = np.asarray(start, dtype=float)
    if x.shape != (stabilized.dim,):
        raise ValueError(f"start must have shape ({stabilized.dim},), got {x.shape}")

    states = [x.copy()]
    controls: list[np.ndarray] = []
    values = [float(stabilized.clf.value(x))]
    wall_times: list[float] = []
    termination = TERMINATION_STEPS
    while True:
        if float(np.linalg.norm(x)) <= stop_radius:
            termination = TERMINATION_RADIUS
            break
        if len(controls) >= max_steps:
            break
        t0 = time.perf_counter()
        diag = stabilized.stabilize_step(x)
        wall_times.append(time.perf_counter() - t0)
        controls.append(diag.control)
        x = diag.next_state
        states.append(x.copy())
        values.append(float(stabilized.clf.value(x)))
    return SimulationResult(
        states=np.array(states),
        controls=np.array(controls).reshape(len(controls), stabilized.dim),
        values=np.array(values),
        wall_times=np.array(wall_times),
        termination=termination,
    )
