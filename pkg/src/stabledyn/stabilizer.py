"""Minimally invasive stabilization of the learned dynamics.

Each step applies a virtual control u on top of the model prediction:

    x_{k+1} = f(x_k) + u,   f = learned mean dynamics

choosing the smallest u (in the Euclidean norm) for which the learned Lyapunov
candidate still decreases by a relaxed margin:

    V(f(x) + u) - V(x) + rate * log(1 + V(x)) <= 0.

Whenever the uncontrolled prediction already satisfies the margin (it does on
and near the demonstrations, and far from the data where the prediction falls
back to zero), the control is skipped entirely and the step is the plain model
prediction. The trivial control u = -f(x) jumps straight to the origin and is
always feasible away from it, so the step never gets stuck: the solve is a
refinement, not a requirement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .gpssm import Gpssm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the per-step control solve.

    Attributes:
        relaxation_rate: coefficient of the log(1 + V) decrease margin.
        skip_tolerance: skip the solve when the zero-control constraint value
            is at or below minus this number.
        max_iterations: iteration cap for the constrained solver.
        tolerance: convergence tolerance passed to the solver.
    """

    relaxation_rate: float = 0.01
    skip_tolerance: float = 1e-10
    max_iterations: int = 200
    tolerance: float = 1e-12

    def __post_init__(self) -> None:
        if self.relaxation_rate <= 0.0:
            raise ValueError(f"relaxation_rate must be positive, got {self.relaxation_rate}")
        if self.skip_tolerance < 0.0:
            raise ValueError(f"skip_tolerance must be >= 0, got {self.skip_tolerance}")
        if self.max_iterations < 1:
            raise ValueError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.tolerance <= 0.0:
            raise ValueError(f"tolerance must be positive, got {self.tolerance}")

    def to_dict(self) -> dict:
        return {
            "relaxation_rate": self.relaxation_rate,
            "skip_tolerance": self.skip_tolerance,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> SolverConfig:
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown solver settings: {sorted(unknown)}")
        return cls(**known)


def constraint_value(clf, x: np.ndarray, x_next: np.ndarray, rate: float) -> float:
    """Relaxed decrease constraint for a candidate successor state.

    g = V(x_next) - V(x) + rate * log(1 + V(x)); successors with g <= 0 keep
    the candidate decreasing fast enough. The current state itself is never
    feasible as its own successor (g = rate * log(1 + V(x)) > 0 for x != 0).
    """
    v_here = float(clf.value(np.asarray(x, dtype=float)))
    v_next = float(clf.value(np.asarray(x_next, dtype=float)))
    return v_next - v_here + rate * float(np.log1p(v_here))


@dataclass(frozen=True)
class InitialGuess:
    """Warm start for the control solve.

    ``successor`` is the state the guess steers to; the control is
    successor - f(x). ``candidate_index`` is the position in the candidate
    list (training inputs in storage order, then the origin last).
    """

    control: np.ndarray
    successor: np.ndarray
    candidate_index: int
    constraint_value: float
    distance: float


@dataclass(frozen=True)
class StepDiagnostics:
    """What one controlled step did."""

    control: np.ndarray
    next_state: np.ndarray
    value: float
    constraint_value: float
    skipped: bool
    used_fallback: bool
    solver_iterations: int


@dataclass(frozen=True)
class StabilizedModel:
    """Learned dynamics plus Lyapunov candidate plus control solve settings.

    ``clf`` is any object exposing value(x), value_many(X), gradient(x) and
    (optionally) a training_fingerprint. When both the dynamics model and the
    candidate carry fingerprints they must agree: mixing models trained on
    different pair sets voids every guarantee this wrapper provides.
    """

    model: Gpssm
    clf: object
    config: SolverConfig = SolverConfig()

    def __post_init__(self) -> None:
        clf_dim = getattr(self.clf, "dim", None)
        if clf_dim is not None and clf_dim != self.model.dim:
            raise ValueError(
                f"dynamics model dimension {self.model.dim} does not match "
                f"Lyapunov candidate dimension {clf_dim}"
            )
        model_fp = self.model.training_fingerprint
        clf_fp = getattr(self.clf, "training_fingerprint", "")
        if model_fp and clf_fp and model_fp != clf_fp:
            raise ValueError(
                "dynamics model and Lyapunov candidate were fitted to different "
                f"training data (fingerprints {model_fp[:12]}… vs {clf_fp[:12]}…)"
            )

    @property
    def dim(self) -> int:
        return self.model.dim

    def constraint_value(self, x: np.ndarray, u: np.ndarray) -> float:
        """Relaxed decrease constraint g(x, u); feasible controls have g <= 0."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return constraint_value(
            self.clf, x, self.model.predict(x) + u, self.config.relaxation_rate
        )

    def select_initial_guess(self, x: np.ndarray) -> InitialGuess:
        """Pick the feasible warm start nearest to the current state.

        Candidate successors are the training inputs (in storage order) plus
        the origin appended last. A candidate c is feasible when steering to it
        satisfies the decrease constraint. Among feasible candidates the one
        closest to x in the Euclidean norm wins; ties go to the lower index.
        Should none qualify, the trivial guess steering straight to the origin
        is returned (the origin candidate makes that unreachable in practice:
        V(0) = 0 is feasible whenever x != 0).
        """
        x = np.asarray(x, dtype=float)
        mu = self.model.predict(x)
        candidates = np.vstack([self.model.train_inputs, np.zeros((1, self.dim))])
        v_here = float(self.clf.value(x))
        margin = v_here - self.config.relaxation_rate * np.log1p(v_here)
        values = np.asarray(self.clf.value_many(candidates))
        feasible = values <= margin
        if not feasible.any():
            zero = np.zeros(self.dim)
            return InitialGuess(
                control=-mu,
                successor=zero,
                candidate_index=-1,
                constraint_value=float(self.clf.value(zero)) - margin,
                distance=float(np.linalg.norm(x)),
            )
        dists = np.linalg.norm(candidates - x, axis=1)
        dists[~feasible] = np.inf
        idx = int(np.argmin(dists))  # argmin takes the first minimum: lower index wins
        successor = candidates[idx]
        return InitialGuess(
            control=successor - mu,
            successor=successor,
            candidate_index=idx,
            constraint_value=float(values[idx] - margin),
            distance=float(dists[idx]),
        )

    def stabilize_step(self, x: np.ndarray) -> StepDiagnostics:
        """Compute the minimally invasive control at one state."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"state must have shape ({self.dim},), got {x.shape}")
        zero = np.zeros(self.dim)

        # At the origin the model already predicts the origin; nothing to do.
        if np.all(x == 0.0):
            mu = self.model.predict(x)
            return StepDiagnostics(
                control=zero,
                next_state=mu,
                value=float(self.clf.value(x)),
                constraint_value=self.constraint_value(x, zero),
                skipped=True,
                used_fallback=False,
                solver_iterations=0,
            )

        mu = self.model.predict(x)
        v_here = float(self.clf.value(x))
        g_zero = self.constraint_value(x, zero)
        if g_zero <= -self.config.skip_tolerance:
            return StepDiagnostics(
                control=zero,
                next_state=mu,
                value=v_here,
                constraint_value=g_zero,
                skipped=True,
                used_fallback=False,
                solver_iterations=0,
            )

        margin = v_here - self.config.relaxation_rate * np.log1p(v_here)

        best: dict = {"control": None, "norm_sq": np.inf, "g": np.inf}

        def consider(u: np.ndarray, g: float) -> None:
            nsq = float(u @ u)
            if g <= 0.0 and nsq < best["norm_sq"]:
                best["control"] = np.array(u, dtype=float)
                best["norm_sq"] = nsq
                best["g"] = g

        def g_of(u: np.ndarray) -> float:
            return float(self.clf.value(mu + u) - margin)

        # The trivial control steers straight to the origin; feasible whenever
        # V(x) > 0, which positive definiteness guarantees for x != 0.
        fallback = -mu
        consider(fallback, g_of(fallback))

        guess = self.select_initial_guess(x)
        consider(guess.control, g_of(guess.control))

        def objective(u: np.ndarray) -> float:
            return 0.5 * float(u @ u)

        def objective_grad(u: np.ndarray) -> np.ndarray:
            return np.asarray(u, dtype=float)

        def constraint_fun(u: np.ndarray) -> float:
            g = g_of(u)
            consider(u, g)
            return -g  # solver convention: feasible means >= 0

        def constraint_grad(u: np.ndarray) -> np.ndarray:
            return -np.asarray(self.clf.gradient(mu + u), dtype=float)

        res = minimize(
            objective,
            guess.control,
            jac=objective_grad,
            method="SLSQP",
            constraints=[{"type": "ineq", "fun": constraint_fun, "jac": constraint_grad}],
            options={"maxiter": self.config.max_iterations, "ftol": self.config.tolerance},
        )
        consider(res.x, g_of(res.x))

        control = best["control"]
        if control is None:  # unreachable while the candidate is positive definite
            raise RuntimeError("control solve found no feasible control, not even -f(x)")
        used_fallback = bool(np.array_equal(control, fallback))
        return StepDiagnostics(
            control=control,
            next_state=mu + control,
            value=v_here,
            constraint_value=float(best["g"]),
            skipped=False,
            used_fallback=used_fallback,
            solver_iterations=int(getattr(res, "nit", 0)),
        )

    def stabilized_predict(self, x: np.ndarray) -> np.ndarray:
        """One controlled step: model prediction plus the solved control."""
        return self.stabilize_step(x).next_state
