"""Nonparametric control Lyapunov function learned from demonstration pairs.

The candidate has two parts: a quadratic stage cost l(x) = x^T P0 x with a
fixed eigenvalue floor, and a kernel expansion that plays the role of an
infinite-horizon cost-to-go. The expansion is built so that along every
training pair the Bellman-style identity

    cost_to_go(x_k) - cost_to_go(x_{k+1}) = l(x_{k+1})

holds up to solver jitter. The published value clips the expansion at zero and
shifts it so the function is exactly zero at the origin:

    V(x) = l(x) + max(0, cost_to_go(x) + shift),   shift = -cost_to_go(0)

which keeps V positive definite (V >= l everywhere) while preserving the
decrease along the demonstrations.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .gp import (
    DEFAULT_JITTER,
    _INFEASIBLE_PENALTY,
    Hyperparameters,
    _chol_solve,
    kernel_matrix,
)
from .trajectory import DUPLICATE_TOL, PairSet

logger = logging.getLogger(__name__)

# Smallest eigenvalue enforced for the stage-cost matrix, so the full function
# is radially unbounded and bounded below by a known quadratic.
EIGENVALUE_FLOOR = 0.01

FORMAT_VERSION = 1


def _tril_indices(dim: int) -> tuple[np.ndarray, np.ndarray]:
    return np.tril_indices(dim)


@dataclass(frozen=True)
class StageCost:
    """Quadratic per-step cost x^T P x with min eigenvalue >= EIGENVALUE_FLOOR."""

    matrix: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.matrix, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError(f"stage-cost matrix must be square, got shape {p.shape}")
        if not np.allclose(p, p.T, atol=1e-12):
            raise ValueError("stage-cost matrix must be symmetric")
        min_eig = float(np.linalg.eigvalsh(p)[0])
        if min_eig < EIGENVALUE_FLOOR - 1e-9:
            raise ValueError(
                f"stage-cost matrix has minimum eigenvalue {min_eig:.6g} below the "
                f"floor {EIGENVALUE_FLOOR}"
            )
        p = np.ascontiguousarray(0.5 * (p + p.T))
        p.setflags(write=False)
        object.__setattr__(self, "matrix", p)

    @classmethod
    def from_factor(cls, factor: np.ndarray) -> "StageCost":
        """Build P = F F^T + floor * I from an unconstrained lower-triangular F.

        Adding the floor times identity (rather than clamping entries of F)
        guarantees the eigenvalue bound for every choice of F.
        """
        f = np.asarray(factor, dtype=float)
        if f.ndim != 2 or f.shape[0] != f.shape[1]:
            raise ValueError(f"factor must be square, got shape {f.shape}")
        return cls(matrix=f @ f.T + EIGENVALUE_FLOOR * np.eye(f.shape[0]))

    @classmethod
    def from_packed(cls, packed: np.ndarray, dim: int) -> "StageCost":
        """Unpack the free lower-triangular entries (row-major) into a factor."""
        packed = np.asarray(packed, dtype=float)
        f = np.zeros((dim, dim))
        f[_tril_indices(dim)] = packed
        return cls.from_factor(f)

    @classmethod
    def identity(cls, dim: int) -> "StageCost":
        return cls(matrix=np.eye(dim))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def value(self, x: np.ndarray) -> float | np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return float(x @ self.matrix @ x)
        return np.einsum("ni,ij,nj->n", x, self.matrix, x)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 2.0 * self.matrix @ x


def difference_kernel_matrix(
    inputs: np.ndarray, successors: np.ndarray, hyper: Hyperparameters
) -> np.ndarray:
    """Gram matrix of the feature differences phi(x_k^m) - phi(x_{k+1}^m).

    Entry (m, n) equals k(x_k^m, x_k^n) - k(x_{k+1}^m, x_k^n)
    - k(x_k^m, x_{k+1}^n) + k(x_{k+1}^m, x_{k+1}^n). As a Gram matrix it is
    symmetric positive semidefinite for any kernel.
    """
    a = kernel_matrix(hyper, inputs, inputs)
    b = kernel_matrix(hyper, inputs, successors)
    c = kernel_matrix(hyper, successors, successors)
    return a - b - b.T + c


@dataclass(frozen=True)
class NpClf:
    """Learned control Lyapunov function: stage cost plus clipped kernel part.

    ``inputs``/``successors`` hold the training pairs that carry weights (pairs
    whose input equals its successor contribute nothing and are dropped during
    fitting). ``training_fingerprint`` still identifies the full pair set the
    fit was called with, so compatibility checks against the dynamics model
    trained on the same data succeed.
    """

    hyper: Hyperparameters
    weights: np.ndarray
    shift: float
    stage_cost: StageCost
    inputs: np.ndarray
    successors: np.ndarray
    jitter: float
    training_fingerprint: str

    def __post_init__(self) -> None:
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=float))
        xi = np.ascontiguousarray(np.asarray(self.inputs, dtype=float))
        xs = np.ascontiguousarray(np.asarray(self.successors, dtype=float))
        if xi.shape != xs.shape or xi.ndim != 2:
            raise ValueError("inputs and successors must be matching 2-D arrays")
        if w.shape != (xi.shape[0],):
            raise ValueError(
                f"{xi.shape[0]} training pairs but weight vector of shape {w.shape}"
            )
        for arr in (w, xi, xs):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "inputs", xi)
        object.__setattr__(self, "successors", xs)

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]

    def cost_to_go(self, x: np.ndarray) -> float | np.ndarray:
        """Unclipped kernel expansion (before shift and clipping)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        k_in = kernel_matrix(self.hyper, pts, self.inputs)
        k_succ = kernel_matrix(self.hyper, pts, self.successors)
        out = (k_in - k_succ) @ self.weights
        return float(out[0]) if single else out

    def value(self, x: np.ndarray) -> float:
        """V(x) for a single state."""
        x = np.asarray(x, dtype=float)
        return float(self.stage_cost.value(x) + max(0.0, self.cost_to_go(x) + self.shift))

    def value_many(self, x: np.ndarray) -> np.ndarray:
        """V row-wise over a batch (n, d)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        kernel_part = np.maximum(0.0, np.asarray(self.cost_to_go(x)) + self.shift)
        return np.asarray(self.stage_cost.value(x)) + kernel_part

    def clip_active(self, x: np.ndarray) -> bool:
        """True when the kernel part is clipped to zero at x (V locally quadratic)."""
        return self.cost_to_go(x) + self.shift <= 0.0

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of V at a single state.

        Where the clip is active (kernel part <= 0, including the boundary) only
        the stage cost contributes; elsewhere the kernel expansion adds
        sum_m w_m * (k(x_k^m, x) * (x_k^m - x) - k(x_{k+1}^m, x) * (x_{k+1}^m - x))
        scaled by the inverse squared lengthscales.
        """
        x = np.asarray(x, dtype=float)
        grad = self.stage_cost.gradient(x)
        if self.cost_to_go(x) + self.shift > 0.0:
            pts = x[None, :]
            k_in = kernel_matrix(self.hyper, pts, self.inputs)[0]
            k_succ = kernel_matrix(self.hyper, pts, self.successors)[0]
            inv_sq = 1.0 / self.hyper.lengthscales**2
            grad = grad + inv_sq * (
                (self.weights * k_in) @ (self.inputs - x)
                - (self.weights * k_succ) @ (self.successors - x)
            )
        return grad

    def pair_decrease(self) -> np.ndarray:
        """V(x_k^m) - V(x_{k+1}^m) over the stored (non-fixed-point) pairs."""
        return self.value_many(self.inputs) - self.value_many(self.successors)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "np_clf",
            "dim": self.dim,
            "jitter": float(self.jitter),
            "training_fingerprint": self.training_fingerprint,
            "hyperparameters": self.hyper.to_dict(),
            "weights": [float(v) for v in self.weights],
            "shift": float(self.shift),
            "stage_cost_matrix": [[float(v) for v in row] for row in self.stage_cost.matrix],
            "inputs": [[float(v) for v in row] for row in self.inputs],
            "successors": [[float(v) for v in row] for row in self.successors],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NpClf":
        if d.get("kind") != "np_clf":
            raise ValueError(f"not a nonparametric CLF file (kind={d.get('kind')!r})")
        return cls(
            hyper=Hyperparameters.from_dict(d["hyperparameters"]),
            weights=np.asarray(d["weights"], dtype=float),
            shift=float(d["shift"]),
            stage_cost=StageCost(matrix=np.asarray(d["stage_cost_matrix"], dtype=float)),
            inputs=np.asarray(d["inputs"], dtype=float),
            successors=np.asarray(d["successors"], dtype=float),
            jitter=float(d["jitter"]),
            training_fingerprint=str(d["training_fingerprint"]),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "NpClf":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _moving_pair_mask(pairs: PairSet) -> np.ndarray:
    """Rows whose input differs from its successor (fixed points carry no signal)."""
    return ~np.all(np.abs(pairs.inputs - pairs.targets) <= DUPLICATE_TOL, axis=1)


def _solve_weights(
    inputs: np.ndarray,
    successors: np.ndarray,
    stage_cost: StageCost,
    hyper: Hyperparameters,
    jitter: float,
) -> np.ndarray:
    kappa = difference_kernel_matrix(inputs, successors, hyper)
    rhs = np.asarray(stage_cost.value(successors))
    weights, _ = _chol_solve(kappa, rhs, jitter, "difference-kernel")
    return weights


def clf_log_likelihood(
    inputs: np.ndarray,
    successors: np.ndarray,
    stage_cost: StageCost,
    hyper: Hyperparameters,
    jitter: float = DEFAULT_JITTER,
) -> float:
    """Joint log-likelihood of the stage costs under the difference-kernel prior.

    The targets are the stage costs of the successor states; the covariance is
    the difference-kernel Gram matrix plus jitter:

        -0.5 * r^T (kappa + eps*I)^{-1} r - 0.5 * logdet(kappa + eps*I)
        - (M/2) * log(2*pi),   r_m = l(x_{k+1}^m)

    Both the kernel hyperparameters and the stage-cost matrix move this value,
    so the two can be optimized together.
    """
    kappa = difference_kernel_matrix(inputs, successors, hyper)
    rhs = np.asarray(stage_cost.value(successors))
    weights, factor = _chol_solve(kappa, rhs, jitter, "difference-kernel")
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    m = rhs.shape[0]
    return float(-0.5 * rhs @ weights - 0.5 * logdet - 0.5 * m * np.log(2.0 * np.pi))


def _default_clf_init(inputs: np.ndarray, dim: int) -> tuple[Hyperparameters, StageCost]:
    ls = np.std(inputs, axis=0) / 4.0
    ls = np.where(ls > 0.0, ls, 1.0)
    signal = float(np.std(inputs))
    hyper = Hyperparameters(lengthscales=ls, signal_std=signal if signal > 0.0 else 1.0)
    return hyper, StageCost.identity(dim)


def _pack_stage_cost(stage: StageCost) -> np.ndarray:
    """Invert from_factor: recover triangular factor entries for the optimizer.

    P - floor*I is positive semidefinite for any matrix produced by
    from_factor; a generic SPD matrix close to the floor falls back to a scaled
    identity factor.
    """
    dim = stage.dim
    shifted = stage.matrix - EIGENVALUE_FLOOR * np.eye(dim)
    try:
        factor = np.linalg.cholesky(shifted + 1e-12 * np.eye(dim))
    except np.linalg.LinAlgError:
        factor = np.sqrt(max(float(np.trace(shifted)) / dim, 1e-6)) * np.eye(dim)
    return factor[_tril_indices(dim)]


def optimize_clf_hyperparameters(
    pairs: PairSet,
    init_hyper: Hyperparameters | None = None,
    init_stage_cost: StageCost | None = None,
    jitter: float = DEFAULT_JITTER,
    seed: int = 0,
    restarts: int = 2,
    max_evaluations: int = 2000,
) -> tuple[Hyperparameters, StageCost]:
    """Jointly tune kernel hyperparameters and the stage-cost matrix.

    Maximizes ``clf_log_likelihood`` over the kernel log-parameters together
    with the free triangular factor of the stage cost, starting from the given
    (or data-scaled) initial values plus ``restarts`` perturbed starts. The
    returned pair is never worse than the initial one under the likelihood;
    candidates whose difference-kernel matrix cannot be factorized are
    discarded. Fixed-point pairs are excluded from the likelihood.
    """
    mask = _moving_pair_mask(pairs)
    if not mask.any():
        raise ValueError("all pairs are fixed points; nothing to optimize")
    inputs = pairs.inputs[mask]
    successors = pairs.targets[mask]
    dim = pairs.dim

    default_hyper, default_cost = _default_clf_init(inputs, dim)
    if init_hyper is None:
        init_hyper = default_hyper
    if init_stage_cost is None:
        init_stage_cost = default_cost

    n_cost = dim * (dim + 1) // 2

    def unpack(theta: np.ndarray) -> tuple[Hyperparameters, StageCost]:
        hyper = Hyperparameters.from_log_vector(theta[: dim + 1])
        cost = StageCost.from_packed(theta[dim + 1 :], dim)
        return hyper, cost

    theta0 = np.concatenate([init_hyper.to_log_vector(), _pack_stage_cost(init_stage_cost)])
    evaluations = 0

    def negative_ll(theta: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        try:
            hyper, cost = unpack(theta)
            return -clf_log_likelihood(inputs, successors, cost, hyper, jitter)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError, OverflowError):
            return _INFEASIBLE_PENALTY

    rng = np.random.default_rng(seed)
    # Walk the lengthscales down until the difference-kernel matrix is
    # solvable at the working jitter; the noise-free model rejects overly
    # smooth candidates outright.
    f0 = negative_ll(theta0)
    for _ in range(12):
        if f0 < _INFEASIBLE_PENALTY:
            break
        theta0 = theta0.copy()
        theta0[:dim] -= np.log(2.0)
        f0 = negative_ll(theta0)
    spread = np.concatenate([0.5 * np.ones(dim + 1), 0.3 * np.ones(n_cost)])
    starts = [theta0]
    for _ in range(restarts):
        starts.append(theta0 + rng.normal(size=theta0.shape) * spread)

    best_theta = theta0
    best_f = f0
    per_start = max((max_evaluations - evaluations) // max(len(starts), 1), 10)
    for start in starts:
        if evaluations >= max_evaluations:
            break
        res = minimize(negative_ll, start, method="L-BFGS-B", options={"maxfun": per_start})
        if np.isfinite(res.fun) and res.fun < min(best_f, _INFEASIBLE_PENALTY):
            best_f = res.fun
            best_theta = res.x
    logger.debug(
        "CLF hyperparameter search: %d evaluations, best negative log-likelihood %.6g",
        evaluations,
        best_f,
    )
    return unpack(best_theta)


def fit_np_clf(
    pairs: PairSet,
    jitter: float = DEFAULT_JITTER,
    optimize: bool = True,
    init_hyper: Hyperparameters | None = None,
    init_stage_cost: StageCost | None = None,
    seed: int = 0,
    restarts: int = 2,
    max_evaluations: int = 2000,
) -> NpClf:
    """Fit the nonparametric CLF to demonstration pairs.

    Fixed-point pairs (input equal to successor, e.g. the origin augmentation)
    are excluded from the kernel expansion: their feature difference is zero,
    so they cannot carry weight and only degrade conditioning. The returned
    function still records the fingerprint of the full ``pairs`` argument.

    With ``optimize`` the kernel hyperparameters and stage cost come from
    ``optimize_clf_hyperparameters``; otherwise the initial (or data-scaled
    default) values are used as given.
    """
    mask = _moving_pair_mask(pairs)
    if not mask.any():
        raise ValueError("all pairs are fixed points; nothing to fit")
    inputs = pairs.inputs[mask]
    successors = pairs.targets[mask]
    dim = pairs.dim

    if optimize:
        hyper, stage_cost = optimize_clf_hyperparameters(
            pairs,
            init_hyper=init_hyper,
            init_stage_cost=init_stage_cost,
            jitter=jitter,
            seed=seed,
            restarts=restarts,
            max_evaluations=max_evaluations,
        )
    else:
        default_hyper, default_cost = _default_clf_init(inputs, dim)
        hyper = init_hyper if init_hyper is not None else default_hyper
        stage_cost = init_stage_cost if init_stage_cost is not None else default_cost

    weights = _solve_weights(inputs, successors, stage_cost, hyper, jitter)
    partial = NpClf(
        hyper=hyper,
        weights=weights,
        shift=0.0,
        stage_cost=stage_cost,
        inputs=inputs,
        successors=successors,
        jitter=jitter,
        training_fingerprint=pairs.fingerprint,
    )
    # Shift so the kernel part vanishes exactly at the origin, giving V(0) = 0.
    shift = -partial.cost_to_go(np.zeros(dim))
    return NpClf(
        hyper=hyper,
        weights=weights,
        shift=float(shift),
        stage_cost=stage_cost,
        inputs=inputs,
        successors=successors,
        jitter=jitter,
        training_fingerprint=pairs.fingerprint,
    )
