"""Noise-free Gaussian-process regression with a squared-exponential kernel.

The kernel uses one lengthscale per input dimension plus a signal magnitude:

    k(x, x') = signal_std**2 * exp(-0.5 * sum_i ((x_i - x'_i) / lengthscales[i])**2)

Observations are treated as exact. The only diagonal term added to the kernel
matrix is a tiny jitter for numerical stability, so the posterior mean
interpolates the training targets to solver precision.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize
from scipy.spatial.distance import cdist

logger = logging.getLogger(__name__)

DEFAULT_JITTER = 1e-14

# Residual check threshold for the Cholesky solve of the training system.
_SOLVE_RTOL = 1e-8

# Objective value for candidates whose kernel matrix cannot be solved; finite
# so derivative-free and quasi-Newton searches step away instead of choking.
_INFEASIBLE_PENALTY = 1e30


@dataclass(frozen=True)
class Hyperparameters:
    """Kernel hyperparameters: per-dimension lengthscales and signal magnitude."""

    lengthscales: np.ndarray
    signal_std: float

    def __post_init__(self) -> None:
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if ls.ndim != 1:
            raise ValueError(f"lengthscales must be 1-D, got shape {ls.shape}")
        if not np.all(np.isfinite(ls)) or np.any(ls <= 0.0):
            raise ValueError(f"lengthscales must be finite and positive, got {ls.tolist()}")
        sf = float(self.signal_std)
        if not np.isfinite(sf) or sf <= 0.0:
            raise ValueError(f"signal_std must be finite and positive, got {sf}")
        ls = np.ascontiguousarray(ls)
        ls.setflags(write=False)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_std", sf)

    @property
    def dim(self) -> int:
        return self.lengthscales.shape[0]

    def to_dict(self) -> dict:
        return {
            "lengthscales": [float(v) for v in self.lengthscales],
            "signal_std": float(self.signal_std),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Hyperparameters":
        return cls(
            lengthscales=np.asarray(d["lengthscales"], dtype=float),
            signal_std=float(d["signal_std"]),
        )

    def to_log_vector(self) -> np.ndarray:
        return np.log(np.append(self.lengthscales, self.signal_std))

    @classmethod
    def from_log_vector(cls, v: np.ndarray) -> "Hyperparameters":
        v = np.asarray(v, dtype=float)
        return cls(lengthscales=np.exp(v[:-1]), signal_std=float(np.exp(v[-1])))


def kernel_eval(hyper: Hyperparameters, x: np.ndarray, y: np.ndarray) -> float:
    """Squared-exponential kernel between two points."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = (x - y) / hyper.lengthscales
    return float(hyper.signal_std**2 * np.exp(-0.5 * np.dot(z, z)))


def kernel_matrix(hyper: Hyperparameters, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-kernel matrix K[i, j] = k(a[i], b[j]) of shape (len(a), len(b))."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != hyper.dim or b.shape[1] != hyper.dim:
        raise ValueError(
            f"point dimension ({a.shape[1]}, {b.shape[1]}) does not match "
            f"hyperparameter dimension {hyper.dim}"
        )
    sq = cdist(a / hyper.lengthscales, b / hyper.lengthscales, metric="sqeuclidean")
    return hyper.signal_std**2 * np.exp(-0.5 * sq)


def _chol_solve(mat: np.ndarray, rhs: np.ndarray, jitter: float, what: str):
    """Cholesky-solve (mat + jitter*I) z = rhs with a residual sanity check.

    Kernel matrices of closely spaced points are nearly singular, and with the
    tiny jitter used here a single triangular solve can lose six or more
    digits. A few rounds of iterative refinement (re-solving for the residual
    with the same factorization) recover them whenever the factorization is
    usable at all.

    Returns (solution, cholesky_factor_pair). Raises LinAlgError when the
    factorization fails or the refined solve is still inaccurate, advising a
    larger jitter.
    """
    n = mat.shape[0]
    sys = mat + jitter * np.eye(n)
    try:
        factor = cho_factor(sys, lower=True)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"Cholesky factorization of the {what} matrix failed ({exc}); "
            f"the training points may be too close together — try a larger jitter "
            f"(current: {jitter:g})"
        ) from None
    z = cho_solve(factor, rhs)
    scale = max(np.linalg.norm(rhs), 1.0)
    residual = np.inf
    for _ in range(4):
        r = rhs - sys @ z
        residual = np.linalg.norm(r)
        if not np.isfinite(residual) or residual <= 1e-12 * scale:
            break
        z = z + cho_solve(factor, r)
    if not np.isfinite(residual) or residual > _SOLVE_RTOL * scale:
        raise np.linalg.LinAlgError(
            f"linear solve against the {what} matrix is inaccurate "
            f"(relative residual {residual / scale:.3e} > {_SOLVE_RTOL:g}); "
            f"try a larger jitter (current: {jitter:g})"
        )
    return z, factor


@dataclass(frozen=True)
class GpPosterior:
    """Trained noise-free GP for one scalar output.

    Prediction only needs the training inputs and the precomputed weight vector
    ``alpha = (K + jitter*I)^{-1} targets``; the posterior mean at x is
    k(x, X) @ alpha.
    """

    train_inputs: np.ndarray
    alpha: np.ndarray
    hyper: Hyperparameters
    jitter: float

    def __post_init__(self) -> None:
        ti = np.ascontiguousarray(np.asarray(self.train_inputs, dtype=float))
        al = np.ascontiguousarray(np.asarray(self.alpha, dtype=float))
        if ti.ndim != 2 or al.ndim != 1 or ti.shape[0] != al.shape[0]:
            raise ValueError(
                f"inconsistent posterior shapes: inputs {ti.shape}, alpha {al.shape}"
            )
        ti.setflags(write=False)
        al.setflags(write=False)
        object.__setattr__(self, "train_inputs", ti)
        object.__setattr__(self, "alpha", al)

    def predict_mean(self, x: np.ndarray) -> np.ndarray:
        """Posterior mean at one point (returns scalar array) or a batch (n,) array."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        k = kernel_matrix(self.hyper, np.atleast_2d(x), self.train_inputs)
        out = k @ self.alpha
        return float(out[0]) if single else out

    def mean_bound(self) -> float:
        """A bound on |posterior mean| valid everywhere in the input space.

        With N training points, |k(x, X) @ alpha| <= signal_std^2 * sqrt(N) * ||alpha||
        because each kernel entry is at most signal_std^2.
        """
        n = self.train_inputs.shape[0]
        return float(self.hyper.signal_std**2 * np.sqrt(n) * np.linalg.norm(self.alpha))


def fit_gp(
    train_inputs: np.ndarray,
    targets: np.ndarray,
    hyper: Hyperparameters,
    jitter: float = DEFAULT_JITTER,
) -> GpPosterior:
    """Fit the noise-free GP: solve (K + jitter*I) alpha = targets."""
    train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if train_inputs.shape[0] != targets.shape[0]:
        raise ValueError(
            f"{train_inputs.shape[0]} training inputs but {targets.shape[0]} targets"
        )
    if jitter < 0.0:
        raise ValueError(f"jitter must be >= 0, got {jitter}")
    kmat = kernel_matrix(hyper, train_inputs, train_inputs)
    alpha, _ = _chol_solve(kmat, targets, jitter, "kernel")
    return GpPosterior(train_inputs=train_inputs, alpha=alpha, hyper=hyper, jitter=jitter)


def log_marginal_likelihood(
    train_inputs: np.ndarray,
    targets: np.ndarray,
    hyper: Hyperparameters,
    jitter: float = DEFAULT_JITTER,
) -> float:
    """Log marginal likelihood of the targets under the noise-free GP prior.

    Equals -0.5 * y^T (K + jitter*I)^{-1} y - 0.5 * logdet(K + jitter*I)
    - (N/2) * log(2*pi).
    """
    train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    n = targets.shape[0]
    kmat = kernel_matrix(hyper, train_inputs, train_inputs)
    alpha, factor = _chol_solve(kmat, targets, jitter, "kernel")
    logdet = 2.0 * np.sum(np.log(np.diag(factor[0])))
    return float(-0.5 * targets @ alpha - 0.5 * logdet - 0.5 * n * np.log(2.0 * np.pi))


def default_hyperparameters(train_inputs: np.ndarray, targets: np.ndarray) -> Hyperparameters:
    """Data-scaled starting point for hyperparameter search.

    Lengthscales start at a quarter of the per-dimension input spread: long
    enough to smooth over neighboring samples, short enough that the kernel
    matrix of densely sampled, near-duplicate demonstrations stays solvable
    with the tiny noise-free jitter. The signal magnitude starts at the target
    spread.
    """
    train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    ls = np.std(train_inputs, axis=0) / 4.0
    ls = np.where(ls > 0.0, ls, 1.0)
    sf = float(np.std(targets))
    if sf <= 0.0:
        sf = 1.0
    return Hyperparameters(lengthscales=ls, signal_std=sf)


def optimize_hyperparameters(
    train_inputs: np.ndarray,
    targets: np.ndarray,
    init: Hyperparameters | None = None,
    jitter: float = DEFAULT_JITTER,
    restarts: int = 2,
    seed: int = 0,
    max_evaluations: int = 2000,
) -> Hyperparameters:
    """Maximize the log marginal likelihood over log-hyperparameters.

    Runs a local optimizer from the supplied (or data-scaled) starting point
    plus ``restarts`` perturbed starts, and returns the best candidate found.
    Candidates whose kernel matrix cannot be factorized score -inf. The result
    is never worse than the starting point.
    """
    train_inputs = np.atleast_2d(np.asarray(train_inputs, dtype=float))
    targets = np.asarray(targets, dtype=float).ravel()
    if init is None:
        init = default_hyperparameters(train_inputs, targets)

    evaluations = 0

    def negative_lml(logv: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        try:
            hyper = Hyperparameters.from_log_vector(logv)
            return -log_marginal_likelihood(train_inputs, targets, hyper, jitter)
        except (np.linalg.LinAlgError, ValueError, FloatingPointError, OverflowError):
            return _INFEASIBLE_PENALTY

    rng = np.random.default_rng(seed)
    x0 = init.to_log_vector()
    # Noise-free interpolation rejects overly long lengthscales outright (the
    # kernel matrix stops being solvable at the working jitter), so walk the
    # start downward until it evaluates at all.
    f0 = negative_lml(x0)
    for _ in range(12):
        if f0 < _INFEASIBLE_PENALTY:
            break
        x0 = x0.copy()
        x0[:-1] -= np.log(2.0)
        f0 = negative_lml(x0)
    starts = [x0]
    for _ in range(restarts):
        starts.append(x0 + rng.normal(scale=0.5, size=x0.shape))

    best_x = x0
    best_f = f0
    budget = max(max_evaluations - evaluations, 1)
    per_start = max(budget // max(len(starts), 1), 10)
    for start in starts:
        if evaluations >= max_evaluations:
            break
        res = minimize(
            negative_lml,
            start,
            method="L-BFGS-B",
            options={"maxfun": per_start},
        )
        if np.isfinite(res.fun) and res.fun < min(best_f, _INFEASIBLE_PENALTY):
            best_f = res.fun
            best_x = res.x
    logger.debug(
        "hyperparameter search: %d evaluations, best negative log-likelihood %.6g",
        evaluations,
        best_f,
    )
    return Hyperparameters.from_log_vector(best_x)
