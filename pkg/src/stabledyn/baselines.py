"""Parametric Lyapunov-candidate baselines fitted to the same demonstration pairs.

Two classical families are provided for comparison with the nonparametric
function:

* a weighted sum of asymmetric quadratic pieces: a base quadratic plus switched
  quadratic terms that activate on one side of a learned hyperplane-like
  surface, and
* a sum-of-squares polynomial: a quadratic form in the vector of nonconstant
  monomials up to degree two.

Both are positive definite by construction (every matrix carries the same
eigenvalue floor as the stage cost) and are fitted by minimizing the hinge
penalty on violations of the decrease condition along the demonstration pairs.
"""

from __future__ import annotations

import itertools
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .npclf import EIGENVALUE_FLOOR, StageCost
from .trajectory import PairSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def hinge_loss(clf, pairs: PairSet) -> float:
    """Sum of positive parts of V(x_{k+1}) - V(x_k) over the pairs.

    Zero exactly when the candidate decreases (weakly) along every pair.
    ``clf`` is any object with a value_many mapping an (n, d) batch to (n,)
    values.
    """
    return float(
        np.maximum(0.0, clf.value_many(pairs.targets) - clf.value_many(pairs.inputs)).sum()
    )


def _spd_from_packed(packed: np.ndarray, dim: int) -> np.ndarray:
    f = np.zeros((dim, dim))
    f[np.tril_indices(dim)] = packed
    return f @ f.T + EIGENVALUE_FLOOR * np.eye(dim)


def _check_spd(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError(f"{name} must be square, got shape {p.shape}")
    if not np.allclose(p, p.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    min_eig = float(np.linalg.eigvalsh(p)[0])
    if min_eig < EIGENVALUE_FLOOR - 1e-9:
        raise ValueError(
            f"{name} has minimum eigenvalue {min_eig:.6g} below the floor {EIGENVALUE_FLOOR}"
        )
    p = np.ascontiguousarray(0.5 * (p + p.T))
    p.setflags(write=False)
    return p


@dataclass(frozen=True)
class WsaqfClf:
    """Weighted sum of asymmetric quadratic functions.

    V(x) = x^T P0 x + sum_l [s_l(x) >= 0] * s_l(x)^2,
    s_l(x) = x^T P_l (x - center_l).

    Every switched term vanishes at the origin and is nonnegative, so V is
    positive definite whenever P0 is; the indicator keeps V continuously
    differentiable because each term enters quadratically in s_l.
    """

    base_matrix: np.ndarray
    matrices: tuple[np.ndarray, ...]
    centers: np.ndarray
    training_fingerprint: str = ""

    def __post_init__(self) -> None:
        base = _check_spd(self.base_matrix, "base matrix")
        mats = tuple(_check_spd(p, f"component matrix {i}") for i, p in enumerate(self.matrices))
        centers = np.ascontiguousarray(np.asarray(self.centers, dtype=float))
        if centers.ndim != 2 or centers.shape != (len(mats), base.shape[0]):
            raise ValueError(
                f"centers must have shape ({len(mats)}, {base.shape[0]}), got {centers.shape}"
            )
        centers.setflags(write=False)
        object.__setattr__(self, "base_matrix", base)
        object.__setattr__(self, "matrices", mats)
        object.__setattr__(self, "centers", centers)

    @property
    def dim(self) -> int:
        return self.base_matrix.shape[0]

    @property
    def n_components(self) -> int:
        return len(self.matrices)

    def _switch_values(self, x: np.ndarray) -> np.ndarray:
        """s_l(x) for a batch: shape (n, L)."""
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.n_components))
        for l, (p, c) in enumerate(zip(self.matrices, self.centers)):
            out[:, l] = np.einsum("ni,ij,nj->n", x, p, x - c)
        return out

    def value(self, x: np.ndarray) -> float:
        return float(self.value_many(np.asarray(x, dtype=float)[None, :])[0])

    def value_many(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        base = np.einsum("ni,ij,nj->n", x, self.base_matrix, x)
        s = self._switch_values(x)
        return base + np.where(s >= 0.0, s**2, 0.0).sum(axis=1)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        grad = 2.0 * self.base_matrix @ x
        for p, c in zip(self.matrices, self.centers):
            s = float(x @ p @ (x - c))
            if s > 0.0:
                grad = grad + 2.0 * s * (p @ (2.0 * x - c))
        return grad

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "wsaqf_clf",
            "dim": self.dim,
            "base_matrix": [[float(v) for v in row] for row in self.base_matrix],
            "matrices": [
                [[float(v) for v in row] for row in p] for p in self.matrices
            ],
            "centers": [[float(v) for v in row] for row in self.centers],
            "training_fingerprint": self.training_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WsaqfClf":
        if d.get("kind") != "wsaqf_clf":
            raise ValueError(f"not a WSAQF file (kind={d.get('kind')!r})")
        return cls(
            base_matrix=np.asarray(d["base_matrix"], dtype=float),
            matrices=tuple(np.asarray(p, dtype=float) for p in d["matrices"]),
            centers=np.asarray(d["centers"], dtype=float),
            training_fingerprint=str(d.get("training_fingerprint", "")),
        )

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "WsaqfClf":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def monomial_exponents(dim: int) -> list[tuple[int, ...]]:
    """Exponent tuples of the nonconstant monomials up to total degree two.

    Linear terms first (x_1, ..., x_d), then quadratic terms x_i * x_j with
    i <= j in lexicographic order. For dim=2: x1, x2, x1^2, x1*x2, x2^2.
    """
    exps: list[tuple[int, ...]] = []
    for i in range(dim):
        e = [0] * dim
        e[i] = 1
        exps.append(tuple(e))
    for i, j in itertools.combinations_with_replacement(range(dim), 2):
        e = [0] * dim
        e[i] += 1
        e[j] += 1
        exps.append(tuple(e))
    return exps


def monomial_values(x: np.ndarray, exponents: list[tuple[int, ...]]) -> np.ndarray:
    """Evaluate the monomial vector for a batch: shape (n, n_monomials)."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    cols = [np.prod(x ** np.asarray(e, dtype=float), axis=1) for e in exponents]
    return np.column_stack(cols)


def monomial_jacobian(x: np.ndarray, exponents: list[tuple[int, ...]]) -> np.ndarray:
    """Jacobian d(monomials)/dx at a single point: shape (n_monomials, d)."""
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    jac = np.zeros((len(exponents), d))
    for a, e in enumerate(exponents):
        for i in range(d):
            if e[i] == 0:
                continue
            reduced = list(e)
            reduced[i] -= 1
            term = e[i] * np.prod(x ** np.asarray(reduced, dtype=float))
            jac[a, i] = term
    return jac


@dataclass(frozen=True)
class SosClf:
    """Sum-of-squares polynomial V(x) = m(x)^T Q m(x).

    m(x) collects the nonconstant monomials up to degree two, so V(0) = 0, and
    an eigenvalue floor on Q bounds V below by floor * ||x||^2 (the linear
    monomials alone contribute ||x||^2 to ||m(x)||^2).
    """

    gram_matrix: np.ndarray
    training_fingerprint: str = ""

    def __post_init__(self) -> None:
        q = _check_spd(self.gram_matrix, "monomial Gram matrix")
        dim = _dim_from_monomial_count(q.shape[0])
        object.__setattr__(self, "gram_matrix", q)
        object.__setattr__(self, "_exponents", monomial_exponents(dim))
        object.__setattr__(self, "_dim", dim)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def exponents(self) -> list[tuple[int, ...]]:
        return list(self._exponents)

    def value(self, x: np.ndarray) -> float:
        return float(self.value_many(np.asarray(x, dtype=float)[None, :])[0])

    def value_many(self, x: np.ndarray) -> np.ndarray:
        m = monomial_values(x, self._exponents)
        return np.einsum("na,ab,nb->n", m, self.gram_matrix, m)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        m = monomial_values(x[None, :], self._exponents)[0]
        jac = monomial_jacobian(x, self._exponents)
        return 2.0 * jac.T @ (self.gram_matrix @ m)

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "sos_clf",
            "dim": self.dim,
            "monomials": [list(e) for e in self._exponents],
            "gram_matrix": [[float(v) for v in row] for row in self.gram_matrix],
            "training_fingerprint": self.training_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SosClf":
        if d.get("kind") != "sos_clf":
            raise ValueError(f"not a sum-of-squares file (kind={d.get('kind')!r})")
        clf = cls(
            gram_matrix=np.asarray(d["gram_matrix"], dtype=float),
            training_fingerprint=str(d.get("training_fingerprint", "")),
        )
        stored = [tuple(e) for e in d["monomials"]]
        if stored != clf.exponents:
            raise ValueError("monomial table in file does not match the builtin ordering")
        return clf

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "SosClf":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _dim_from_monomial_count(n_monomials: int) -> int:
    # n = d + d*(d+1)/2  =>  d = (-3 + sqrt(9 + 8n)) / 2
    d = int(round((-3.0 + np.sqrt(9.0 + 8.0 * n_monomials)) / 2.0))
    if d < 1 or d + d * (d + 1) // 2 != n_monomials:
        raise ValueError(f"{n_monomials} is not a valid monomial count for any dimension")
    return d


def _multistart_powell(objective, theta0: np.ndarray, seed: int, restarts: int,
                       max_evaluations: int, perturbation: float) -> np.ndarray:
    """Derivative-free multi-start minimization; result never worse than theta0."""
    rng = np.random.default_rng(seed)
    starts = [theta0]
    for _ in range(restarts):
        starts.append(theta0 + rng.normal(scale=perturbation, size=theta0.shape))
    evaluations = 0

    def counted(theta: np.ndarray) -> float:
        nonlocal evaluations
        evaluations += 1
        return objective(theta)

    best_theta = theta0
    best_f = counted(theta0)
    per_start = max((max_evaluations - evaluations) // max(len(starts), 1), 50)
    for start in starts:
        if evaluations >= max_evaluations:
            break
        res = minimize(counted, start, method="Powell", options={"maxfev": per_start})
        if np.isfinite(res.fun) and res.fun < best_f:
            best_f = res.fun
            best_theta = res.x
        if best_f == 0.0:
            break  # hinge penalty cannot go below zero
    logger.debug("hinge fit: %d evaluations, best penalty %.6g", evaluations, best_f)
    return best_theta


def fit_wsaqf_clf(
    pairs: PairSet,
    n_components: int = 3,
    seed: int = 0,
    restarts: int = 3,
    max_evaluations: int = 6000,
) -> WsaqfClf:
    """Fit the asymmetric-quadratic candidate by hinge-penalty minimization.

    Free parameters: one triangular factor per matrix (base plus
    ``n_components`` switched ones) and one center per switched term. For
    n_components=3 in two dimensions that is 18 numbers. Optimization is
    derivative-free (the indicator makes the objective piecewise smooth).
    """
    dim = pairs.dim
    n_pack = dim * (dim + 1) // 2
    rng = np.random.default_rng(seed)

    def unpack(theta: np.ndarray) -> WsaqfClf:
        mats = []
        off = 0
        for _ in range(n_components + 1):
            mats.append(_spd_from_packed(theta[off : off + n_pack], dim))
            off += n_pack
        centers = theta[off:].reshape(n_components, dim)
        return WsaqfClf(
            base_matrix=mats[0],
            matrices=tuple(mats[1:]),
            centers=centers,
            training_fingerprint=pairs.fingerprint,
        )

    def objective(theta: np.ndarray) -> float:
        try:
            clf = unpack(theta)
        except ValueError:
            return np.inf
        return hinge_loss(clf, pairs)

    # Start from identity factors and centers at sampled training states, so
    # the switched surfaces begin in the populated region.
    ident = np.eye(dim)[np.tril_indices(dim)]
    picks = rng.choice(pairs.inputs.shape[0], size=n_components, replace=False)
    centers0 = 0.5 * pairs.inputs[picks]
    scale = max(float(np.abs(pairs.inputs).max()), 1.0)
    theta0 = np.concatenate([np.tile(ident / np.sqrt(scale), n_components + 1),
                             centers0.ravel()])
    best = _multistart_powell(objective, theta0, seed, restarts, max_evaluations,
                              perturbation=0.3)
    clf = unpack(best)
    logger.info(
        "WSAQF fit: hinge penalty %.6g over %d pairs",
        hinge_loss(clf, pairs),
        len(pairs),
    )
    return clf


def fit_sos_clf(
    pairs: PairSet,
    seed: int = 0,
    restarts: int = 3,
    max_evaluations: int = 6000,
) -> SosClf:
    """Fit the sum-of-squares candidate by hinge-penalty minimization.

    Free parameters: the triangular factor of the monomial Gram matrix
    (15 numbers in two dimensions).
    """
    dim = pairs.dim
    n_mono = len(monomial_exponents(dim))

    def unpack(theta: np.ndarray) -> SosClf:
        return SosClf(
            gram_matrix=_spd_from_packed(theta, n_mono),
            training_fingerprint=pairs.fingerprint,
        )

    def objective(theta: np.ndarray) -> float:
        try:
            clf = unpack(theta)
        except ValueError:
            return np.inf
        return hinge_loss(clf, pairs)

    scale = max(float(np.abs(pairs.inputs).max()), 1.0)
    theta0 = np.eye(n_mono)[np.tril_indices(n_mono)] / np.sqrt(scale)
    best = _multistart_powell(objective, theta0, seed, restarts, max_evaluations,
                              perturbation=0.2)
    clf = unpack(best)
    logger.info(
        "SOS fit: hinge penalty %.6g over %d pairs",
        hinge_loss(clf, pairs),
        len(pairs),
    )
    return clf


def fit_baseline(
    pairs: PairSet,
    kind: str,
    seed: int = 0,
    restarts: int = 3,
    max_evaluations: int = 6000,
) -> WsaqfClf | SosClf:
    """Fit a parametric baseline by name: 'wsaqf' or 'sos'."""
    if kind == "wsaqf":
        return fit_wsaqf_clf(pairs, seed=seed, restarts=restarts,
                             max_evaluations=max_evaluations)
    if kind == "sos":
        return fit_sos_clf(pairs, seed=seed, restarts=restarts,
                           max_evaluations=max_evaluations)
    raise ValueError(f"unknown baseline kind {kind!r}; expected 'wsaqf' or 'sos'")


def load_clf(path: str | Path):
    """Load any Lyapunov-candidate file by inspecting its 'kind' field."""
    from .npclf import NpClf

    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    kind = data.get("kind")
    if kind == "np_clf":
        return NpClf.from_dict(data)
    if kind == "wsaqf_clf":
        return WsaqfClf.from_dict(data)
    if kind == "sos_clf":
        return SosClf.from_dict(data)
    raise ValueError(f"unrecognized Lyapunov-candidate file kind {kind!r}")
