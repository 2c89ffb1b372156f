"""Dynamics model: one noise-free GP per state dimension, shared inputs.

The model maps a state x_k to the posterior-mean prediction of the successor
state x_{k+1}. With exact (noise-free) observations and distinct training
inputs, the model reproduces every training pair: f(x_k^m) = x_{k+1}^m up to
the jitter used in the solve. Including the (0, 0) pair makes the origin an
equilibrium of the mean dynamics.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .gp import (
    DEFAULT_JITTER,
    GpPosterior,
    Hyperparameters,
    fit_gp,
    kernel_matrix,
    optimize_hyperparameters,
)
from .trajectory import PairSet

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


@dataclass(frozen=True)
class Gpssm:
    """Learned state-transition model with d independent scalar GPs.

    All component GPs share the same training inputs; component i regresses the
    i-th coordinate of the successor states.
    """

    components: tuple[GpPosterior, ...]
    jitter: float
    training_fingerprint: str

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("model needs at least one output component")
        base = self.components[0].train_inputs
        for c in self.components[1:]:
            if c.train_inputs.shape != base.shape or not np.array_equal(
                c.train_inputs, base
            ):
                raise ValueError("all output components must share the same training inputs")

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def train_inputs(self) -> np.ndarray:
        return self.components[0].train_inputs

    def predict(self, x: np.ndarray) -> np.ndarray:
        """Mean successor state for one state (d,) or a batch (n, d)."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        out = np.empty((pts.shape[0], self.dim))
        for i, comp in enumerate(self.components):
            # One cross-kernel per component: lengthscales differ between outputs.
            out[:, i] = kernel_matrix(comp.hyper, pts, comp.train_inputs) @ comp.alpha
        return out[0] if single else out

    def mean_bound(self) -> np.ndarray:
        """Per-dimension bound on |predicted coordinate|, valid for every input."""
        return np.array([c.mean_bound() for c in self.components])

    def to_dict(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "kind": "gp_dynamics",
            "dim": self.dim,
            "jitter": float(self.jitter),
            "training_fingerprint": self.training_fingerprint,
            "train_inputs": [[float(v) for v in row] for row in self.train_inputs],
            "outputs": [
                {
                    "hyperparameters": c.hyper.to_dict(),
                    "alpha": [float(v) for v in c.alpha],
                }
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Gpssm":
        if d.get("kind") != "gp_dynamics":
            raise ValueError(f"not a dynamics model file (kind={d.get('kind')!r})")
        train_inputs = np.asarray(d["train_inputs"], dtype=float)
        jitter = float(d["jitter"])
        components = tuple(
            GpPosterior(
                train_inputs=train_inputs,
                alpha=np.asarray(o["alpha"], dtype=float),
                hyper=Hyperparameters.from_dict(o["hyperparameters"]),
                jitter=jitter,
            )
            for o in d["outputs"]
        )
        if len(components) != int(d["dim"]):
            raise ValueError(
                f"model file declares dim={d['dim']} but stores {len(components)} outputs"
            )
        return cls(
            components=components,
            jitter=jitter,
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
    def load(cls, path: str | Path) -> "Gpssm":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def train_gpssm(
    pairs: PairSet,
    per_dim_hyper: list[Hyperparameters] | str = "optimize",
    jitter: float = DEFAULT_JITTER,
    seed: int = 0,
    max_evaluations: int = 2000,
) -> Gpssm:
    """Train the transition model on supervision pairs.

    ``per_dim_hyper`` is either an explicit list of kernel hyperparameters (one
    per output dimension), the string "optimize" to maximize each output's log
    marginal likelihood, or the string "default" to use the data-scaled
    starting values without search.
    """
    if isinstance(per_dim_hyper, str):
        if per_dim_hyper not in ("optimize", "default"):
            raise ValueError(
                f"per_dim_hyper must be a list, 'optimize', or 'default'; got {per_dim_hyper!r}"
            )
    elif len(per_dim_hyper) != pairs.dim:
        raise ValueError(f"expected {pairs.dim} hyperparameter sets, got {len(per_dim_hyper)}")
    components = []
    for i in range(pairs.dim):
        targets = pairs.targets[:, i]
        if not isinstance(per_dim_hyper, str):
            h = per_dim_hyper[i]
        elif per_dim_hyper == "optimize":
            h = optimize_hyperparameters(
                pairs.inputs, targets, jitter=jitter, seed=seed + i,
                max_evaluations=max_evaluations,
            )
        else:
            from .gp import default_hyperparameters

            h = default_hyperparameters(pairs.inputs, targets)
        components.append(fit_gp(pairs.inputs, targets, h, jitter=jitter))
        logger.debug(
            "output %d: lengthscales=%s signal_std=%.4g",
            i,
            np.array2string(h.lengthscales, precision=4),
            h.signal_std,
        )
    return Gpssm(
        components=tuple(components),
        jitter=jitter,
        training_fingerprint=pairs.fingerprint,
    )
