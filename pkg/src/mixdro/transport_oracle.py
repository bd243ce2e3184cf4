"""Primal worst-case expectation over a finite support, solved as a transport LP.

This is an independent route to the worst-case value: it never touches the master
programs, so agreement with the dual cutting-plane value is a meaningful check.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .core import INF, Dataset, DiscreteSchema, GroundMetric, Hypothesis, mismatch_rows
from .losses import LossSpec, eval_loss


@dataclass(frozen=True, eq=False)
class FiniteSupport:
    """Atoms ``(features, y)`` with a pairwise ground-distance matrix (inf = forbidden move)."""

    features: np.ndarray
    y: np.ndarray
    dist: np.ndarray
    task: str
    names: tuple[str, ...] = ()

    def __post_init__(self):
        D = np.asarray(self.dist, dtype=float)
        if D.shape != (len(self.y), len(self.y)):
            raise ValueError("distance matrix does not match the atoms")
        if not np.allclose(D, D.T) or np.any(np.diag(D) != 0) or np.any(D < 0):
            raise ValueError("distance matrix must be symmetric, nonnegative with zero diagonal")

    @property
    def size(self) -> int:
        return len(self.y)

    @classmethod
    def from_schema(cls, schema: DiscreteSchema, metric: GroundMetric, task: str,
                    y_values=(-1.0, 1.0)) -> "FiniteSupport":
        """All atoms Z x Y for a data set without continuous features."""
        Zall = schema.enumerate()
        y_values = np.asarray(y_values, dtype=float)
        F = np.repeat(Zall, len(y_values), axis=0)
        y = np.tile(y_values, len(Zall))
        S = len(y)
        ii, jj = np.meshgrid(np.arange(S), np.arange(S), indexing="ij")
        dzv = mismatch_rows(F[ii.ravel()], F[jj.ravel()], schema).reshape(S, S) ** (1.0 / metric.p)
        if task == "classification":
            dyv = (y[:, None] != y[None, :]).astype(float)
        else:
            dyv = np.abs(y[:, None] - y[None, :])
        with np.errstate(invalid="ignore"):
            ycost = np.where(dyv > 0, metric.kappa_y * dyv, 0.0)
        names = tuple(f"z={''.join(str(int(v)) for v in F[k])},y={y[k]:g}" for k in range(S))
        return cls(F, y, metric.kappa_z * dzv + ycost, task, names)

    @classmethod
    def toy(cls, kappa_z: float = 1.0, kappa_y: float = 1.0) -> "FiniteSupport":
        """Four atoms (z, y) in {-1, +1}^2 with z coded as a single +-1 feature."""
        atoms = list(itertools.product((-1.0, 1.0), (-1.0, 1.0)))
        F = np.array([[z] for z, _ in atoms])
        y = np.array([y for _, y in atoms])
        D = np.array([[kappa_z * (a[0] != b[0]) + (kappa_y * (a[1] != b[1]) if a[1] != b[1] else 0.0)
                       for b in atoms] for a in atoms])
        names = tuple(f"({int(z):+d},{int(y_):+d})" for z, y_ in atoms)
        return cls(F, y, D, "classification", names)

    def locate(self, features: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Atom index of every (features, y) row."""
        features = np.atleast_2d(features)
        lookup = {(tuple(f), float(v)): k for k, (f, v) in enumerate(zip(map(tuple, self.features), self.y))}
        try:
            return np.array([lookup[(tuple(f), float(v))] for f, v in zip(map(tuple, features), y)], dtype=int)
        except KeyError as exc:
            raise ValueError(f"sample {exc} is not an atom of the support") from exc

    def empirical_weights(self, data: Dataset) -> np.ndarray:
        if data.Mx:
            raise ValueError("finite supports need data without continuous features")
        idx = self.locate(data.Z, data.y)
        return np.bincount(idx, minlength=self.size) / data.N

    def losses(self, hypothesis: Hypothesis, loss: LossSpec) -> np.ndarray:
        beta = np.concatenate([hypothesis.beta_x, hypothesis.beta_z])
        score = hypothesis.beta0 + self.features @ beta
        e = self.y * score if self.task == "classification" else score - self.y
        return np.asarray(eval_loss(loss, e), dtype=float)


def worst_case_primal(support: FiniteSupport, weights: np.ndarray, hypothesis: Hypothesis,
                      loss: LossSpec, epsilon: float) -> tuple[float, np.ndarray]:
    """max E_Q[loss] over Q with transport cost to ``weights`` at most ``epsilon``.

    Returns the value and the maximizing distribution over the atoms.
    """
    w = np.asarray(weights, dtype=float)
    if w.shape != (support.size,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-9:
        raise ValueError("weights must be a probability vector over the atoms")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    ell = support.losses(hypothesis, loss)
    src = np.nonzero(w > 0)[0]
    pairs = [(a, b) for a in src for b in range(support.size) if np.isfinite(support.dist[a, b])]
    a_idx = np.array([p[0] for p in pairs])
    b_idx = np.array([p[1] for p in pairs])
    nv = len(pairs)
    cost = support.dist[a_idx, b_idx]
    A_eq = np.zeros((src.size, nv))
    A_eq[np.searchsorted(src, a_idx), np.arange(nv)] = 1.0
    res = linprog(-ell[b_idx], A_ub=cost[None, :], b_ub=[epsilon], A_eq=A_eq, b_eq=w[src],
                  bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"transport LP failed: {res.message}")
    Q = np.bincount(b_idx, weights=res.x, minlength=support.size)
    return float(ell[b_idx] @ res.x), Q
