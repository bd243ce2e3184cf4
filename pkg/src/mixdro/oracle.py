"""Most-violated-constraint search over the discrete support Z.

A constraint group (n, i) has the form ``f(w'z + w0) - h(dz(z, z^n)) <= sigma_n`` with
``f`` convex and ``h(delta) = c + lam_kz * delta**(1/p)``. For every mismatch count
delta the extreme values of ``w'z`` are reached by switching the delta groups with the
largest (or smallest) best-alternative gains, so at most 2K + 2 candidates need to be
evaluated instead of all of Z.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DiscreteSchema, mismatch_counts
from .losses import LossSpec, affine_pieces, eval_loss


class Transform:
    """The scalar map f of a constraint group: a full loss or one of its affine pieces."""

    def __init__(self, loss: LossSpec, piece: int | None = None):
        self.loss = loss
        self.piece = piece
        if piece is not None:
            self.a, self.b = affine_pieces(loss)[piece]

    def __call__(self, e):
        if self.piece is None:
            return eval_loss(self.loss, e)
        return self.a * np.asarray(e, dtype=float) + self.b

    def __repr__(self):
        return f"Transform({self.loss}, piece={self.piece})"


@dataclass(frozen=True)
class ConstraintGroup:
    n: int
    i: int
    w: np.ndarray
    w0: float
    zn: np.ndarray
    f: Callable
    h_const: float
    lam_kz: float
    p: float = 1.0

    def h(self, delta):
        return self.h_const + self.lam_kz * np.asarray(delta, dtype=float) ** (1.0 / self.p)

    def lhs(self, z: np.ndarray, schema: DiscreteSchema) -> float:
        z = np.asarray(z, dtype=float)
        delta = mismatch_counts(z, self.zn, schema)[0]
        return float(self.f(float(z @ self.w) + self.w0) - self.h(delta))


@dataclass(frozen=True)
class ViolatedCut:
    z: np.ndarray
    violation: float
    mismatch_count: int


def _levels(Z: np.ndarray, schema: DiscreteSchema) -> np.ndarray:
    return schema.to_levels(Z)


def best_alternatives(W: np.ndarray, cur: np.ndarray, schema: DiscreteSchema):
    """Per-group best alternative level for mu = +1 and mu = -1.

    Returns ``(best, gain)`` each of shape (2, N, K): the level index maximizing
    ``mu * w_m' z_m`` over the levels other than the current one (lowest index on
    ties) and the signed change ``w_m'(z*_m - z^n_m)``.
    """
    N, K = cur.shape
    best = np.zeros((2, N, K), dtype=int)
    gain = np.zeros((2, N, K))
    sizes = np.asarray(schema.group_sizes)
    offsets = np.asarray(schema.offsets)
    for k in np.unique(sizes):
        groups = np.nonzero(sizes == k)[0]
        cols = offsets[groups][:, None] + np.arange(k - 1)[None, :]
        vals = np.concatenate([np.zeros((N, groups.size, 1)), W[:, cols]], axis=2)  # (N, g, k)
        c = cur[:, groups]
        current = np.take_along_axis(vals, c[..., None], axis=2)[..., 0]
        for s, mu in enumerate((1.0, -1.0)):
            scored = mu * vals
            np.put_along_axis(scored, c[..., None], -np.inf, axis=2)
            b = scored.argmax(axis=2)
            best[s][:, groups] = b
            gain[s][:, groups] = np.take_along_axis(vals, b[..., None], axis=2)[..., 0] - current
    return best, gain


def candidate_orders(gain: np.ndarray) -> np.ndarray:
    """Group permutations sorting ``mu * gain`` in descending order (stable)."""
    mu = np.array([1.0, -1.0])[:, None, None]
    return np.argsort(-(mu * gain), axis=2, kind="stable")


def most_violated_batch(f: Callable, W: np.ndarray, w0: np.ndarray, Zn: np.ndarray,
                        h_const: np.ndarray, lam_kz: float, p: float, sigma: np.ndarray,
                        schema: DiscreteSchema):
    """Vectorized search over N constraint groups that share ``f``, ``lam_kz`` and ``p``.

    Returns ``(Z, violation, delta)`` with Z of shape (N, Mz).
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    Zn = np.atleast_2d(np.asarray(Zn, dtype=float))
    N, K = W.shape[0], schema.K
    w0 = np.broadcast_to(np.asarray(w0, dtype=float), (N,))
    h_const = np.broadcast_to(np.asarray(h_const, dtype=float), (N,))
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (N,))
    g0 = w0 + np.einsum("ij,ij->i", W, Zn)
    if K == 0:
        viol = np.asarray(f(g0), dtype=float) - h_const - sigma
        return Zn.copy(), viol, np.zeros(N, dtype=int)
    cur = _levels(Zn, schema)
    best, gain = best_alternatives(W, cur, schema)
    order = candidate_orders(gain)
    steps = np.take_along_axis(gain, order, axis=2)
    g = g0[None, :, None] + np.concatenate([np.zeros((2, N, 1)), np.cumsum(steps, axis=2)], axis=2)
    dvals = np.arange(K + 1, dtype=float) ** (1.0 / p)
    vals = np.asarray(f(g), dtype=float) - (h_const[None, :, None] + lam_kz * dvals[None, None, :]) - sigma[None, :, None]
    flat = np.concatenate([vals[0], vals[1]], axis=1)  # mu = +1 candidates first
    pick = flat.argmax(axis=1)
    mu_idx, delta = np.divmod(pick, K + 1)
    rows = np.arange(N)
    rank = np.empty_like(order)
    np.put_along_axis(rank, order, np.arange(K)[None, None, :].repeat(N, axis=1).repeat(2, axis=0), axis=2)
    switched = rank[mu_idx, rows] < delta[:, None]
    levels = np.where(switched, best[mu_idx, rows], cur)
    Z = schema.from_levels(levels)
    # recompute directly from z so the reported violation is exact for the returned index
    viol = (np.asarray(f(w0 + np.einsum("ij,ij->i", W, Z)), dtype=float)
            - (h_const + lam_kz * delta.astype(float) ** (1.0 / p)) - sigma)
    return Z, viol, delta


def most_violated(group: ConstraintGroup, schema: DiscreteSchema, sigma_n: float) -> ViolatedCut:
    Z, viol, delta = most_violated_batch(group.f, group.w[None, :], group.w0, group.zn[None, :],
                                         group.h_const, group.lam_kz, group.p, sigma_n, schema)
    return ViolatedCut(Z[0], float(viol[0]), int(delta[0]))


def brute_force(group: ConstraintGroup, schema: DiscreteSchema, sigma_n: float,
                limit: int = 10**6) -> ViolatedCut:
    """Reference oracle: evaluate every element of Z (lowest enumeration index on ties)."""
    if schema.size > limit:
        raise ValueError(f"|Z| = {schema.size} exceeds the brute-force limit {limit}")
    Zall = schema.enumerate(limit)
    delta = mismatch_counts(Zall, group.zn, schema)
    vals = np.asarray(group.f(Zall @ group.w + group.w0), dtype=float) - group.h(delta) - sigma_n
    k = int(np.argmax(vals))
    return ViolatedCut(Zall[k], float(vals[k]), int(delta[k]))
