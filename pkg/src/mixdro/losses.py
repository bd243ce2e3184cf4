"""The six supported losses: values, Lipschitz moduli, affine pieces and conic epigraphs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conic import ConicProgram, Expr

LIPSCHITZ_KINDS = ("logloss", "smooth_hinge", "huber")
PIECEWISE_KINDS = ("hinge", "pinball", "tau_insensitive")
CLASSIFICATION_KINDS = ("logloss", "smooth_hinge", "hinge")
KINDS = LIPSCHITZ_KINDS + PIECEWISE_KINDS


@dataclass(frozen=True)
class LossSpec:
    """A loss ``L(e)``.

    For classification ``e = y * score`` (a margin); for regression ``e = score - y``
    (a residual). ``param`` is delta for huber and tau for pinball / tau_insensitive.
    """

    kind: str
    param: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss {self.kind!r}; choose from {KINDS}")
        p = self.param
        if self.kind == "huber":
            p = 1.0 if p is None else float(p)
            if not p > 0:
                raise ValueError("huber delta must be positive")
        elif self.kind == "pinball":
            p = 0.5 if p is None else float(p)
            if not 0 <= p <= 1:
                raise ValueError("pinball tau must lie in [0, 1]")
        elif self.kind == "tau_insensitive":
            p = 0.0 if p is None else float(p)
            if not p >= 0:
                raise ValueError("tau_insensitive tau must be nonnegative")
        else:
            p = None
        object.__setattr__(self, "param", p)

    @property
    def task(self) -> str:
        return "classification" if self.kind in CLASSIFICATION_KINDS else "regression"

    @property
    def piecewise(self) -> bool:
        return self.kind in PIECEWISE_KINDS

    def __call__(self, e):
        return eval_loss(self, e)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "param": self.param}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(d["kind"], d.get("param"))

    def __str__(self) -> str:
        return self.kind if self.param is None else f"{self.kind}({self.param:g})"


def eval_loss(loss: LossSpec, e):
    """Loss value at ``e`` (scalar or array)."""
    e = np.asarray(e, dtype=float)
    k = loss.kind
    if k == "hinge":
        out = np.maximum(1.0 - e, 0.0)
    elif k == "logloss":
        out = np.logaddexp(0.0, -e)
    elif k == "smooth_hinge":
        out = np.where(e <= 0, 0.5 - e, np.where(e < 1, 0.5 * (1.0 - e) ** 2, 0.0))
    elif k == "huber":
        d = loss.param
        a = np.abs(e)
        out = np.where(a <= d, 0.5 * e * e, d * (a - 0.5 * d))
    elif k == "pinball":
        t = loss.param
        out = np.maximum(-t * e, (1.0 - t) * e)
    else:
        out = np.maximum(np.abs(e) - loss.param, 0.0)
    return float(out) if out.ndim == 0 else out


def lipschitz_modulus(loss: LossSpec) -> float:
    k = loss.kind
    if k == "huber":
        return loss.param
    if k == "pinball":
        return max(loss.param, 1.0 - loss.param)
    return 1.0


def affine_pieces(loss: LossSpec) -> list[tuple[float, float]]:
    """Pieces (a_j, b_j) with ``L(e) = max_j a_j e + b_j``."""
    k = loss.kind
    if k == "hinge":
        return [(-1.0, 1.0), (0.0, 0.0)]
    if k == "pinball":
        t = loss.param
        return [(-t, 0.0), (1.0 - t, 0.0)]
    if k == "tau_insensitive":
        t = loss.param
        return [(1.0, -t), (-1.0, -t), (0.0, 0.0)]
    raise ValueError(f"{k} is not piece-wise affine")


@dataclass(frozen=True)
class EpigraphRecipe:
    """Conic description of ``L(e) <= o`` for a batch of affine pairs ``(e, o)``.

    ``memberships`` lists (cone, dimension) per instance; ``n_aux`` auxiliaries
    are created per instance.
    """

    loss: LossSpec
    n_aux: int
    memberships: tuple[tuple[str, int], ...]
    piece: int | None = None

    def instantiate(self, prog: ConicProgram, e: Expr, o: Expr) -> np.ndarray:
        """Add the rows for every instance; returns the auxiliary indices (m, n_aux)."""
        m = e.m
        k = self.loss.kind
        if self.loss.piecewise:
            pieces = affine_pieces(self.loss)
            if self.piece is not None:
                pieces = [pieces[self.piece]]
            prog.add_nonneg(Expr.vstack([o - e * a - b for a, b in pieces]))
            return np.zeros((m, 0), dtype=int)
        aux = prog.add_variables(m * self.n_aux, f"{k}_aux").reshape(m, self.n_aux)
        one = Expr.const(np.ones(m))
        if k == "smooth_hinge":
            w = prog.var(aux[:, 0])
            r = w - e
            prog.add("rsoc", Expr.interleave([o - 1.0 + w, one, r]), 3)
            prog.add("rsoc", Expr.interleave([o, one, r]), 3)
        elif k == "huber":
            d = self.loss.param
            p = prog.var(aux[:, 0])
            r = e - p
            prog.add("rsoc", Expr.interleave([o - p * d, one, r]), 3)
            prog.add("rsoc", Expr.interleave([o + p * d, one, r]), 3)
        else:  # logloss: exp(-o) + exp(-e - o) <= 1
            u1, u2 = prog.var(aux[:, 0]), prog.var(aux[:, 1])
            prog.add("exp", Expr.interleave([-o, one, u1]))
            prog.add("exp", Expr.interleave([-e - o, one, u2]))
            prog.add_nonneg(1.0 - u1 - u2)
        return aux


def epigraph(loss: LossSpec, piece: int | None = None) -> EpigraphRecipe:
    """Epigraph recipe of the whole loss, or of a single affine piece."""
    k = loss.kind
    if loss.piecewise:
        count = 1 if piece is not None else len(affine_pieces(loss))
        return EpigraphRecipe(loss, 0, (("nonneg", 1),) * count, piece)
    if piece is not None:
        raise ValueError(f"{k} has no affine pieces")
    if k == "logloss":
        return EpigraphRecipe(loss, 2, (("exp", 3), ("exp", 3), ("nonneg", 1)))
    return EpigraphRecipe(loss, 1, (("rsoc", 3), ("rsoc", 3)))
