"""Relaxed master programs of the Wasserstein learning problem over a finite cut set.

Every constraint is indexed by ``(n, i, z)``: sample ``n``, constraint group ``i``
(a label-flip sign for classification and/or a loss piece) and a discrete point
``z``. With ``e`` the margin (classification) or residual (regression) at ``z`` and
the sample's continuous features, a cut reads::

    f_i(e) <= s_n + lambda * (kappa_z * dz(z, z^n) + kappa_y * [flipped]) - q_ni'(d - C xi^n)

and the variables are shared with the hypothesis-level rows ``||.||_* <= lambda``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, Expr, add_dual_norm_rows
from .core import INF, Dataset, GroundMetric, Hypothesis, mismatch_rows
from .losses import LossSpec, affine_pieces, epigraph, lipschitz_modulus
from .oracle import Transform

MODES = ("mixed", "continuous_baseline")


@dataclass(frozen=True)
class BoxSupport:
    """Axis-aligned support for the continuous features (and the output, for regression).

    Infinite entries leave that side unbounded.
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    y_lower: float = -INF
    y_upper: float = INF

    def __post_init__(self):
        lo = tuple(float(v) for v in self.lower)
        hi = tuple(float(v) for v in self.upper)
        if len(lo) != len(hi):
            raise ValueError("box bounds differ in length")
        if any(not a < b for a, b in zip(lo, hi)) or not self.y_lower < self.y_upper:
            raise ValueError("box support has an empty interior (no Slater point)")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "y_lower", float(self.y_lower))
        object.__setattr__(self, "y_upper", float(self.y_upper))

    def rows(self, task: str):
        """``(Cx, cy, d)`` with the support written as ``Cx x + cy y <= d``."""
        Mx = len(self.lower)
        Cx, cy, d = [], [], []
        eye = np.eye(Mx)
        for k in range(Mx):
            if math.isfinite(self.upper[k]):
                Cx.append(eye[k]); cy.append(0.0); d.append(self.upper[k])
            if math.isfinite(self.lower[k]):
                Cx.append(-eye[k]); cy.append(0.0); d.append(-self.lower[k])
        if task == "regression":
            if math.isfinite(self.y_upper):
                Cx.append(np.zeros(Mx)); cy.append(1.0); d.append(self.y_upper)
            if math.isfinite(self.y_lower):
                Cx.append(np.zeros(Mx)); cy.append(-1.0); d.append(-self.y_lower)
        Cx = np.array(Cx, dtype=float).reshape(len(d), Mx)
        return Cx, np.array(cy), np.array(d)

    def contains(self, data: Dataset, tol: float = 1e-12) -> bool:
        lo, hi = np.array(self.lower), np.array(self.upper)
        ok = np.all(data.X >= lo - tol) and np.all(data.X <= hi + tol)
        if data.task == "regression":
            ok = ok and np.all(data.y >= self.y_lower - tol) and np.all(data.y <= self.y_upper + tol)
        return bool(ok)

    def extend(self, extra: int) -> "BoxSupport":
        return BoxSupport(self.lower + (-INF,) * extra, self.upper + (INF,) * extra, self.y_lower, self.y_upper)

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper),
                "y_lower": self.y_lower, "y_upper": self.y_upper}


@dataclass(frozen=True)
class ModelConfig:
    loss: LossSpec
    metric: GroundMetric = field(default_factory=GroundMetric)
    epsilon: float = 0.0
    support: BoxSupport | None = None
    ridge_alpha: float = 0.0
    mode: str = "mixed"
    bound: float | None = None  # optional box on |beta|, lambda and q (numerical backstop)
    intercept: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0 or math.isinf(self.epsilon):
            raise ValueError("epsilon must be a finite nonnegative number")
        if not self.ridge_alpha >= 0:
            raise ValueError("ridge_alpha must be nonnegative")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.support is not None and not self.loss.piecewise:
            raise ValueError(f"{self.loss.kind} requires an unbounded support")
        if self.bound is not None and not self.bound > 0:
            raise ValueError("bound must be positive")

    def check(self, data: Dataset) -> None:
        if self.loss.task != data.task:
            raise ValueError(f"loss {self.loss.kind} is for {self.loss.task}, data is {data.task}")
        if self.support is not None:
            if len(self.support.lower) != data.Mx:
                raise ValueError(f"box support has {len(self.support.lower)} bounds, data has Mx = {data.Mx}")
            if not self.support.contains(data):
                raise ValueError("training samples lie outside the box support")

    def to_dict(self) -> dict:
        return {"loss": self.loss.to_dict(), "metric": self.metric.to_dict(), "epsilon": self.epsilon,
                "support": None if self.support is None else self.support.to_dict(),
                "ridge_alpha": self.ridge_alpha, "mode": self.mode, "bound": self.bound,
                "intercept": self.intercept}


@dataclass(frozen=True)
class GroupSpec:
    """Constraint group: loss piece (None = whole loss) and label sign (None for regression)."""

    piece: int | None
    sign: int | None

    @property
    def flipped(self) -> bool:
        return self.sign == -1


def constraint_groups(loss: LossSpec, metric: GroundMetric) -> tuple[GroupSpec, ...]:
    pieces = range(len(affine_pieces(loss))) if loss.piecewise else [None]
    if loss.task == "regression":
        return tuple(GroupSpec(j, None) for j in pieces)
    signs = (1,) if metric.output_fixed else (1, -1)
    return tuple(GroupSpec(j, t) for t in signs for j in pieces)


class ActiveCutSet:
    """The cut set W: triples (n, i, z) without duplicates."""

    def __init__(self, Mz: int):
        self.Mz = Mz
        self._keys: set = set()
        self._n: list[int] = []
        self._i: list[int] = []
        self._z: list[np.ndarray] = []

    def add(self, n: int, i: int, z: np.ndarray) -> bool:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.Mz:
            raise ValueError("cut index does not match the schema width")
        key = (int(n), int(i), z.astype(np.int8).tobytes())
        if key in self._keys:
            return False
        self._keys.add(key)
        self._n.append(int(n))
        self._i.append(int(i))
        self._z.append(z)
        return True

    def __contains__(self, item) -> bool:
        n, i, z = item
        return (int(n), int(i), np.asarray(z).astype(np.int8).tobytes()) in self._keys

    def __len__(self) -> int:
        return len(self._n)

    def __iter__(self):
        return iter(zip(self._n, self._i, self._z))

    def arrays(self):
        Z = np.array(self._z).reshape(len(self._z), self.Mz)
        return np.array(self._n, dtype=int), np.array(self._i, dtype=int), Z

    def copy(self) -> "ActiveCutSet":
        out = ActiveCutSet(self.Mz)
        for n, i, z in self:
            out.add(n, i, z)
        return out


@dataclass
class MasterMap:
    """Where the named quantities live in a built master program."""

    beta: np.ndarray
    lam: int
    s: np.ndarray
    q: np.ndarray | None
    ridge: int | None
    groups: tuple[GroupSpec, ...]
    Mx: int
    Mz: int

    def hypothesis(self, x: np.ndarray) -> Hypothesis:
        b = x[self.beta]
        return Hypothesis(b[0], b[1:1 + self.Mx], b[1 + self.Mx:])

    def q_values(self, x: np.ndarray) -> np.ndarray | None:
        return None if self.q is None else x[self.q]


def prepare(data: Dataset, config: ModelConfig) -> tuple[Dataset, ModelConfig]:
    """Fold the discrete block into the continuous one for the continuous baseline."""
    config.check(data)
    if config.mode == "mixed":
        return data, config
    folded = data.fold_discrete(())
    support = None if config.support is None else config.support.extend(data.Mz)
    return folded, replace(config, mode="mixed", support=support)


def unfold_hypothesis(h: Hypothesis, data: Dataset) -> Hypothesis:
    """Map a hypothesis of the folded data back to the original (x, z) layout."""
    return Hypothesis(h.beta0, h.beta_x[:data.Mx], h.beta_x[data.Mx:])


def fold_hypothesis(h: Hypothesis) -> Hypothesis:
    return Hypothesis(h.beta0, np.concatenate([h.beta_x, h.beta_z]), np.zeros(0))


def _support_terms(data: Dataset, config: ModelConfig):
    """(Cx, cy, d, slack) with slack[n] = d - Cx x^n - cy y^n, or None when no duals are needed."""
    if config.support is None:
        return None
    Cx, cy, d = config.support.rows(data.task)
    if d.size == 0:
        return None
    ycol = data.y if data.task == "regression" else np.zeros(data.N)
    slack = d[None, :] - data.X @ Cx.T - ycol[:, None] * cy[None, :]
    return Cx, cy, d, slack


def margin_scale(data: Dataset, g: GroupSpec, n: np.ndarray) -> np.ndarray:
    """Multiplier of the score inside the loss argument."""
    if data.task == "classification":
        return g.sign * data.y[n]
    return np.ones(len(n))


def build_master(data: Dataset, config: ModelConfig, cuts: ActiveCutSet,
                 fixed: Hypothesis | None = None) -> tuple[ConicProgram, MasterMap]:
    """Build the relaxed master over ``cuts``; ``fixed`` freezes the hypothesis."""
    data, config = prepare(data, config)
    prog, mmap, sup = base_program(data, config, fixed)
    if len(cuts):
        cn, ci, cz = cuts.arrays()
        for gi, g in enumerate(mmap.groups):
            sel = np.nonzero(ci == gi)[0]
            if sel.size:
                _add_cuts(prog, data, config, g, gi, cn[sel], cz[sel], mmap.beta, mmap.lam, mmap.s, mmap.q, sup)
    return prog, mmap


def base_program(data: Dataset, config: ModelConfig, fixed: Hypothesis | None = None):
    """Variables, objective and hypothesis-level rows shared by every formulation.

    ``data`` and ``config`` must already be prepared. Returns (program, map, support terms).
    """
    if fixed is not None and (fixed.beta_x.size != data.Mx or fixed.beta_z.size != data.Mz):
        raise ValueError("fixed hypothesis does not match the (folded) data layout")
    N, Mx, Mz = data.N, data.Mx, data.Mz
    loss, metric = config.loss, config.metric
    groups = constraint_groups(loss, metric)
    bnd = config.bound if config.bound is not None else INF

    prog = ConicProgram()
    beta = prog.add_variables(1 + Mx + Mz, "beta", -bnd, bnd)
    if fixed is not None:
        vals = np.concatenate([[fixed.beta0], fixed.beta_x, fixed.beta_z])
        prog.set_bounds(beta, vals, vals)
    elif not config.intercept:
        prog.set_bounds(beta[:1], 0.0, 0.0)
    lam = int(prog.add_variables(1, "lambda", 0.0, bnd)[0])
    s = prog.add_variables(N, "s", 0.0)
    prog.add_objective(lam, config.epsilon)
    prog.add_objective(s, 1.0 / N)

    sup = _support_terms(data, config)
    q = None
    if sup is not None:
        Cx, cy, d, slack = sup
        r = d.size
        q = prog.add_variables(N * len(groups) * r, "q", 0.0, bnd).reshape(N, len(groups), r)

    lip = lipschitz_modulus(loss)
    lam_e = prog.var(lam)
    bx = beta[1:1 + Mx]
    if q is None:
        if Mx:
            add_dual_norm_rows(prog, prog.var(bx) * lip, lam_e, metric.x_norm)
        if data.task == "regression" and not metric.output_fixed:
            prog.add_nonneg(lam_e * metric.kappa_y - lip)
    else:
        pieces = affine_pieces(loss)
        n_idx = np.arange(N)
        for gi, g in enumerate(groups):
            a = pieces[g.piece][0]
            coef = a * margin_scale(data, g, n_idx)
            if Mx:
                # rows n*Mx + k: coef_n * beta_x[k] - sum_l Cx[l, k] q[n, gi, l]
                rows_b = np.arange(N * Mx)
                cols_b = np.tile(bx, N)
                vals_b = np.repeat(coef, Mx)
                nn, kk, ll = np.nonzero(np.broadcast_to(Cx.T[None, :, :] != 0, (N, Mx, r)))
                rows_q = nn * Mx + kk
                cols_q = q[nn, gi, ll]
                vals_q = -Cx[ll, kk]
                vec = Expr.sparse(np.concatenate([rows_b, rows_q]), np.concatenate([cols_b, cols_q]),
                                  np.concatenate([vals_b, vals_q]), N * Mx)
                add_dual_norm_rows(prog, vec, lam_e.repeat(N), metric.x_norm)
            if data.task == "regression" and not metric.output_fixed:
                # |-a - cy'q| <= lambda * kappa_y
                nn, ll = np.nonzero(np.broadcast_to(cy[None, :] != 0, (N, r)))
                inner = Expr.sparse(nn, q[nn, gi, ll], -cy[ll], N) - a
                bound = lam_e.repeat(N) * metric.kappa_y
                prog.add_nonneg(Expr.vstack([bound - inner, bound + inner]))

    ridge = None
    if config.ridge_alpha > 0 and Mx + Mz > 0:
        ridge = int(prog.add_variables(1, "ridge", 0.0)[0])
        prog.add("rsoc", Expr.vstack([prog.var(ridge), Expr.const([0.5]), prog.var(beta[1:])]), 2 + Mx + Mz)
        prog.add_objective(ridge, config.ridge_alpha)

    return prog, MasterMap(beta, lam, s, q, ridge, groups, Mx, Mz), sup


def _add_cuts(prog, data, config, g, gi, n, Zc, beta, lam, s, q, sup):
    m = n.size
    metric = config.metric
    scale = margin_scale(data, g, n)
    dense = scale[:, None] * np.hstack([np.ones((m, 1)), data.X[n], Zc])
    const = -data.y[n] if data.task == "regression" else np.zeros(m)
    e = Expr(sp.csr_matrix(dense, shape=(m, beta.size)), const)
    lam_coef = metric.kappa_z * mismatch_rows(Zc, data.Z[n], data.schema).astype(float) ** (1.0 / metric.p)
    if g.flipped:
        lam_coef = lam_coef + metric.kappa_y
    rows = [np.arange(m), np.arange(m)]
    cols = [s[n], np.full(m, lam)]
    vals = [np.ones(m), lam_coef]
    if q is not None:
        slack = sup[3]
        r = slack.shape[1]
        rows.append(np.repeat(np.arange(m), r))
        cols.append(q[n, gi, :].reshape(-1))
        vals.append(-slack[n].reshape(-1))
    o = Expr.sparse(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), m)
    epigraph(config.loss, g.piece).instantiate(prog, e, o)


def seed_cuts(data: Dataset, config: ModelConfig) -> ActiveCutSet:
    """The empirical-point cuts (n, i, z^n) for every sample and group."""
    data, config = prepare(data, config)
    cuts = ActiveCutSet(data.Mz)
    for n in range(data.N):
        for i in range(len(constraint_groups(config.loss, config.metric))):
            cuts.add(n, i, data.Z[n])
    return cuts


def full_cuts(data: Dataset, config: ModelConfig, limit: int = 10**5) -> ActiveCutSet:
    """Every constraint index [N] x I x Z (small instances only)."""
    data, config = prepare(data, config)
    Zall = data.schema.enumerate(limit)
    G = len(constraint_groups(config.loss, config.metric))
    if data.N * G * Zall.shape[0] > limit:
        raise ValueError("complete cut set too large")
    cuts = ActiveCutSet(data.Mz)
    for n in range(data.N):
        for i in range(G):
            for z in Zall:
                cuts.add(n, i, z)
    return cuts


def oracle_inputs(data: Dataset, config: ModelConfig, mmap: MasterMap, x: np.ndarray, gi: int):
    """Affine data ``(f, W, w0, h_const, lam_kz)`` of group ``gi`` for all samples at point x."""
    g = mmap.groups[gi]
    h = mmap.hypothesis(x)
    lam = max(float(x[mmap.lam]), 0.0)
    n = np.arange(data.N)
    scale = margin_scale(data, g, n)
    W = scale[:, None] * h.beta_z[None, :]
    w0 = scale * (h.beta0 + data.X @ h.beta_x)
    if data.task == "regression":
        w0 = w0 - data.y
    h_const = np.full(data.N, lam * config.metric.kappa_y if g.flipped else 0.0)
    if mmap.q is not None:
        sup = _support_terms(data, config)
        h_const = h_const - np.einsum("nr,nr->n", x[mmap.q[:, gi, :]], sup[3])
    return Transform(config.loss, g.piece), W, w0, h_const, lam * config.metric.kappa_z


def objective(config: ModelConfig, mmap: MasterMap, x: np.ndarray, sigma: np.ndarray) -> float:
    """f0 = lambda * eps + mean(sigma) (+ alpha * ||beta||^2)."""
    val = max(float(x[mmap.lam]), 0.0) * config.epsilon + float(np.mean(sigma))
    if config.ridge_alpha > 0:
        b = x[mmap.beta[1:]]
        val += config.ridge_alpha * float(b @ b)
    return val


def evaluate_worst_case(data: Dataset, config: ModelConfig, hypothesis: Hypothesis, options=None) -> float:
    """Worst-case expected loss of a fixed hypothesis over the ambiguity ball."""
    from .cutter import evaluate_worst_case as _ewc

    return _ewc(data, config, hypothesis, options)


def build_continuous_baseline(data: Dataset, config: ModelConfig) -> tuple[ConicProgram, MasterMap]:
    """Master of the baseline that treats the one-hot columns as unbounded reals."""
    config = replace(config, mode="continuous_baseline")
    return build_master(data, config, seed_cuts(data, config))
