"""Monolithic program over the convex hull of Z for piece-wise affine losses with p = 1.

With p = 1 the relaxed distance to a binary ``z^n`` is affine on each simplex block::

    D_m(u_m) = sum(u_m)        if z^n_m is the reference level
    D_m(u_m) = 1 - u_{m,l}     if z^n_m = e_l

so the supremum over ``u_m`` of ``c_m'u_m - lambda kappa_z D_m(u_m)`` is a maximum of
``k_m`` affine functions. Each is captured by an epigraph variable ``r_{n,i,m} >= 0``,
giving a single LP with O(N * |I| * K) extra variables and no cutting planes.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .conic import ConicProgram, Expr, SolverError, SolverSettings, solve
from .core import Dataset
from .cutter import CutterOptions, train
from .master import MasterMap, ModelConfig, base_program, margin_scale, prepare
from .losses import affine_pieces


@dataclass
class BoundedCFProgramMap:
    master: MasterMap
    r: np.ndarray  # (N, |I|, K) epigraph variables of the per-block maxima

    def variable_count(self, n_aux: int = 0) -> int:
        return self.master.beta.size + 1 + self.master.s.size + (0 if self.master.q is None else self.master.q.size) \
            + self.r.size + (self.master.ridge is not None) + n_aux


def _block_terms(data: Dataset):
    """(gamma, rho): D_m(u) = gamma[n, m] + rho[n, :] restricted to block m, times u."""
    sch = data.schema
    levels = sch.to_levels(data.Z)
    gamma = (levels > 0).astype(float)
    gidx = sch.group_index()
    rho = np.where(levels[:, gidx] == 0, 1.0, 0.0)
    rho -= data.Z  # column of the active level gets -1
    return gamma, rho


def build_bounded_cf(data: Dataset, config: ModelConfig) -> tuple[ConicProgram, BoundedCFProgramMap]:
    if not config.loss.piecewise:
        raise ValueError(f"{config.loss.kind} has no polynomial-size formulation over conv(Z)")
    if config.metric.p != 1:
        raise ValueError("the formulation over conv(Z) requires p = 1")
    if config.mode != "mixed":
        raise ValueError("mode must be mixed")
    data, config = prepare(data, config)
    prog, mmap, sup = base_program(data, config)
    N, Mx, Mz, K = data.N, data.Mx, data.Mz, data.K
    metric = config.metric
    G = len(mmap.groups)
    r = prog.add_variables(N * G * K, "r", 0.0).reshape(N, G, K)
    gamma, rho = _block_terms(data)
    gidx = data.schema.group_index()
    pieces = affine_pieces(config.loss)
    n_idx = np.arange(N)
    nb = mmap.beta.size
    for gi, g in enumerate(mmap.groups):
        a, b = pieces[g.piece]
        coef = a * margin_scale(data, g, n_idx)  # multiplier of the score, per sample
        # r[n, gi, m] >= coef_n * beta_z[c] - lam * kappa_z * rho[n, c]  for every column c in block m
        if Mz:
            nn, cc = np.meshgrid(n_idx, np.arange(Mz), indexing="ij")
            nn, cc = nn.ravel(), cc.ravel()
            rows = np.arange(N * Mz)
            A = sp.csr_matrix(
                (np.concatenate([np.ones(rows.size), -coef[nn], metric.kappa_z * rho[nn, cc]]),
                 (np.concatenate([rows, rows, rows]),
                  np.concatenate([r[nn, gi, gidx[cc]], mmap.beta[1 + Mx + cc], np.full(rows.size, mmap.lam)]))),
                shape=(rows.size, prog.n))
            prog.add_nonneg(Expr(A))
        # s_n >= coef_n (beta0 + beta_x x^n) + a * const_n + b + sum_m r - lam (kappa_z sum_m gamma + kappa_y [flip]) + q'slack
        const = -a * data.y if data.task == "regression" else np.zeros(N)
        lam_coef = metric.kappa_z * gamma.sum(axis=1) + (metric.kappa_y if g.flipped else 0.0)
        rows, cols, vals = [n_idx], [mmap.s], [np.ones(N)]
        dense = -coef[:, None] * np.hstack([np.ones((N, 1)), data.X])
        rows.append(np.repeat(n_idx, 1 + Mx)); cols.append(np.tile(mmap.beta[:1 + Mx], N)); vals.append(dense.ravel())
        if K:
            rows.append(np.repeat(n_idx, K)); cols.append(r[:, gi, :].ravel()); vals.append(-np.ones(N * K))
        rows.append(n_idx); cols.append(np.full(N, mmap.lam)); vals.append(lam_coef)
        if mmap.q is not None:
            slack = sup[3]
            rows.append(np.repeat(n_idx, slack.shape[1])); cols.append(mmap.q[:, gi, :].ravel()); vals.append(-slack.ravel())
        A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(N, prog.n))
        prog.add_nonneg(Expr(A, -const - b))
    return prog, BoundedCFProgramMap(mmap, r)


def solve_bounded_cf(data: Dataset, config: ModelConfig, settings: SolverSettings | None = None):
    """Build and solve; returns (value, hypothesis, seconds including the build)."""
    t0 = time.perf_counter()
    prog, bmap = build_bounded_cf(data, config)
    res = solve(prog, settings)
    if not res.ok:
        raise SolverError(f"bounded formulation solve failed: {res.status}", res)
    return res.objective, bmap.master.hypothesis(res.x), time.perf_counter() - t0


def certify_equivalence(data: Dataset, config: ModelConfig, tolerance: float = 1e-5,
                        options: CutterOptions | None = None) -> dict:
    """Solve the mixed-feature problem by cutting planes and over conv(Z); compare values."""
    t0 = time.perf_counter()
    mixf = train(data, config, options)
    t_mixf = time.perf_counter() - t0
    bcf_value, _, t_bcf = solve_bounded_cf(data, config, (options or CutterOptions()).solver)
    gap = abs(mixf.objective - bcf_value)
    return {"mixf_value": mixf.objective, "bcf_value": bcf_value, "gap": gap,
            "passed": gap <= tolerance * max(1.0, abs(bcf_value)),
            "mixf_seconds": t_mixf, "bcf_seconds": t_bcf, "mixf_iterations": mixf.log.iterations}
