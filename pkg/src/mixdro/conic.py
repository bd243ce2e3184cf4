"""Solver-agnostic conic programs and the backend that solves them.

A program is a linear objective plus blocks of affine rows ``A x + b`` that must
lie in a cone. Supported cones: ``zero``, ``nonneg``, ``soc`` (first entry is the
norm bound), ``rsoc`` (``2 a b >= ||c||^2``, ``a, b >= 0``) and ``exp``
(``y exp(x / y) <= z``). Pure LPs go to HiGHS, anything else to Clarabel.
"""
from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
import scipy.sparse as sp

CONES = ("zero", "nonneg", "soc", "rsoc", "exp")
STATUSES = ("optimal", "infeasible", "unbounded", "numeric_limit", "iteration_limit")


class SolverError(RuntimeError):
    """A solve did not return an optimal point."""

    def __init__(self, message: str, result: "SolveResult | None" = None):
        super().__init__(message)
        self.result = result


class Expr:
    """A batch of ``m`` affine expressions ``A x + b`` over program variables."""

    __slots__ = ("A", "b")

    def __init__(self, A, b=None):
        A = sp.csr_matrix(A)
        self.A = A
        self.b = np.zeros(A.shape[0]) if b is None else np.broadcast_to(np.asarray(b, dtype=float), (A.shape[0],)).copy()

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @staticmethod
    def var(idx, n: int | None = None) -> "Expr":
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        n = int(idx.max()) + 1 if n is None and idx.size else (n or 0)
        A = sp.csr_matrix((np.ones(idx.size), (np.arange(idx.size), idx)), shape=(idx.size, n))
        return Expr(A)

    @staticmethod
    def const(values) -> "Expr":
        values = np.atleast_1d(np.asarray(values, dtype=float))
        return Expr(sp.csr_matrix((values.size, 0)), values)

    @staticmethod
    def sparse(rows, cols, vals, m: int, b=None) -> "Expr":
        rows, cols = np.asarray(rows, dtype=int), np.asarray(cols, dtype=int)
        n = int(cols.max()) + 1 if cols.size else 0
        return Expr(sp.csr_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(m, n)), b)

    def width(self, n: int) -> sp.csr_matrix:
        A = self.A
        if A.shape[1] == n:
            return A
        if A.shape[1] > n:
            raise ValueError("expression references undeclared variables")
        return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], n))

    def _binary(self, other: "Expr", sign: float) -> "Expr":
        if not isinstance(other, Expr):
            return Expr(self.A, self.b + sign * np.asarray(other, dtype=float))
        if other.m != self.m:
            if other.m == 1:
                other = other.repeat(self.m)
            elif self.m == 1:
                return self.repeat(other.m)._binary(other, sign)
            else:
                raise ValueError(f"row count mismatch {self.m} vs {other.m}")
        n = max(self.A.shape[1], other.A.shape[1])
        A = self.width(n) + sign * other.width(n)
        return Expr(A, self.b + sign * other.b)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self)._binary(other, 1.0)

    def __neg__(self):
        return Expr(-self.A, -self.b)

    def __mul__(self, c):
        c = np.asarray(c, dtype=float)
        if c.ndim == 0:
            return Expr(self.A * float(c), self.b * float(c))
        return Expr(sp.diags(c) @ self.A, self.b * c)

    __rmul__ = __mul__

    def repeat(self, m: int) -> "Expr":
        idx = np.zeros(m, dtype=int)
        return self.rows(idx)

    def rows(self, idx) -> "Expr":
        idx = np.asarray(idx, dtype=int)
        return Expr(self.A[idx], self.b[idx])

    def sum(self) -> "Expr":
        return Expr(sp.csr_matrix(self.A.sum(axis=0)), [self.b.sum()])

    @staticmethod
    def vstack(exprs: Iterable["Expr"]) -> "Expr":
        exprs = list(exprs)
        n = max(e.A.shape[1] for e in exprs)
        return Expr(sp.vstack([e.width(n) for e in exprs], format="csr"), np.concatenate([e.b for e in exprs]))

    @staticmethod
    def interleave(exprs: list["Expr"]) -> "Expr":
        """Rows ordered e0[0], e1[0], ..., e0[1], e1[1], ... (cone blocks per instance)."""
        m = exprs[0].m
        k = len(exprs)
        stacked = Expr.vstack(exprs)
        order = (np.arange(k)[None, :] * m + np.arange(m)[:, None]).reshape(-1)
        return stacked.rows(order)


@dataclass
class Block:
    kind: str
    dim: int
    A: sp.csr_matrix
    b: np.ndarray


@dataclass
class SolverSettings:
    tolerance: float = 1e-8
    max_iterations: int = 500
    time_limit: float = math.inf
    backend: str = "auto"

    def __post_init__(self):
        if self.backend not in ("auto", "clarabel", "highs"):
            raise ValueError(f"unknown backend {self.backend!r}")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class SolveResult:
    status: str
    objective: float
    x: np.ndarray | None
    solve_time: float
    backend: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    @property
    def usable(self) -> bool:
        """Optimal, or solved to reduced accuracy with a primal point available."""
        return self.x is not None and self.status in ("optimal", "inaccurate")


class ConicProgram:
    """Variables, a linear objective and cone memberships of affine rows."""

    def __init__(self):
        self.n = 0
        self._groups: list[tuple[str, int, int]] = []
        self._lb: list[np.ndarray] = []
        self._ub: list[np.ndarray] = []
        self._c: list[tuple[np.ndarray, np.ndarray]] = []
        self.c0 = 0.0
        self.blocks: list[Block] = []

    # construction -----------------------------------------------------------------
    def add_variables(self, count: int, name: str, lb: float = -math.inf, ub: float = math.inf) -> np.ndarray:
        count = int(count)
        idx = np.arange(self.n, self.n + count)
        self._groups.append((name, self.n, count))
        self._lb.append(np.full(count, lb, dtype=float))
        self._ub.append(np.full(count, ub, dtype=float))
        self.n += count
        return idx

    def add_objective(self, idx, coef) -> None:
        idx = np.atleast_1d(np.asarray(idx, dtype=int))
        self._c.append((idx, np.broadcast_to(np.asarray(coef, dtype=float), idx.shape).copy()))

    def set_bounds(self, idx, lb=None, ub=None) -> None:
        lb_all, ub_all = np.concatenate(self._lb), np.concatenate(self._ub)
        if lb is not None:
            lb_all[idx] = lb
        if ub is not None:
            ub_all[idx] = ub
        self._lb, self._ub = [lb_all], [ub_all]

    def add(self, kind: str, expr: Expr, dim: int | None = None) -> int:
        """Require ``expr`` to lie in ``kind``; returns the block id."""
        if kind not in CONES:
            raise ValueError(f"unknown cone {kind!r}")
        if kind in ("zero", "nonneg"):
            dim = 1
        elif kind == "exp":
            dim = 3
        elif dim is None:
            dim = expr.m
        if dim < 1 or expr.m % dim:
            raise ValueError(f"{kind} block of {expr.m} rows is not a multiple of dimension {dim}")
        if kind == "rsoc" and dim < 2:
            raise ValueError("rotated cones need dimension >= 2")
        if expr.A.shape[1] > self.n:
            raise ValueError("row references an undeclared variable")
        self.blocks.append(Block(kind, dim, expr.width(self.n), expr.b))
        return len(self.blocks) - 1

    def add_nonneg(self, expr: Expr) -> int:
        return self.add("nonneg", expr)

    def add_zero(self, expr: Expr) -> int:
        return self.add("zero", expr)

    def var(self, idx) -> Expr:
        return Expr.var(idx, self.n)

    # inspection -------------------------------------------------------------------
    @property
    def lb(self) -> np.ndarray:
        return np.concatenate(self._lb) if self._lb else np.zeros(0)

    @property
    def ub(self) -> np.ndarray:
        return np.concatenate(self._ub) if self._ub else np.zeros(0)

    @property
    def c(self) -> np.ndarray:
        c = np.zeros(self.n)
        for idx, coef in self._c:
            np.add.at(c, idx, coef)
        return c

    def var_name(self, i: int) -> str:
        for name, start, count in self._groups:
            if start <= i < start + count:
                return f"{name}[{i - start}]"
        raise IndexError(i)

    def cone_counts(self) -> dict[str, int]:
        """Number of cone memberships per kind (a nonneg block of m rows counts m)."""
        out = {k: 0 for k in CONES}
        for blk in self.blocks:
            out[blk.kind] += blk.A.shape[0] // blk.dim
        return out

    @property
    def is_lp(self) -> bool:
        return all(b.kind in ("zero", "nonneg") for b in self.blocks)

    def objective_value(self, x: np.ndarray) -> float:
        return float(self.c @ x + self.c0)

    def matrix(self, blk: Block) -> sp.csr_matrix:
        """Block matrix padded to the current number of variables."""
        A = blk.A
        if A.shape[1] == self.n:
            return A
        return sp.csr_matrix((A.data, A.indices, A.indptr), shape=(A.shape[0], self.n))

    def residuals(self, x: np.ndarray) -> list[np.ndarray]:
        return [self.matrix(blk) @ x + blk.b for blk in self.blocks]

    # debug text format ------------------------------------------------------------
    def dump(self, out: TextIO | str) -> None:
        if isinstance(out, str):
            with open(out, "w") as fh:
                self.dump(fh)
            return
        out.write("conic-program 1\n")
        out.write(f"vars {self.n}\n")
        lb, ub = self.lb, self.ub
        for i in range(self.n):
            out.write(f"var {i} {self.var_name(i)} {float(lb[i])!r} {float(ub[i])!r}\n")
        out.write(f"objconst {float(self.c0)!r}\n")
        c = self.c
        for i in np.nonzero(c)[0]:
            out.write(f"obj {i} {float(c[i])!r}\n")
        for blk in self.blocks:
            out.write(f"block {blk.kind} {blk.dim} {blk.A.shape[0]}\n")
            A = blk.A.tocsr().copy()
            A.sort_indices()
            for r in range(A.shape[0]):
                lo, hi = A.indptr[r], A.indptr[r + 1]
                terms = " ".join(f"{j}:{float(v)!r}" for j, v in zip(A.indices[lo:hi], A.data[lo:hi]))
                out.write(f"row {float(blk.b[r])!r} {terms}".rstrip() + "\n")
        out.write("end\n")

    def dumps(self) -> str:
        buf = io.StringIO()
        self.dump(buf)
        return buf.getvalue()

    @classmethod
    def parse(cls, text: str) -> "ConicProgram":
        lines = iter(text.splitlines())
        if next(lines).split()[0] != "conic-program":
            raise ValueError("not a conic program listing")
        prog = cls()
        pending: tuple[str, int, int] | None = None
        rows: list[str] = []

        def flush():
            if pending is None:
                return
            kind, dim, m = pending
            r, cidx, vals, b = [], [], [], np.zeros(m)
            for k, line in enumerate(rows):
                parts = line.split()
                b[k] = float(parts[1])
                for t in parts[2:]:
                    j, v = t.split(":")
                    r.append(k)
                    cidx.append(int(j))
                    vals.append(float(v))
            A = sp.csr_matrix((vals, (r, cidx)), shape=(m, prog.n))
            prog.blocks.append(Block(kind, dim, A, b))

        for line in lines:
            head = line.split(maxsplit=1)[0] if line.strip() else ""
            if head == "vars":
                continue
            if head == "var":
                _, i, name, lb, ub = line.split()
                base, _, k = name.rpartition("[")
                prog.add_variables(1, base, float(lb), float(ub))
                if k != "0]" and prog._groups[-2:-1] and prog._groups[-2][0] == base:
                    prog._groups[-2:] = [(base, prog._groups[-2][1], prog._groups[-2][2] + 1)]
            elif head == "objconst":
                prog.c0 = float(line.split()[1])
            elif head == "obj":
                _, i, v = line.split()
                prog.add_objective(int(i), float(v))
            elif head == "block":
                flush()
                _, kind, dim, m = line.split()
                pending, rows = (kind, int(dim), int(m)), []
            elif head == "row":
                rows.append(line)
            elif head == "end":
                flush()
                pending = None
        return prog


# dual norms -------------------------------------------------------------------------
def add_dual_norm_row(prog: ConicProgram, vec: Expr, bound: Expr, norm: str) -> dict:
    """Encode ``||vec||_* <= bound`` where ``||.||`` is the primal norm ``norm``.

    Returns the created block ids and auxiliary variable indices.
    """
    if bound.m != 1:
        raise ValueError("the bound must be a single affine expression")
    return add_dual_norm_rows(prog, vec, bound, norm)


def add_dual_norm_rows(prog: ConicProgram, vecs: Expr, bounds: Expr, norm: str) -> dict:
    """Batched form: ``vecs`` stacks one k-vector per row of ``bounds`` (instance-major)."""
    if norm not in ("l1", "l2", "linf"):
        raise ValueError(f"unsupported norm {norm!r}")
    m = bounds.m
    if vecs.m % m:
        raise ValueError("vector rows must be a multiple of the number of bounds")
    k = vecs.m // m
    none = np.zeros(0, dtype=int)
    if k == 0:
        return {"blocks": [prog.add_nonneg(bounds)], "aux": none}
    rep = bounds.rows(np.repeat(np.arange(m), k))
    if norm == "l1":  # dual is linf
        return {"blocks": [prog.add_nonneg(Expr.vstack([rep - vecs, rep + vecs]))], "aux": none}
    if norm == "l2":
        stacked = Expr.vstack([bounds, vecs])
        order = np.column_stack([np.arange(m), m + np.arange(m * k).reshape(m, k)]).reshape(-1)
        return {"blocks": [prog.add("soc", stacked.rows(order), dim=k + 1)], "aux": none}
    aux = prog.add_variables(m * k, "abs")  # dual of linf is l1
    a = prog.var(aux)
    b1 = prog.add_nonneg(Expr.vstack([a - vecs, a + vecs]))
    summed = Expr(sp.csr_matrix((np.ones(m * k), (np.repeat(np.arange(m), k), aux)), shape=(m, prog.n)))
    b2 = prog.add_nonneg(bounds - summed)
    return {"blocks": [b1, b2], "aux": aux}


# backends ---------------------------------------------------------------------------
def _fixed_rows(prog: ConicProgram) -> Expr | None:
    lb, ub = prog.lb, prog.ub
    fixed = np.nonzero(lb == ub)[0]
    return prog.var(fixed) - lb[fixed] if fixed.size else None


def _bound_rows(prog: ConicProgram) -> Expr | None:
    lb, ub = prog.lb, prog.ub
    parts = []
    free = lb != ub
    il = np.nonzero(np.isfinite(lb) & free)[0]
    iu = np.nonzero(np.isfinite(ub) & free)[0]
    if il.size:
        parts.append(prog.var(il) - lb[il])
    if iu.size:
        parts.append(Expr(-prog.var(iu).A, ub[iu]))
    return Expr.vstack(parts) if parts else None


def _rotation(rows: int, dim: int) -> sp.csr_matrix:
    first = np.arange(rows // dim) * dim
    r2 = 1 / math.sqrt(2)
    rest = np.setdiff1d(np.arange(rows), np.concatenate([first, first + 1]))
    r = np.concatenate([first, first, first + 1, first + 1, rest])
    c = np.concatenate([first, first + 1, first, first + 1, rest])
    v = np.concatenate([np.full(2 * first.size, r2), np.full(first.size, r2), np.full(first.size, -r2),
                        np.ones(rest.size)])
    return sp.csr_matrix((v, (r, c)), shape=(rows, rows))


def _solve_clarabel(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    res = _clarabel_once(prog, settings, tighten=True)
    if res.status in ("numeric_limit", "inaccurate"):
        retry = _clarabel_once(prog, settings, tighten=False)
        retry.solve_time += res.solve_time
        retry.diagnostics["first_attempt"] = res.diagnostics.get("backend_status")
        if retry.status == "numeric_limit" and res.usable:
            return res
        return retry
    return res


def _clarabel_once(prog: ConicProgram, settings: SolverSettings, tighten: bool) -> SolveResult:
    import clarabel

    n = prog.n
    groups: dict[str, list] = {k: [] for k in ("zero", "nonneg", "soc", "exp")}
    bounds = _bound_rows(prog)
    if bounds is not None:
        groups["nonneg"].append((1, bounds.width(n), bounds.b))
    fixed = _fixed_rows(prog)
    if fixed is not None:
        groups["zero"].append((1, fixed.width(n), fixed.b))
    for blk in prog.blocks:
        A, b = prog.matrix(blk), blk.b
        if blk.kind == "rsoc":
            # (a, b, c) with 2ab >= |c|^2  <=>  ((a+b)/sqrt2, (a-b)/sqrt2, c) in SOC
            T = _rotation(A.shape[0], blk.dim)
            A, b = T @ A, T @ b
            groups["soc"].append((blk.dim, A, b))
        elif blk.kind == "soc":
            groups["soc"].append((blk.dim, A, b))
        else:
            groups[blk.kind].append((blk.dim, A, b))
    mats, vecs, cones = [], [], []
    for kind in ("zero", "nonneg"):
        if groups[kind]:
            A = sp.vstack([g[1] for g in groups[kind]], format="csr")
            mats.append(A)
            vecs.append(np.concatenate([g[2] for g in groups[kind]]))
            if A.shape[0]:
                cones.append(clarabel.ZeroConeT(A.shape[0]) if kind == "zero" else clarabel.NonnegativeConeT(A.shape[0]))
    for dim, A, b in groups["soc"]:
        mats.append(A)
        vecs.append(b)
        cones.extend(clarabel.SecondOrderConeT(dim) for _ in range(A.shape[0] // dim))
    for dim, A, b in groups["exp"]:
        mats.append(A)
        vecs.append(b)
        cones.extend(clarabel.ExponentialConeT() for _ in range(A.shape[0] // 3))
    G = sp.vstack(mats, format="csc") if mats else sp.csc_matrix((0, n))
    h = np.concatenate(vecs) if vecs else np.zeros(0)
    s = clarabel.DefaultSettings()
    s.verbose = False
    # Clarabel's gap tolerance is measured on the scaled problem; two extra digits make
    # the unscaled objective accurate to the requested tolerance in practice.
    tol = max(settings.tolerance * 1e-2, 1e-12) if tighten else settings.tolerance
    s.tol_gap_abs = s.tol_gap_rel = s.tol_feas = tol
    s.tol_infeas_abs = s.tol_infeas_rel = min(1e-8, settings.tolerance)
    s.tol_ktratio = min(1e-6, settings.tolerance * 100)
    s.max_iter = int(settings.max_iterations)
    if math.isfinite(settings.time_limit):
        s.time_limit = float(settings.time_limit)
    P = sp.csc_matrix((n, n))
    t0 = time.perf_counter()
    try:
        # Clarabel form: G' x + s = h', s in K  with  G' = -A, h' = b  so that A x + b = s.
        sol = clarabel.DefaultSolver(P, prog.c, sp.csc_matrix(-G), h, cones, s).solve()
    except Exception as exc:  # backend failure is reported, never raised
        return SolveResult("numeric_limit", math.nan, None, time.perf_counter() - t0, "clarabel",
                           {"error": repr(exc)})
    elapsed = time.perf_counter() - t0
    name = str(sol.status)
    status = {
        "Solved": "optimal",
        "AlmostSolved": "inaccurate",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
        "MaxIterations": "iteration_limit",
        "MaxTime": "iteration_limit",
    }.get(name, "numeric_limit")
    x = np.asarray(sol.x) if status in ("optimal", "inaccurate") else None
    diag = {"backend_status": name, "iterations": sol.iterations}
    if x is None:
        diag["x_approx"] = np.asarray(sol.x)
    obj = float(prog.c @ x + prog.c0) if x is not None else math.nan
    if x is not None:
        diag["dual_objective"] = float(sol.obj_val_dual) + prog.c0  # weak-duality lower bound
    return SolveResult(status, obj, x, elapsed, "clarabel", diag)


def _solve_highs(prog: ConicProgram, settings: SolverSettings) -> SolveResult:
    from scipy.optimize import linprog

    n = prog.n
    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for blk in prog.blocks:
        if blk.kind == "nonneg":  # A x + b >= 0  ->  -A x <= b
            ub_rows.append(-prog.matrix(blk))
            ub_rhs.append(blk.b)
        else:
            eq_rows.append(prog.matrix(blk))
            eq_rhs.append(-blk.b)
    A_ub = sp.vstack(ub_rows, format="csr") if ub_rows else None
    A_eq = sp.vstack(eq_rows, format="csr") if eq_rows else None
    bounds = np.column_stack([prog.lb, prog.ub]) if n else None
    bounds = [(None if not np.isfinite(l) else l, None if not np.isfinite(u) else u) for l, u in bounds] if n else None
    options = {"primal_feasibility_tolerance": max(settings.tolerance, 1e-10),
               "dual_feasibility_tolerance": max(settings.tolerance, 1e-10),
               "presolve": True}
    if math.isfinite(settings.time_limit):
        options["time_limit"] = float(settings.time_limit)
    t0 = time.perf_counter()
    try:
        res = linprog(prog.c, A_ub=A_ub, b_ub=np.concatenate(ub_rhs) if ub_rows else None,
                      A_eq=A_eq, b_eq=np.concatenate(eq_rhs) if eq_rows else None,
                      bounds=bounds, method="highs-ds", options=options)
    except Exception as exc:
        return SolveResult("numeric_limit", math.nan, None, time.perf_counter() - t0, "highs",
                           {"error": repr(exc)})
    elapsed = time.perf_counter() - t0
    status = {0: "optimal", 1: "iteration_limit", 2: "infeasible", 3: "unbounded"}.get(res.status, "numeric_limit")
    x = np.asarray(res.x) if status == "optimal" else None
    obj = float(prog.c @ x + prog.c0) if x is not None else math.nan
    return SolveResult(status, obj, x, elapsed, "highs", {"backend_status": res.message})


def solve(prog: ConicProgram, settings: SolverSettings | None = None) -> SolveResult:
    """Solve ``prog``; failures are reported through ``status``."""
    settings = settings or SolverSettings()
    backend = settings.backend
    if backend == "auto":
        backend = "highs" if prog.is_lp else "clarabel"
    if backend == "highs":
        if not prog.is_lp:
            raise ValueError("the highs backend only accepts linear programs")
        return _solve_highs(prog, settings)
    return _solve_clarabel(prog, settings)
