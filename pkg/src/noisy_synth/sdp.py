"""Small dense semidefinite programming layer.

Problems are built from affine matrix expressions (:class:`Expr`) in scalar,
symmetric and full-matrix decision variables, then handed to cvxopt's
primal-dual interior-point method. Everything a caller relies on is checked
independently of the solver: optimal points are substituted back into every
block (:func:`verify_assignment`) and infeasibility verdicts require a dual
certificate that is re-validated against the original problem data.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .matcore import write_matrix_csv

__all__ = [
    "Expr",
    "bmat",
    "SdpProblem",
    "SdpSettings",
    "SolveReport",
    "Certificate",
    "solve",
    "verify_assignment",
    "OPTIMAL",
    "INFEASIBLE",
    "INACCURATE",
    "ITERATION_LIMIT",
    "UNBOUNDED",
]

OPTIMAL = "Optimal"
INFEASIBLE = "Infeasible"
INACCURATE = "Inaccurate"
ITERATION_LIMIT = "IterationLimit"
UNBOUNDED = "Unbounded"


class Expr:
    """Affine matrix expression ``const + sum_i x_i * terms[i]``.

    ``i`` indexes the scalar unknowns of the owning :class:`SdpProblem`.
    Constant operands may be numpy arrays or numbers; numpy defers to this
    class for ``@`` and arithmetic.
    """

    __array_ufunc__ = None

    def __init__(self, const, terms: Optional[dict] = None):
        self.const = np.atleast_2d(np.asarray(const, dtype=float))
        self.terms = {} if terms is None else terms

    @property
    def shape(self):
        return self.const.shape

    def _coerce(self, other) -> "Expr":
        if isinstance(other, Expr):
            return other
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            arr = np.full(self.shape, float(arr))
        return Expr(arr)

    def __add__(self, other):
        other = self._coerce(other)
        if other.shape != self.shape:
            raise ValueError(f"shape mismatch {self.shape} + {other.shape}")
        terms = dict(self.terms)
        for k, v in other.terms.items():
            terms[k] = terms[k] + v if k in terms else v
        return Expr(self.const + other.const, terms)

    __radd__ = __add__

    def __neg__(self):
        return Expr(-self.const, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if isinstance(other, Expr):
            raise TypeError("products of decision variables are not affine")
        arr = np.asarray(other, dtype=float)
        if arr.ndim == 0:
            c = float(arr)
            return Expr(c * self.const, {k: c * v for k, v in self.terms.items()})
        if self.shape != (1, 1):
            raise ValueError("only 1x1 expressions can scale a matrix")
        arr = np.atleast_2d(arr)
        return Expr(self.const[0, 0] * arr, {k: v[0, 0] * arr for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self * (1.0 / float(other))

    def __matmul__(self, other):
        if isinstance(other, Expr):
            raise TypeError("products of decision variables are not affine")
        arr = np.atleast_2d(np.asarray(other, dtype=float))
        return Expr(self.const @ arr, {k: v @ arr for k, v in self.terms.items()})

    def __rmatmul__(self, other):
        arr = np.atleast_2d(np.asarray(other, dtype=float))
        return Expr(arr @ self.const, {k: arr @ v for k, v in self.terms.items()})

    @property
    def T(self):
        return Expr(self.const.T, {k: v.T for k, v in self.terms.items()})

    def trace(self) -> "Expr":
        return Expr(np.trace(self.const), {k: np.atleast_2d(np.trace(v)) for k, v in self.terms.items()})

    def value(self, x) -> np.ndarray:
        out = self.const.copy()
        for k, v in self.terms.items():
            out = out + x[k] * v
        return out


def _block_shape(b):
    if b is None:
        return None
    if isinstance(b, Expr):
        return b.shape
    return np.atleast_2d(np.asarray(b)).shape


def bmat(blocks) -> Expr:
    """Block matrix of expressions, arrays, or ``None`` for zero blocks.

    Sizes of ``None`` blocks are inferred from their row and column.
    """
    rows = [list(r) for r in blocks]
    nr, nc = len(rows), len(rows[0])
    heights, widths = [None] * nr, [None] * nc
    for i, r in enumerate(rows):
        if len(r) != nc:
            raise ValueError("ragged block rows")
        for j, b in enumerate(r):
            s = _block_shape(b)
            if s is None:
                continue
            if heights[i] not in (None, s[0]) or widths[j] not in (None, s[1]):
                raise ValueError(f"inconsistent block size at ({i}, {j})")
            heights[i], widths[j] = s[0], s[1]
    if None in heights or None in widths:
        raise ValueError("cannot infer the size of an all-zero block row or column")
    H, W = sum(heights), sum(widths)
    const = np.zeros((H, W))
    terms: dict = {}
    r0 = 0
    for i, r in enumerate(rows):
        c0 = 0
        for j, b in enumerate(r):
            h, w = heights[i], widths[j]
            if b is not None:
                e = b if isinstance(b, Expr) else Expr(b)
                const[r0:r0 + h, c0:c0 + w] = e.const
                for k, v in e.terms.items():
                    if k not in terms:
                        terms[k] = np.zeros((H, W))
                    terms[k][r0:r0 + h, c0:c0 + w] += v
            c0 += w
        r0 += h
    return Expr(const, terms)


@dataclass
class _Variable:
    name: str
    kind: str
    shape: tuple
    offset: int
    size: int


@dataclass
class _Block:
    name: str
    expr: Expr
    strict: bool


@dataclass(frozen=True)
class SdpSettings:
    """Solver tolerances; ``eps_strict`` is the margin that encodes ``X > 0`` as ``X >= eps I``."""

    feas_tol: float = 1e-8
    gap_tol: float = 1e-8
    max_iter: int = 200
    eps_strict: float = 1e-6


class SdpProblem:
    """Maximize a linear objective subject to affine PSD blocks and linear equalities."""

    def __init__(self):
        self.variables: list[_Variable] = []
        self.blocks: list[_Block] = []
        self.equalities: list[tuple[str, Expr]] = []
        self.objective: Expr = Expr(0.0)
        self.sense = 1.0
        self.n_scalars = 0

    # -- variables -------------------------------------------------------
    def _register(self, name, kind, shape, size):
        if any(v.name == name for v in self.variables):
            raise ValueError(f"duplicate variable name {name!r}")
        var = _Variable(name, kind, shape, self.n_scalars, size)
        self.variables.append(var)
        self.n_scalars += size
        return var

    def scalar(self, name: str) -> Expr:
        var = self._register(name, "scalar", (1, 1), 1)
        return Expr(np.zeros((1, 1)), {var.offset: np.ones((1, 1))})

    def symmetric(self, name: str, d: int) -> Expr:
        var = self._register(name, "symmetric", (d, d), d * (d + 1) // 2)
        terms = {}
        k = var.offset
        for i in range(d):
            for j in range(i, d):
                e = np.zeros((d, d))
                e[i, j] = e[j, i] = 1.0
                terms[k] = e
                k += 1
        return Expr(np.zeros((d, d)), terms)

    def full(self, name: str, rows: int, cols: int) -> Expr:
        var = self._register(name, "full", (rows, cols), rows * cols)
        terms = {}
        for i in range(rows):
            for j in range(cols):
                e = np.zeros((rows, cols))
                e[i, j] = 1.0
                terms[var.offset + i * cols + j] = e
        return Expr(np.zeros((rows, cols)), terms)

    # -- constraints -----------------------------------------------------
    def add_psd(self, expr, name: Optional[str] = None, strict: bool = False) -> None:
        """Require ``expr >= 0`` (``>= eps_strict I`` when ``strict``)."""
        if not isinstance(expr, Expr):
            expr = Expr(expr)
        d = expr.shape[0]
        if expr.shape != (d, d):
            raise ValueError(f"constraint block must be square, got {expr.shape}")
        mats = [expr.const, *expr.terms.values()]
        scale = max([1.0] + [float(np.max(np.abs(m))) for m in mats])
        if any(np.max(np.abs(m - m.T), initial=0.0) > 1e-10 * scale for m in mats):
            raise ValueError(f"constraint block {name!r} is not symmetric")
        sym = Expr(0.5 * (expr.const + expr.const.T),
                   {k: 0.5 * (v + v.T) for k, v in expr.terms.items()})
        self.blocks.append(_Block(name or f"block{len(self.blocks)}", sym, strict))

    def add_eq(self, expr, name: Optional[str] = None) -> None:
        """Require every entry of ``expr`` to vanish."""
        if not isinstance(expr, Expr):
            expr = Expr(expr)
        self.equalities.append((name or f"eq{len(self.equalities)}", expr))

    def maximize(self, expr) -> None:
        if not isinstance(expr, Expr):
            expr = Expr(expr)
        if expr.shape != (1, 1):
            raise ValueError("objective must be scalar")
        self.objective = expr
        self.sense = 1.0

    def minimize(self, expr) -> None:
        self.maximize(-expr if isinstance(expr, Expr) else -np.asarray(expr))
        self.sense = -1.0

    def objective_at(self, x) -> float:
        """Objective in the user's sense (the minimized value for :meth:`minimize`)."""
        return self.sense * float(self.objective.value(x)[0, 0])

    # -- flattening ------------------------------------------------------
    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_scalars)
        for k, v in self.objective.terms.items():
            c[k] += v[0, 0]
        return c

    def block_matrices(self, b: _Block, settings: SdpSettings):
        """``(F0, {i: Fi})`` with the strict margin folded into ``F0``."""
        f0 = b.expr.const.copy()
        if b.strict:
            f0 -= settings.eps_strict * np.eye(f0.shape[0])
        return f0, b.expr.terms

    def equality_system(self) -> tuple[np.ndarray, np.ndarray]:
        """Rows ``a_j`` and constants ``c_j`` of ``a_j . x + c_j = 0``."""
        rows, consts = [], []
        for _, e in self.equalities:
            r, c = e.shape
            for i in range(r):
                for j in range(c):
                    row = np.zeros(self.n_scalars)
                    for k, v in e.terms.items():
                        row[k] += v[i, j]
                    rows.append(row)
                    consts.append(e.const[i, j])
        if not rows:
            return np.zeros((0, self.n_scalars)), np.zeros(0)
        return np.array(rows), np.array(consts)

    def unpack(self, x) -> dict:
        out = {}
        for v in self.variables:
            seg = x[v.offset:v.offset + v.size]
            if v.kind == "scalar":
                out[v.name] = float(seg[0])
            elif v.kind == "full":
                out[v.name] = seg.reshape(v.shape).copy()
            else:
                d = v.shape[0]
                m = np.zeros((d, d))
                m[np.triu_indices(d)] = seg
                out[v.name] = m + np.triu(m, 1).T
        return out

    def pack(self, assignment: dict) -> np.ndarray:
        x = np.zeros(self.n_scalars)
        for v in self.variables:
            if v.name not in assignment:
                raise KeyError(f"assignment is missing variable {v.name!r}")
            val = np.atleast_2d(np.asarray(assignment[v.name], dtype=float))
            if val.shape != v.shape:
                raise ValueError(f"variable {v.name!r} must have shape {v.shape}, got {val.shape}")
            if v.kind == "symmetric":
                val = 0.5 * (val + val.T)
                x[v.offset:v.offset + v.size] = val[np.triu_indices(v.shape[0])]
            else:
                x[v.offset:v.offset + v.size] = val.reshape(-1)
        return x

    def dump(self, directory) -> None:
        """Write a JSON manifest plus CSV coefficient files for external cross-checks."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        manifest = {
            "sense": "maximize",
            "variables": [
                {"name": v.name, "kind": v.kind, "shape": list(v.shape), "offset": v.offset, "size": v.size}
                for v in self.variables
            ],
            "n_scalars": self.n_scalars,
            "blocks": [],
            "objective": "objective.csv",
            "equalities": None,
        }
        write_matrix_csv(d / "objective.csv", self.objective_vector()[None, :] if self.n_scalars else [[0.0]])
        for i, b in enumerate(self.blocks):
            sub = d / f"block{i}"
            sub.mkdir(exist_ok=True)
            write_matrix_csv(sub / "const.csv", b.expr.const)
            for k, v in sorted(b.expr.terms.items()):
                write_matrix_csv(sub / f"coef_{k}.csv", v)
            manifest["blocks"].append({
                "name": b.name, "dir": sub.name, "size": b.expr.shape[0], "strict": b.strict,
                "coefficients": sorted(int(k) for k in b.expr.terms),
            })
        a, c = self.equality_system()
        if a.shape[0]:
            write_matrix_csv(d / "equalities.csv", np.hstack([a, c[:, None]]))
            manifest["equalities"] = "equalities.csv"
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2))


@dataclass
class Certificate:
    """Dual ray proving infeasibility.

    ``blocks`` holds PSD multipliers ``Z_b`` and ``y`` the equality multipliers,
    normalized so that ``bound = sum <Z_b, F_b0> - c.y = -1``. For every
    feasible ``x`` one would need ``residual . x >= 1``, so a residual ``r``
    rules out feasible points of norm up to ``1/r``. Validation accepts
    ``r <= feas_tol * max(1, |A^T y|)``, since ``r`` is a difference of terms
    of that size.
    """

    blocks: dict
    y: np.ndarray
    bound: float
    residual: float
    min_eig: float
    validated: bool


@dataclass
class SolveReport:
    status: str
    objective_value: float = float("nan")
    min_constraint_eig: float = float("nan")
    iterations: int = 0
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    certificate: Optional[Certificate] = None
    message: str = ""


def _blocks_eval(problem: SdpProblem, x, settings):
    out = []
    for b in problem.blocks:
        f0, terms = problem.block_matrices(b, settings)
        f = f0.copy()
        for k, v in terms.items():
            f += x[k] * v
        out.append(0.5 * (f + f.T))
    return out


def verify_assignment(problem: SdpProblem, assignment, settings: SdpSettings = SdpSettings()):
    """Substitute ``assignment`` into every block and equality.

    Returns ``(feasible, worst)`` where ``worst`` is the smallest eigenvalue
    over all blocks (strict blocks after subtracting their margin).
    """
    x = assignment if isinstance(assignment, np.ndarray) else problem.pack(assignment)
    worst = float("inf")
    feasible = True
    for f in _blocks_eval(problem, x, settings):
        w = np.linalg.eigvalsh(f)
        worst = min(worst, float(w[0]))
        if w[0] < -settings.feas_tol * max(1.0, float(np.max(np.abs(w)))):
            feasible = False
    a, c = problem.equality_system()
    if a.shape[0]:
        res = a @ x + c
        scale = max(1.0, float(np.max(np.abs(a), initial=0.0)) * max(1.0, float(np.max(np.abs(x), initial=0.0))))
        if np.max(np.abs(res)) > settings.feas_tol * scale:
            feasible = False
    if not problem.blocks:
        worst = 0.0
    return feasible, worst


def _validate_certificate(problem, zblocks, settings) -> Certificate:
    """Check ``Z >= 0``, ``sum <Z, F_i> = (A^T y)_i`` and a negative bound.

    ``y`` is recomputed by least squares from the block multipliers so that
    the check only trusts the solver for ``Z``.
    """
    n = problem.n_scalars
    zblocks = _polish(problem, zblocks, settings)
    # exactly rounded sums: the ray can be large while the residual is tiny
    parts = [[] for _ in range(n)]
    bparts = []
    for b, z in zip(problem.blocks, zblocks):
        f0, terms = problem.block_matrices(b, settings)
        bparts.extend((z * f0).ravel())
        for k, v in terms.items():
            parts[k].extend((z * v).ravel())
    bound = math.fsum(bparts)
    s = np.array([math.fsum(p) for p in parts])
    a, c = problem.equality_system()
    if a.shape[0]:
        y, *_ = np.linalg.lstsq(a.T, s, rcond=None)
        bound -= float(c @ y)
        resid = s - a.T @ y
    else:
        y = np.zeros(0)
        resid = s
    min_eig = min((float(np.linalg.eigvalsh(z)[0]) for z in zblocks), default=0.0)
    if bound >= 0:
        return Certificate(dict(), y, bound, float(np.max(np.abs(resid), initial=0.0)), min_eig, False)
    scale = -bound
    zblocks = [z / scale for z in zblocks]
    y = y / scale
    resid = resid / scale
    min_eig /= scale
    zmax = max([1.0] + [float(np.max(np.abs(np.linalg.eigvalsh(z)))) for z in zblocks])
    r = float(np.max(np.abs(resid), initial=0.0))
    # the residual is a difference of terms of size |A^T y|; roundoff scales with it
    cancel = max(1.0, float(np.max(np.abs(a.T @ y), initial=0.0))) if a.shape[0] else 1.0
    ok = r <= settings.feas_tol * cancel and min_eig >= -settings.feas_tol * zmax
    names = [b.name for b in problem.blocks]
    return Certificate(dict(zip(names, zblocks)), y, -1.0, r, min_eig, bool(ok))


def _polish(problem: SdpProblem, zblocks, settings):
    """Minimum-norm correction of the dual blocks that zeroes the stationarity residual.

    With ``r = s - A^T y`` for the least-squares ``y``, solves
    ``sum <dZ_b, F_bk> - (A^T dy)_k = -r_k`` with minimal norm,
    so an interior-point dual with residual near the solver tolerance
    becomes exact up to roundoff; positivity is checked afterwards.
    """
    n = problem.n_scalars
    cols, s, sizes = [], np.zeros(n), []
    for b, z in zip(problem.blocks, zblocks):
        _, terms = problem.block_matrices(b, settings)
        d = z.shape[0]
        g = np.zeros((n, d * d))
        for k, v in terms.items():
            g[k] = v.reshape(-1)
            s[k] += float(np.sum(z * v))
        cols.append(g)
        sizes.append(d)
    a, _ = problem.equality_system()
    if a.shape[0]:
        y, *_ = np.linalg.lstsq(a.T, s, rcond=None)
        s = s - a.T @ y
        lhs = np.hstack(cols + [-a.T])
    else:
        lhs = np.hstack(cols)
    if lhs.shape[1] == 0:
        return list(zblocks)
    step, *_ = np.linalg.lstsq(lhs, -s, rcond=None)
    out, pos = [], 0
    for z, d in zip(zblocks, sizes):
        dz = step[pos:pos + d * d].reshape(d, d)
        pos += d * d
        out.append(z + 0.5 * (dz + dz.T))
    return out


def _is_improving_ray(problem: SdpProblem, ray, settings: SdpSettings) -> bool:
    """Check that ``ray`` keeps every constraint feasible and increases the objective."""
    gain = float(problem.objective_vector() @ ray)
    if not gain > 0:
        return False
    ray = ray / gain
    tol = settings.feas_tol * max(1.0, np.linalg.norm(ray))
    a_eq, _ = problem.equality_system()
    if a_eq.shape[0] and np.max(np.abs(a_eq @ ray)) > tol:
        return False
    for b in problem.blocks:
        _, terms = problem.block_matrices(b, settings)
        lin = sum((v * ray[k] for k, v in terms.items()), np.zeros((1, 1)))
        lin = np.atleast_2d(lin)
        if np.linalg.eigvalsh(0.5 * (lin + lin.T))[0] < -tol:
            return False
    return True


def solve(problem: SdpProblem, settings: SdpSettings = SdpSettings()):
    """Solve ``problem``; returns ``(assignment or None, SolveReport)``."""
    from cvxopt import matrix, solvers

    n = problem.n_scalars
    c = -problem.objective_vector()

    lin_rows, lin_h, sdp_G, sdp_h, order = [], [], [], [], []
    for b in problem.blocks:
        f0, terms = problem.block_matrices(b, settings)
        d = f0.shape[0]
        g = np.zeros((d * d, n))
        for k, v in terms.items():
            g[:, k] = -v.reshape(-1, order="F")
        if d == 1:
            lin_rows.append(g[0])
            lin_h.append(f0[0, 0])
            order.append(("l", len(lin_rows) - 1))
        else:
            sdp_G.append(g)
            sdp_h.append(f0)
            order.append(("s", len(sdp_G) - 1))
    a_eq, c_eq = problem.equality_system()

    # restrict to directions that some constraint sees; cvxopt needs rank([G; A]) = n
    stacked = np.vstack([np.array(lin_rows).reshape(-1, n)] + sdp_G + [a_eq])
    if stacked.shape[0]:
        _, sv, vt = np.linalg.svd(stacked, full_matrices=False)
        rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0] if sv.size else 1.0)))
    else:
        rank, vt = 0, np.zeros((0, n))
    basis = vt[:rank].T
    if n and np.linalg.norm(c - basis @ (basis.T @ c)) > 1e-12 * max(1.0, np.linalg.norm(c)):
        return None, SolveReport(UNBOUNDED, message="objective depends on unconstrained directions")

    if rank == 0:
        x = np.zeros(n)
        feasible, worst = verify_assignment(problem, x, settings)
        if feasible:
            return problem.unpack(x), SolveReport(OPTIMAL, problem.objective_at(x), worst)
        zs = []
        for f in _blocks_eval(problem, x, settings):
            w, v = np.linalg.eigh(f)
            zs.append(np.outer(v[:, 0], v[:, 0]) if w[0] < 0 else np.zeros_like(f))
        cert = _validate_certificate(problem, zs, settings)
        status = INFEASIBLE if cert.validated else INACCURATE
        return None, SolveReport(status, min_constraint_eig=worst, certificate=cert)

    A_red = a_eq @ basis
    b_red = -c_eq
    if A_red.shape[0]:
        # keep a maximal independent subset of equality rows
        q, r, piv = _qr_pivot(A_red.T)
        diag = np.abs(np.diag(r)) if r.size else np.zeros(0)
        keep_n = int(np.sum(diag > 1e-11 * max(1.0, diag[0] if diag.size else 1.0)))
        keep = np.sort(piv[:keep_n])
        A_red, b_red = A_red[keep], b_red[keep]

    kw = {}
    if lin_rows:
        kw["Gl"] = matrix(np.array(lin_rows) @ basis)
        kw["hl"] = matrix(np.array(lin_h, dtype=float))
    if sdp_G:
        kw["Gs"] = [matrix(g @ basis) for g in sdp_G]
        kw["hs"] = [matrix(h) for h in sdp_h]
    if A_red.shape[0]:
        kw["A"] = matrix(A_red)
        kw["b"] = matrix(b_red)
    opts = {
        "show_progress": False,
        "maxiters": settings.max_iter,
        "abstol": settings.gap_tol,
        "reltol": settings.gap_tol,
        "feastol": settings.feas_tol,
    }
    # the default KKT solver can break down in the scaling update on
    # degenerate problems; the plain Cholesky variant is tried next
    sol = None
    for kkt in (None, "chol"):
        extra = {} if kkt is None else {"kktsolver": kkt}
        try:
            sol = solvers.sdp(matrix(basis.T @ c), options=opts, **kw, **extra)
            break
        except (ValueError, ArithmeticError) as exc:
            error = exc
    if sol is None:
        return None, SolveReport(INACCURATE, message=f"solver error: {error}")

    iters = int(sol.get("iterations", 0) or 0)
    pres = float(sol.get("primal infeasibility") or np.nan)
    dres = float(sol.get("dual infeasibility") or np.nan)
    status = sol["status"]

    def z_blocks():
        zs = []
        for kind, idx in order:
            if kind == "l":
                zs.append(np.array([[sol["zl"][idx]]]))
            else:
                z = np.array(sol["zs"][idx])
                zs.append(0.5 * (z + z.T))
        return zs

    if status == "primal infeasible":
        cert = _validate_certificate(problem, z_blocks(), settings)
        st = INFEASIBLE if cert.validated else INACCURATE
        return None, SolveReport(st, iterations=iters, primal_residual=pres, dual_residual=dres,
                                 certificate=cert,
                                 message="" if cert.validated else "infeasibility certificate failed validation")
    if status == "dual infeasible":
        ray = basis @ np.array(sol["x"]).reshape(-1)
        if _is_improving_ray(problem, ray, settings):
            return None, SolveReport(UNBOUNDED, iterations=iters, message="objective unbounded")
        return None, SolveReport(INACCURATE, iterations=iters,
                                 message="solver reported unboundedness but the ray failed validation")

    x = basis @ np.array(sol["x"]).reshape(-1)
    feasible, worst = verify_assignment(problem, x, settings)
    obj = problem.objective_at(x)
    assignment = problem.unpack(x)
    if status == "optimal" and feasible:
        return assignment, SolveReport(OPTIMAL, obj, worst, iters, pres, dres)
    st = ITERATION_LIMIT if iters >= settings.max_iter else INACCURATE
    msg = f"solver status {status!r}; substituted point {'feasible' if feasible else 'infeasible'}"
    return assignment, SolveReport(st, obj, worst, iters, pres, dres, message=msg)


def _qr_pivot(a):
    from scipy.linalg import qr

    return qr(a, mode="economic", pivoting=True)
