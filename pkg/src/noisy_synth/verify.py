"""Model-based oracles: stability, Lyapunov equations, H2/H-infinity norms, sampled robustness."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from . import sdp
from .data import SystemPair
from .matcore import as_sym
from .sigma import QmiForm, WhitenedData, sample_sigma
from .synth import Controller, PerformanceSpec

__all__ = [
    "ClosedLoop",
    "UnstableError",
    "NormMismatchError",
    "spectral_radius",
    "dlyap",
    "h2_norm",
    "h2_norm_sdp",
    "hinf_norm",
    "hinf_grid",
    "model_based_optimal_h2",
    "robust_verify",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DENSE_LYAP_MAX = 60


class UnstableError(ValueError):
    """Spectral radius is not below one."""


class NormMismatchError(ArithmeticError):
    """Two independent norm computations disagree beyond tolerance."""


@dataclass(frozen=True)
class ClosedLoop:
    """``x+ = a_cl x + b_w w``, ``z = c_cl x``; ``b_w`` defaults to the identity."""

    a_cl: np.ndarray
    c_cl: np.ndarray
    b_w: Optional[np.ndarray] = None

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a_cl, dtype=float))
        c = np.atleast_2d(np.asarray(self.c_cl, dtype=float))
        if a.shape[0] != a.shape[1] or c.shape[1] != a.shape[0]:
            raise ValueError("a_cl must be square and c_cl must have matching columns")
        b = np.eye(a.shape[0]) if self.b_w is None else np.atleast_2d(np.asarray(self.b_w, dtype=float))
        if b.shape[0] != a.shape[0]:
            raise ValueError("b_w must have as many rows as a_cl")
        for name, v in (("a_cl", a), ("c_cl", c), ("b_w", b)):
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} has non-finite entries")
        object.__setattr__(self, "a_cl", a)
        object.__setattr__(self, "c_cl", c)
        object.__setattr__(self, "b_w", b)

    @classmethod
    def from_gain(cls, sys: SystemPair, k, spec: PerformanceSpec, b_w=None) -> "ClosedLoop":
        k = np.atleast_2d(k)
        return cls(sys.closed_loop(k), spec.c + spec.d @ k, b_w)


def spectral_radius(a) -> float:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    return float(np.max(np.abs(np.linalg.eigvals(a)), initial=0.0))


def _require_stable(a):
    r = spectral_radius(a)
    if not r < 1.0:
        raise UnstableError(f"spectral radius {r:.6g} >= 1")


def dlyap(a, q) -> np.ndarray:
    """Solve ``a P a^T - P + q = 0`` for stable ``a``.

    The residual must not exceed ``1e-9 |q| + 1e-12 |P|``; the second term
    covers rounding when ``rho(a)`` is close to one and ``P`` is large.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    q = as_sym(q, "q")
    _require_stable(a)
    n = a.shape[0]
    if n <= DENSE_LYAP_MAX:
        lhs = np.eye(n * n) - np.kron(a, a)
        p = np.linalg.solve(lhs, q.reshape(-1)).reshape(n, n)
        # one step of iterative refinement
        r = a @ p @ a.T - p + q
        p = p + np.linalg.solve(lhs, r.reshape(-1)).reshape(n, n)
    else:
        p = solve_discrete_lyapunov(a, q)
    p = as_sym(p)
    res = np.linalg.norm(a @ p @ a.T - p + q)
    if res > 1e-9 * np.linalg.norm(q) + 1e-12 * np.linalg.norm(p):
        raise ArithmeticError(f"Lyapunov residual {res:.3g} too large")
    return p


def h2_norm(cl: ClosedLoop) -> float:
    """``sqrt(trace(C Wc C^T))`` with the controllability gramian ``Wc``."""
    wc = dlyap(cl.a_cl, cl.b_w @ cl.b_w.T)
    return float(math.sqrt(max(np.trace(cl.c_cl @ wc @ cl.c_cl.T), 0.0)))


def h2_norm_sdp(cl: ClosedLoop, settings: sdp.SdpSettings = sdp.SdpSettings()) -> float:
    """Minimal ``trace(B^T P B)`` subject to ``P - A^T P A - C^T C >= 0``."""
    _require_stable(cl.a_cl)
    n = cl.a_cl.shape[0]
    prob = sdp.SdpProblem()
    p = prob.symmetric("P", n)
    prob.add_psd(p - cl.a_cl.T @ p @ cl.a_cl - cl.c_cl.T @ cl.c_cl, name="observability")
    prob.minimize((cl.b_w.T @ p @ cl.b_w).trace())
    a, rep = sdp.solve(prob, settings)
    if rep.status != sdp.OPTIMAL:
        raise ArithmeticError(f"H2 SDP failed: {rep.status} {rep.message}")
    return float(math.sqrt(max(rep.objective_value, 0.0)))


def _sigma_max(cl: ClosedLoop, omegas) -> np.ndarray:
    n = cl.a_cl.shape[0]
    zs = np.exp(1j * np.asarray(omegas, dtype=float))
    lhs = zs[:, None, None] * np.eye(n) - cl.a_cl
    rhs = np.broadcast_to(cl.b_w.astype(complex), (zs.size, *cl.b_w.shape))
    g = cl.c_cl @ np.linalg.solve(lhs, rhs)
    return np.linalg.norm(g, ord=2, axis=(1, 2))


def hinf_grid(cl: ClosedLoop, points: int = 4096) -> float:
    """Peak gain over a frequency grid on ``[0, pi]`` refined by golden-section search."""
    _require_stable(cl.a_cl)
    omegas = np.linspace(0.0, np.pi, points)
    vals = _sigma_max(cl, omegas)
    i = int(np.argmax(vals))
    a, b = omegas[max(i - 1, 0)], omegas[min(i + 1, points - 1)]
    f = lambda w: float(_sigma_max(cl, [w])[0])  # noqa: E731
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(80):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return float(max(vals[i], fc, fd))


def _bounded_real_margin(cl: ClosedLoop, gamma: float, settings: sdp.SdpSettings) -> float:
    """Largest ``t <= 1`` with ``P >= t I`` and the bounded-real LMI ``>= t I``."""
    a, c, bw = cl.a_cl, cl.c_cl, cl.b_w
    n, r = a.shape[0], bw.shape[1]
    prob = sdp.SdpProblem()
    p = prob.symmetric("P", n)
    t = prob.scalar("t")
    lmi = sdp.bmat([
        [p - a.T @ p @ a - c.T @ c, -(a.T @ p @ bw)],
        [-(bw.T @ p @ a), gamma ** 2 * np.eye(r) - bw.T @ p @ bw],
    ])
    prob.add_psd(lmi - t * np.eye(n + r), name="bounded real")
    prob.add_psd(p - t * np.eye(n), name="P > 0")
    prob.add_psd(1.0 - t, name="t <= 1")
    prob.maximize(t)
    sol, rep = sdp.solve(prob, settings)
    if rep.status == sdp.INFEASIBLE:
        return -1.0
    if sol is None:
        raise ArithmeticError(f"bounded-real SDP failed: {rep.status} {rep.message}")
    return float(sol["t"])


def hinf_norm(cl: ClosedLoop, tol: float = 1e-5, settings: sdp.SdpSettings = sdp.SdpSettings()) -> float:
    """H-infinity norm by bisection over the bounded-real LMI, checked against :func:`hinf_grid`.

    Raises :class:`NormMismatchError` unless ``grid (1 - tol) <= bisection <= grid (1 + 10 tol)``.
    """
    _require_stable(cl.a_cl)
    if not np.any(cl.c_cl) or not np.any(cl.b_w):
        return 0.0
    grid = hinf_grid(cl)
    lo, hi = 0.0, 1.0
    while _bounded_real_margin(cl, hi, settings) <= 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise ArithmeticError("no finite upper bound found for the H-infinity norm")
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if _bounded_real_margin(cl, mid, settings) > 0:
            hi = mid
        else:
            lo = mid
    value = hi
    if not grid * (1.0 - tol) <= value <= grid * (1.0 + 10.0 * tol):
        raise NormMismatchError(f"bisection {value:.10g} vs frequency grid {grid:.10g}")
    return float(value)


def model_based_optimal_h2(sys: SystemPair, spec: PerformanceSpec, e_subspace=None,
                           settings: sdp.SdpSettings = sdp.SdpSettings()) -> float:
    """Smallest H2 level achievable by state feedback when ``(A, B)`` is known."""
    n, m = sys.n, sys.m
    prob = sdp.SdpProblem()
    y = prob.symmetric("Y", n)
    l = prob.full("L", m, n)  # noqa: E741
    ayl = sys.a @ y + sys.b @ l
    cyl = spec.c @ y + spec.d @ l
    prob.add_psd(sdp.bmat([
        [y, ayl, None],
        [ayl.T, y, cyl.T],
        [None, cyl, np.eye(spec.p)],
    ]), name="Lyapunov", strict=True)
    e = np.eye(n) if e_subspace is None else np.atleast_2d(e_subspace)
    z = prob.symmetric("Z", e.shape[1])
    prob.add_psd(sdp.bmat([[z, e.T], [e, y]]), name="trace coupling")
    prob.minimize(z.trace())
    sol, rep = sdp.solve(prob, settings)
    if rep.status == sdp.INFEASIBLE:
        raise ValueError("the pair is not stabilizable")
    if rep.status != sdp.OPTIMAL:
        # the infimum is often approached only as Y grows without bound; a
        # verified feasible iterate is still an upper bound on the optimum
        if sol is None or not sdp.verify_assignment(prob, sol, settings)[0]:
            raise ArithmeticError(f"model-based H2 SDP failed: {rep.status} {rep.message}")
    return float(math.sqrt(max(np.trace(sol["Z"]), 0.0)))


def _lyapunov_margin(ctrl: Controller, a_k, c_k) -> float:
    if ctrl.kind in ("stab", "stab-multi"):
        p = ctrl.p
        return float(np.linalg.eigvalsh(as_sym(p - a_k @ p @ a_k.T))[0])
    y = ctrl.y
    if ctrl.kind == "h2":
        p = np.linalg.inv(y)
        q = p - a_k.T @ p @ a_k - c_k.T @ c_k
        return float(np.linalg.eigvalsh(as_sym(q))[0])
    # the H-infinity LMI certifies this inequality in Y directly; it is not a
    # congruence of the P-form with A_K^T (.) A_K
    shifted = y - ctrl.mu * np.eye(y.shape[0])
    ay = a_k @ y
    cy = c_k @ y
    q = y - ay @ np.linalg.solve(shifted, ay.T) - cy.T @ cy
    return min(float(np.linalg.eigvalsh(as_sym(q))[0]), float(np.linalg.eigvalsh(as_sym(shifted))[0]))


def robust_verify(ctrl: Controller, n_form: "QmiForm | WhitenedData", spec: Optional[PerformanceSpec] = None,
                  count: int = 500, seed: int = 0) -> dict:
    """Check a controller on systems sampled from the consistent set.

    Half the samples lie in the interior and half on the boundary. Each
    sample is checked for the controller's Lyapunov inequality (for H2 and
    H-infinity designs the performance inequality their LMI certifies),
    for ``rho(A + BK) < 1`` and, with ``spec``, for the closed-loop norm
    being below ``gamma_achieved``. H-infinity norms use the refined
    frequency grid. ``n_form`` may be :class:`WhitenedData`, which samples
    without forming ``N`` and is preferable for badly scaled data.
    """
    report = {"samples": int(count), "pass_lyapunov": 0, "pass_spectral": 0, "seed": int(seed)}
    worst = {"lyapunov": None, "spectral_radius": None}
    check_perf = spec is not None and ctrl.kind in ("h2", "hinf")
    if check_perf:
        report["pass_performance"] = 0
        worst["performance"] = None
    report["worst_margins"] = worst
    if count <= 0:
        return report
    if spec is None and ctrl.kind in ("h2", "hinf"):
        raise ValueError("H2 and H-infinity controllers need the performance spec")
    n_boundary = count // 2
    if isinstance(n_form, WhitenedData):
        draw = n_form.sample
    else:
        def draw(k, s, mode):
            return sample_sigma(n_form, k, s, mode)
    systems = draw(count - n_boundary, seed, "interior")
    if n_boundary:
        systems += draw(n_boundary, seed + 1, "boundary")
    c_k = None
    for sys in systems:
        a_k = sys.closed_loop(ctrl.k)
        if spec is not None:
            c_k = spec.c + spec.d @ ctrl.k
        lm = _lyapunov_margin(ctrl, a_k, c_k)
        rho = spectral_radius(a_k)
        report["pass_lyapunov"] += int(lm > 0)
        report["pass_spectral"] += int(rho < 1)
        worst["lyapunov"] = lm if worst["lyapunov"] is None else min(worst["lyapunov"], lm)
        worst["spectral_radius"] = rho if worst["spectral_radius"] is None else max(worst["spectral_radius"], rho)
        if check_perf:
            if rho < 1:
                cl = ClosedLoop(a_k, c_k)
                norm = h2_norm(cl) if ctrl.kind == "h2" else hinf_grid(cl)
                gap = ctrl.gamma_achieved - norm
            else:
                gap = -math.inf
            report["pass_performance"] += int(gap > 0)
            worst["performance"] = gap if worst["performance"] is None else min(worst["performance"], gap)
    return report
