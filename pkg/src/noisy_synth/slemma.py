"""Multiplier search for matrix S-lemmas and a sampling falsifier for QMI implications.

The question answered here is whether ``[I; Z]^T M [I; Z] >= 0`` (or ``> 0``)
holds for every ``Z`` with ``[I; Z]^T N [I; Z] >= 0``. Under a generalized
Slater condition this is equivalent to the existence of a scalar
multiplier ``alpha >= 0`` with ``M - alpha N >= 0`` (or ``> 0`` when the
solution set of ``N`` is bounded), and, for the structured case
``M22 <= 0``, ``N22 <= 0``, ``ker N22 in ker N12``, to
``M - alpha N >= diag(beta I, 0)`` with ``beta > 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sdp
from .matcore import DEFAULT_TOL, Tolerance, definiteness, psd_sqrt, spectral_scale
from .sigma import (QmiForm, _spectral_unit_ball, ellipsoid_center, kernel_inclusion,
                    sample_solution_set, slater_check)

__all__ = [
    "MultiplierCertificate",
    "InconclusiveSampling",
    "qmi_eval",
    "multiplier_margin",
    "find_multiplier",
    "find_multiplier_structured",
    "check_theorem_preconditions",
    "falsify_implication",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class InconclusiveSampling(RuntimeError):
    """Rejection sampling of an unbounded solution set accepted too few candidates."""


@dataclass(frozen=True)
class MultiplierCertificate:
    alpha: float
    margin: float
    form: str
    beta: Optional[float] = None

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.form == "structured" and not (self.beta is not None and self.beta > 0):
            raise ValueError("structured certificates need beta > 0")
        if self.form not in ("nonstrict", "strict", "structured"):
            raise ValueError(f"unknown certificate form {self.form!r}")


def qmi_eval(f: QmiForm, z) -> np.ndarray:
    """``M11 + M12 Z + Z^T M12^T + Z^T M22 Z``."""
    return f.evaluate(z)


def multiplier_margin(m: QmiForm, n: QmiForm, alpha: float) -> float:
    """``lambda_min(M - alpha N)``; concave in ``alpha``."""
    return float(np.linalg.eigvalsh(m.mat - alpha * n.mat)[0])


def _check_pair(m: QmiForm, n: QmiForm):
    if m.mat.shape != n.mat.shape or m.k != n.k:
        raise ValueError("M and N must have the same size and partition")


def _maximize_margin(m: QmiForm, n: QmiForm, width: float = 1e-12):
    g = lambda a: multiplier_margin(m, n, a)  # noqa: E731
    g0, g1 = g(0.0), g(1.0)
    if g1 <= g0:
        lo, hi = 0.0, 1.0
    else:
        # concavity: g(hi) > g(prev) puts the maximizer at or above prev
        prev, hi, ghi = 0.0, 1.0, g1
        while hi < 2.0 ** 60:
            g2 = g(2.0 * hi)
            if g2 <= ghi:
                break
            prev, hi, ghi = hi, 2.0 * hi, g2
        lo, hi = prev, 2.0 * hi
    a, b = lo, hi
    c, d = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
    gc, gd = g(c), g(d)
    while b - a > width * max(1.0, b):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - _GOLDEN * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _GOLDEN * (b - a)
            gd = g(d)
    best = max([(g0, 0.0), (gc, c), (gd, d), (g(a), a), (g(b), b)])
    return best[1], best[0]


def find_multiplier(m: QmiForm, n: QmiForm, form: str = "nonstrict",
                    tol: Tolerance = DEFAULT_TOL) -> Optional[MultiplierCertificate]:
    """Maximize ``lambda_min(M - alpha N)`` over ``alpha >= 0``.

    A certificate is returned when the maximum is ``>= 0`` (up to
    ``eig_zero``) for ``form="nonstrict"`` or ``> strict_margin`` for
    ``form="strict"``; both relative to the spectral scale of ``M - alpha N``.
    """
    _check_pair(m, n)
    alpha, margin = _maximize_margin(m, n)
    scale = spectral_scale(np.linalg.eigvalsh(m.mat - alpha * n.mat))
    if form == "nonstrict":
        ok = margin >= -tol.eig_zero * scale
    elif form == "strict":
        ok = margin > tol.strict_margin * scale
    else:
        raise ValueError(f"form must be 'nonstrict' or 'strict', got {form!r}")
    return MultiplierCertificate(alpha, margin, form) if ok else None


def find_multiplier_structured(m: QmiForm, n: QmiForm, k: Optional[int] = None,
                               tol: Tolerance = DEFAULT_TOL,
                               settings: sdp.SdpSettings = sdp.SdpSettings()) -> Optional[MultiplierCertificate]:
    """Maximize ``beta`` s.t. ``M - alpha N - diag(beta I_k, 0) >= 0``, ``alpha >= 0``."""
    _check_pair(m, n)
    k = m.k if k is None else k
    dim = m.mat.shape[0]
    e = np.zeros((dim, dim))
    e[:k, :k] = np.eye(k)

    def build(cap):
        prob = sdp.SdpProblem()
        alpha = prob.scalar("alpha")
        beta = prob.scalar("beta")
        prob.add_psd(m.mat - alpha * n.mat - beta * e, name="structured")
        prob.add_psd(alpha, name="alpha>=0")
        if cap is not None:
            prob.add_psd(cap - beta, name="beta cap")
        prob.maximize(beta)
        return prob

    scale = spectral_scale(np.linalg.eigvalsh(m.mat))
    assignment, report = sdp.solve(build(None), settings)
    if report.status == sdp.UNBOUNDED:
        assignment, report = sdp.solve(build(1e6 * scale), settings)
    if report.status == sdp.INFEASIBLE:
        return None
    if report.status != sdp.OPTIMAL:
        raise RuntimeError(f"structured multiplier search failed: {report.status} {report.message}")
    alpha, beta = max(assignment["alpha"], 0.0), assignment["beta"]
    if not beta > tol.strict_margin * scale:
        return None
    alpha = _smallest_alpha(m.mat - beta * e, n.mat, alpha)
    margin = float(np.linalg.eigvalsh(m.mat - alpha * n.mat - beta * e)[0])
    return MultiplierCertificate(alpha, margin, "structured", beta)


def _smallest_alpha(base, n_mat, alpha, steps: int = 60):
    """Smallest ``a`` in ``[0, alpha]`` keeping ``lambda_min(base - a N)`` at its value at ``alpha``.

    The feasible ``a`` form an interval by concavity, so bisection applies;
    this makes the reported multiplier independent of where the solver
    stopped when ``alpha`` is not unique.
    """
    level = min(0.0, float(np.linalg.eigvalsh(base - alpha * n_mat)[0]))
    ok = lambda a: np.linalg.eigvalsh(base - a * n_mat)[0] >= level  # noqa: E731
    if ok(0.0):
        return 0.0
    lo, hi = 0.0, alpha
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if ok(mid) else (mid, hi)
    return hi


def check_theorem_preconditions(m: QmiForm, n: QmiForm, theorem: str,
                                tol: Tolerance = DEFAULT_TOL) -> dict:
    """Evaluate the hypotheses of the strict S-lemma variants.

    ``theorem`` is ``"T5"`` (Slater + bounded solution set), ``"T6"``
    (structured, possibly unbounded) or ``"C2"`` (nonsingular ``N`` with
    ``N11 >= 0``, ``N22 < 0``). Boundedness is only decided through
    ``N22 < 0``; otherwise it is reported as ``"unknown"``. The ``holds`` key
    is ``True`` only if every entry is ``True``.
    """
    _check_pair(m, n)
    theorem = theorem.upper()
    report: dict = {}
    if theorem == "T5":
        report["slater"] = slater_check(n, tol=tol)[0]
        report["bounded"] = True if definiteness(n.m22, "ND", tol) else "unknown"
    elif theorem == "T6":
        report["m22_nsd"] = definiteness(m.m22, "NSD", tol)
        report["n22_nsd"] = definiteness(n.m22, "NSD", tol)
        report["kernel_inclusion"] = kernel_inclusion(n.m22, n.m12)
        report["slater"] = slater_check(n, tol=tol)[0]
    elif theorem == "C2":
        w = np.linalg.eigvalsh(n.mat)
        report["n_nonsingular"] = bool(np.min(np.abs(w)) > tol.eig_zero * spectral_scale(w))
        report["n11_psd"] = definiteness(n.m11, "PSD", tol)
        report["n22_nd"] = definiteness(n.m22, "ND", tol)
    else:
        raise ValueError(f"unknown theorem {theorem!r}")
    report["holds"] = all(v is True for v in report.values())
    return report


def _candidates(n: QmiForm, count: int, rng, tol: Tolerance) -> np.ndarray:
    """Candidate ``Z`` for the solution set of ``N``; membership is checked by the caller."""
    try:
        third = count // 3
        parts = [sample_solution_set(n, count - 2 * third, rng, "interior", tol)]
        if third:
            parts.append(sample_solution_set(n, third, rng, "boundary", tol))
            parts.append(_rank_one(n, third, rng, tol))
        return np.concatenate(parts)
    except ValueError:
        pass
    # not an ellipsoid: rejection sampling around the pseudo-center
    zc, _ = ellipsoid_center(n, tol)
    scales = np.logspace(-2, 2, 9)
    pick = scales[rng.integers(0, scales.size, count)][:, None, None]
    return zc + pick * rng.standard_normal((count, n.q, n.k))


def _rank_one(n: QmiForm, count: int, rng, tol: Tolerance) -> np.ndarray:
    """Boundary points ``Zc + (-N22)^{+1/2} u v^T Delta^{1/2}`` with unit ``u, v``."""
    w, vecs = np.linalg.eigh(n.m22)
    nz = w < -tol.eig_zero * spectral_scale(w)
    zc, delta = ellipsoid_center(n, tol)
    droot = psd_sqrt(delta, tol)
    inv_root = (vecs[:, nz] / np.sqrt(-w[nz])) @ vecs[:, nz].T
    u = rng.standard_normal((count, n.q))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = rng.standard_normal((count, n.k))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return zc + np.einsum("ij,ni,nk,kl->njl", inv_root, u, v, droot)


def falsify_implication(m: QmiForm, n: QmiForm, budget: int = 10_000, seed: int = 0,
                        strictness: str = "nonstrict", hypothesis: str = "nonstrict",
                        tol: Tolerance = DEFAULT_TOL, rel_tol: float = 1e-7,
                        batch: int = 2_000) -> Optional[np.ndarray]:
    """Search for ``Z`` in the solution set of ``N`` violating the ``M`` inequality.

    ``strictness`` selects the target (``M``-form ``>= 0`` or ``> 0``);
    ``hypothesis`` selects whether ``N``-form ``>= 0`` or ``> 0`` is assumed.
    Violation of a nonstrict target means ``lambda_min < -rel_tol * s`` with
    ``s = max(1, |M|_2 (1 + |Z|_2^2))``, which absorbs rounding in both
    forms. Returns the first violating ``Z`` or ``None``. Raises
    :class:`InconclusiveSampling` when rejection sampling accepts fewer than
    0.1% of the candidates.
    """
    _check_pair(m, n)
    if strictness not in ("nonstrict", "strict") or hypothesis not in ("nonstrict", "strict"):
        raise ValueError("strictness and hypothesis must be 'nonstrict' or 'strict'")
    rng = np.random.default_rng(seed)
    mnorm = float(np.linalg.norm(m.mat, 2))
    param = _ellipsoid_param(n, tol)
    # a share of the budget goes to local descent when the solution set is bounded
    sampling = budget if param is None else budget - budget // 5
    tested = accepted = 0
    while tested < sampling:
        c = min(batch, sampling - tested)
        zs = _candidates(n, c, rng, tol)
        tested += c
        if zs.shape[0] == 0:
            continue
        zs = _admissible(n, zs, hypothesis, tol)
        accepted += zs.shape[0]
        hit = _first_violation(m, zs, mnorm, strictness, rel_tol, tol)
        if hit is not None:
            return hit
    if param is not None and budget > sampling:
        starts = min(10, budget - sampling)
        iters = (budget - sampling) // starts
        shrink = 1.0 - 1e-3 if hypothesis == "strict" else 1.0
        for z in _descend(m, param, rng, starts, iters, shrink):
            zs = _admissible(n, z[None], hypothesis, tol)
            tested += iters
            accepted += iters * zs.shape[0]
            hit = _first_violation(m, zs, mnorm, strictness, rel_tol, tol)
            if hit is not None:
                return hit
    if accepted < 1e-3 * tested:
        raise InconclusiveSampling(f"accepted {accepted} of {tested} candidates")
    return None


def _admissible(n: QmiForm, zs, hypothesis, tol):
    if zs.shape[0] == 0:
        return zs
    nvals = np.linalg.eigvalsh(n.evaluate_many(zs))
    ns = np.maximum(1.0, np.max(np.abs(nvals), axis=1))
    if hypothesis == "strict":
        keep = nvals[:, 0] > tol.strict_margin * ns
    else:
        keep = nvals[:, 0] >= -tol.eig_zero * ns
    return zs[keep]


def _first_violation(m: QmiForm, zs, mnorm, strictness, rel_tol, tol):
    if zs.shape[0] == 0:
        return None
    mvals = np.linalg.eigvalsh(m.evaluate_many(zs))
    znorm = np.linalg.norm(zs, ord=2, axis=(1, 2))
    s = np.maximum(1.0, np.maximum(np.max(np.abs(mvals), axis=1), mnorm * (1.0 + znorm ** 2)))
    if strictness == "strict":
        bad = mvals[:, 0] <= tol.strict_margin * s
    else:
        bad = mvals[:, 0] < -rel_tol * s
    if np.any(bad):
        return zs[int(np.argmax(bad))]
    return None


def _ellipsoid_param(n: QmiForm, tol):
    """``(Zc, (-N22)^{-1/2}, Delta^{1/2})`` when ``N22 < 0`` and ``Delta >= 0``, else ``None``."""
    if not definiteness(n.m22, "ND", tol):
        return None
    zc, delta = ellipsoid_center(n, tol)
    dw = np.linalg.eigvalsh(delta)
    if dw[0] < -tol.eig_zero * spectral_scale(dw):
        return None
    w, vecs = np.linalg.eigh(n.m22)
    return zc, (vecs / np.sqrt(-w)) @ vecs.T, psd_sqrt(delta, tol)


def _project_unit_ball(v, radius):
    u, sv, wt = np.linalg.svd(v, full_matrices=False)
    return (u * np.minimum(sv, radius)) @ wt


def _descend(m: QmiForm, param, rng, starts: int, iters: int, radius: float):
    """Projected gradient descent of ``lambda_min`` of the ``M``-form over the ellipsoid.

    ``Z = Zc + R V D`` with ``|V|_2 <= radius``; the gradient of
    ``x^T F(Z) x`` for the bottom eigenvector ``x`` is
    ``2 (M12^T x + M22 Z x) x^T``. Starts are the best of a boundary batch.
    """
    zc, root, droot = param
    shape = (root.shape[0], droot.shape[0])
    pool = radius * _spectral_unit_ball(rng, shape, 50 * starts, "boundary")
    zs = zc + np.einsum("ij,njk,kl->nil", root, pool, droot)
    order = np.argsort(np.linalg.eigvalsh(m.evaluate_many(zs))[:, 0])
    lip = float(np.linalg.norm(m.mat, 2)) * (1.0 + np.linalg.norm(root, 2) ** 2) \
        * (1.0 + np.linalg.norm(droot, 2) ** 2)
    out = []
    for v in pool[order[:starts]]:
        step = 1.0 / max(lip, 1e-12)
        z = zc + root @ v @ droot
        w, x = np.linalg.eigh(m.evaluate(z))
        val = w[0]
        for _ in range(iters):
            xv = x[:, 0]
            gz = 2.0 * np.outer(m.m12.T @ xv + m.m22 @ z @ xv, xv)
            cand = _project_unit_ball(v - step * (root.T @ gz @ droot.T), radius)
            zn = zc + root @ cand @ droot
            wn, xn = np.linalg.eigh(m.evaluate(zn))
            if wn[0] < val:
                v, z, w, x, val = cand, zn, wn, xn, wn[0]
                step *= 1.5
            else:
                step *= 0.5
                if step * lip < 1e-12:
                    break
        out.append(z)
    return out
