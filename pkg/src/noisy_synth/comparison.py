"""Two closed-loop-parameterization LMIs from the literature, used as baselines.

Both parameterize the closed loop through a ``T x n`` decision matrix, so
their size grows with the data length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import sdp

__all__ = ["LmiVerdict", "alpha_threshold", "depersis_lmi", "berberich_lmi"]


@dataclass(frozen=True)
class LmiVerdict:
    feasible: bool
    report: sdp.SolveReport
    assignment: Optional[dict] = None

    @property
    def certified(self) -> bool:
        """Feasible with a verified point, or infeasible with a validated dual certificate."""
        if self.feasible:
            return self.assignment is not None
        cert = self.report.certificate
        return cert is not None and cert.validated


def _verdict(prob, settings) -> LmiVerdict:
    sol, rep = sdp.solve(prob, settings)
    if rep.status == sdp.INFEASIBLE:
        return LmiVerdict(False, rep)
    if sol is not None and sdp.verify_assignment(prob, sol, settings)[0]:
        return LmiVerdict(True, rep, sol)
    raise ArithmeticError(f"solver indeterminate: {rep.status} {rep.message}")


def _data(x_plus, x_minus, u_minus):
    x_plus, x_minus, u_minus = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x_plus, x_minus, u_minus))
    if x_plus.shape != x_minus.shape or u_minus.shape[1] != x_plus.shape[1]:
        raise ValueError("inconsistent data dimensions")
    return x_plus, x_minus, u_minus


def alpha_threshold(gamma: float) -> float:
    """Positive root of ``alpha^2 = gamma (4 + 2 alpha)``; the scalar bound reads ``alpha > root``."""
    return gamma + math.sqrt(gamma ** 2 + 4.0 * gamma)


def depersis_lmi(x_plus, x_minus, u_minus, gamma: float,
                 settings: sdp.SdpSettings = sdp.SdpSettings()) -> LmiVerdict:
    """Find ``(Q, alpha)`` with ``X- Q`` symmetric and the two strict LMIs, ``alpha^2/(4+2 alpha) > gamma``.

    For ``alpha > 0`` the scalar condition is ``alpha > alpha_threshold(gamma)``,
    which is linear, so ``alpha`` is a joint decision variable.
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    x_plus, x_minus, _ = _data(x_plus, x_minus, u_minus)
    n, T = x_plus.shape
    prob = sdp.SdpProblem()
    q = prob.full("Q", T, n)
    s = prob.symmetric("S", n)
    alpha = prob.scalar("alpha")
    prob.add_eq(x_minus @ q - s, name="X- Q symmetric")
    prob.add_psd(sdp.bmat([
        [s - alpha * (x_plus @ x_plus.T), x_plus @ q],
        [q.T @ x_plus.T, s],
    ]), name="closed-loop LMI", strict=True)
    prob.add_psd(sdp.bmat([[np.eye(T), q], [q.T, s]]), name="Q bound", strict=True)
    prob.add_psd(alpha - alpha_threshold(gamma), name="alpha threshold", strict=True)
    return _verdict(prob, settings)


def berberich_lmi(x_plus, x_minus, u_minus, q_w, r_w,
                  settings: sdp.SdpSettings = sdp.SdpSettings()) -> LmiVerdict:
    """Find ``(Y, M)`` with ``X- M = Y`` and the strict four-block LMI ``< 0``."""
    x_plus, x_minus, _ = _data(x_plus, x_minus, u_minus)
    n, T = x_plus.shape
    q_w = np.atleast_2d(np.asarray(q_w, dtype=float))
    r_w = np.atleast_2d(np.asarray(r_w, dtype=float))
    if q_w.shape != (n, n) or r_w.shape != (T, T):
        raise ValueError(f"Q_w must be {n}x{n} and R_w {T}x{T}")
    prob = sdp.SdpProblem()
    y = prob.symmetric("Y", n)
    mm = prob.full("M", T, n)
    prob.add_eq(x_minus @ mm - y, name="X- M = Y")
    lmi = sdp.bmat([
        [-y, None, mm.T @ x_plus.T, mm.T],
        [None, q_w, np.eye(n), None],
        [x_plus @ mm, np.eye(n), -y, None],
        [mm, None, None, -np.linalg.inv(r_w)],
    ])
    prob.add_psd(-lmi, name="four-block LMI", strict=True)
    return _verdict(prob, settings)
