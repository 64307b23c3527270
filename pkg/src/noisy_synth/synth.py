"""State-feedback synthesis from noisy data: stabilization, H2 and H-infinity LMIs.

Every LMI contains the data-dependent term ``alpha * N`` with ``N`` the
matrix of the consistent-system QMI, padded with zero blocks. When
``[X-; U-]`` has full row rank the LMIs are assembled in whitened
coordinates: the data block is replaced by ``T^T N T = diag(Delta, -I)`` and
the variable blocks are conjugated by the same ``T``, which leaves ``alpha``
and ``beta`` unchanged. ``N`` is also divided by its spectral norm; the
reported ``alpha`` is in the original units.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import sdp
from .matcore import DEFAULT_TOL, Tolerance, as_sym
from .noise import NoiseModel, from_sample_norm_bound
from .sigma import QmiForm, build_n, slater_check, whiten

__all__ = [
    "PerformanceSpec",
    "Controller",
    "NotInformativeError",
    "IndeterminateError",
    "SynthProblem",
    "stab_problem",
    "h2_problem",
    "hinf_problem",
    "stab_multi_problem",
    "synth_stab",
    "synth_h2",
    "synth_hinf",
    "synth_stab_multi",
    "sample_forms",
    "problem_for",
    "data_form",
    "check_image_inclusion",
    "save_controller",
    "load_controller",
]

# relative shrink used to close the strict trace bound on Z
TRACE_GAP = 1e-9
# bound on Y for the retry when the trace infimum is not attained
H2_Y_CAP = 1e6


class NotInformativeError(RuntimeError):
    """The LMI is infeasible; conclusive when the Slater condition holds."""

    def __init__(self, message: str, slater: bool, report: Optional[sdp.SolveReport] = None):
        super().__init__(message)
        self.slater = slater
        self.report = report


class IndeterminateError(RuntimeError):
    """The solver did not reach a verified verdict."""

    def __init__(self, message: str, report: Optional[sdp.SolveReport] = None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class PerformanceSpec:
    """Performance output ``z = C x + D u`` and an optional level ``gamma``."""

    c: np.ndarray
    d: np.ndarray
    gamma: Optional[float] = None

    def __post_init__(self):
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        if c.shape[0] != d.shape[0]:
            raise ValueError(f"C and D need the same number of rows, got {c.shape} and {d.shape}")
        if not (np.all(np.isfinite(c)) and np.all(np.isfinite(d))):
            raise ValueError("C and D must be finite")
        if self.gamma is not None and not (np.isfinite(self.gamma) and self.gamma > 0):
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    @property
    def p(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True)
class Controller:
    """Gain ``K`` with its certificate.

    ``p`` is set for stabilization controllers, ``y`` (and ``z`` for H2)
    for the performance designs. ``alphas`` holds the per-sample multipliers
    of the multi-multiplier design, in which case ``alpha`` is their sum.
    """

    kind: str
    k: np.ndarray
    alpha: float
    beta: float
    slater: bool
    p: Optional[np.ndarray] = None
    y: Optional[np.ndarray] = None
    z: Optional[np.ndarray] = None
    gamma_achieved: Optional[float] = None
    mu: Optional[float] = None
    alphas: Optional[np.ndarray] = None
    flags: tuple = ()

    def __post_init__(self):
        if self.kind not in ("stab", "h2", "hinf", "stab-multi"):
            raise ValueError(f"unknown controller kind {self.kind!r}")
        if (self.p is None) == (self.y is None):
            raise ValueError("exactly one of P and Y must be given")
        if self.alpha < 0 or not self.beta > 0:
            raise ValueError("need alpha >= 0 and beta > 0")
        cert = self.p if self.p is not None else self.y
        if np.linalg.eigvalsh(as_sym(cert))[0] <= 0:
            raise ValueError("Lyapunov certificate must be positive definite")

    @property
    def lyapunov(self) -> np.ndarray:
        """The matrix ``P`` of ``P - A_K P A_K^T > 0`` (``Y`` for the performance designs)."""
        return self.p if self.p is not None else self.y

    @property
    def l(self) -> np.ndarray:  # noqa: E743
        return self.k @ self.lyapunov

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "K": self.k.tolist()}
        if self.p is not None:
            out["P"] = self.p.tolist()
        else:
            out["Y"] = self.y.tolist()
        if self.z is not None:
            out["Z"] = self.z.tolist()
        out.update(alpha=self.alpha, beta=self.beta)
        if self.gamma_achieved is not None:
            out["gamma_achieved"] = self.gamma_achieved
        if self.mu is not None:
            out["mu"] = self.mu
        if self.alphas is not None:
            out["alphas"] = self.alphas.tolist()
        out["slater"] = self.slater
        out["flags"] = list(self.flags)
        return out

    @classmethod
    def from_dict(cls, rec: dict) -> "Controller":
        def arr(key):
            return None if key not in rec else np.array(rec[key], dtype=float)

        return cls(
            kind=rec["kind"], k=np.atleast_2d(arr("K")), alpha=float(rec["alpha"]), beta=float(rec["beta"]),
            slater=bool(rec["slater"]), p=arr("P"), y=arr("Y"), z=arr("Z"),
            gamma_achieved=rec.get("gamma_achieved"), mu=rec.get("mu"), alphas=arr("alphas"),
            flags=tuple(rec.get("flags", ())),
        )


def save_controller(ctrl: Controller, path) -> None:
    Path(path).write_text(json.dumps(ctrl.to_dict(), indent=2) + "\n")


def load_controller(path) -> Controller:
    return Controller.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SynthProblem:
    """An assembled LMI together with the scale applied to ``N``.

    ``alpha_vars`` maps multiplier variable names to the scale dividing the
    corresponding ``N`` term, so that ``alpha = alpha_scaled / scale``.
    """

    problem: sdp.SdpProblem
    kind: str
    n: int
    m: int
    alpha_vars: dict = field(default_factory=dict)
    mu_fixed: Optional[float] = None

    def assignment(self, ctrl: Controller) -> dict:
        """Variables of this problem recovered from a controller (``L = K P`` or ``K Y``)."""
        cert = ctrl.lyapunov
        out = {"L": ctrl.k @ cert, "beta": ctrl.beta}
        out["P" if self.kind in ("stab", "stab-multi") else "Y"] = cert
        if self.kind == "stab-multi":
            for t, (name, s) in enumerate(self.alpha_vars.items()):
                out[name] = ctrl.alphas[t] * s
        else:
            ((name, s),) = self.alpha_vars.items()
            out[name] = ctrl.alpha * s
        if self.kind == "h2":
            out["Z"] = ctrl.z
        if self.kind == "hinf" and self.mu_fixed is None:
            out["mu"] = ctrl.mu
        return out

    def verify(self, ctrl: Controller, settings: sdp.SdpSettings = sdp.SdpSettings()):
        """Substitute ``ctrl`` back into the LMI; returns ``(feasible, worst_eig)``."""
        return sdp.verify_assignment(self.problem, self.assignment(ctrl), settings)


def _scaled(n_mat):
    s = float(np.linalg.norm(n_mat, 2))
    s = s if s > 0 else 1.0
    return n_mat / s, s


def _pad(n_mat, total):
    out = np.zeros((total, total))
    d = n_mat.shape[0]
    out[:d, :d] = n_mat
    return out


def data_form(x_plus, x_minus, u_minus, model: NoiseModel, tol: Tolerance = DEFAULT_TOL):
    """``(form, transform, slater)`` for the consistent set.

    ``transform`` is ``None`` when the data are rank deficient and the plain
    ``N`` is used.
    """
    try:
        w = whiten(x_plus, x_minus, u_minus, model, tol)
    except ValueError:
        n_form = build_n(x_plus, x_minus, u_minus, model)
        return n_form, None, slater_check(n_form, tol=tol)[0]
    dw = np.linalg.eigvalsh(w.delta)
    return w.form, w.transform, bool(dw[0] > tol.strict_margin * max(1.0, abs(dw[-1])))


def _conjugate(expr, transform, total):
    if transform is None:
        return expr
    t = np.eye(total)
    d = transform.shape[0]
    t[:d, :d] = transform
    return t.T @ expr @ t


def stab_problem(n_form: QmiForm, m: int, transform=None) -> SynthProblem:
    """LMI for quadratic stabilization; blocks of sizes ``(n, n, m, n)``.

    Maximizes ``beta`` under the normalization ``P <= I`` (the LMI is
    homogeneous in ``(P, L, alpha, beta)``). ``transform`` conjugates the
    variable blocks when ``n_form`` is given in whitened coordinates.
    """
    n = n_form.k
    if n_form.mat.shape[0] != 2 * n + m:
        raise ValueError(f"N must be {2 * n + m} square for n={n}, m={m}")
    nmat, s = _scaled(n_form.mat)
    prob = sdp.SdpProblem()
    p = prob.symmetric("P", n)
    l = prob.full("L", m, n)  # noqa: E741
    alpha = prob.scalar("alpha")
    beta = prob.scalar("beta")
    lmi = sdp.bmat([
        [p - beta * np.eye(n), None, None, None],
        [None, -p, -l.T, None],
        [None, -l, np.zeros((m, m)), l],
        [None, None, l.T, p],
    ])
    lmi = _conjugate(lmi, transform, 3 * n + m) - alpha * _pad(nmat, 3 * n + m)
    prob.add_psd(lmi, name="stabilization LMI")
    prob.add_psd(p, name="P > 0", strict=True)
    prob.add_psd(np.eye(n) - p, name="P <= I")
    prob.add_psd(alpha, name="alpha >= 0")
    prob.add_psd(beta, name="beta > 0", strict=True)
    prob.maximize(beta)
    return SynthProblem(prob, "stab", n, m, {"alpha": s})


def _perf_blocks(prob, n, m, spec: PerformanceSpec):
    if spec.c.shape[1] != n or spec.d.shape[1] != m:
        raise ValueError(f"C must be p x {n} and D p x {m}")
    y = prob.symmetric("Y", n)
    l = prob.full("L", m, n)  # noqa: E741
    alpha = prob.scalar("alpha")
    beta = prob.scalar("beta")
    cyl = spec.c @ y + spec.d @ l
    return y, l, alpha, beta, cyl


def h2_problem(n_form: QmiForm, m: int, spec: PerformanceSpec, e_subspace=None, transform=None,
               y_cap: Optional[float] = None) -> SynthProblem:
    """H2 LMIs with blocks ``(n, n, m, n, p)``; minimizes ``trace Z``.

    ``y_cap`` adds ``Y <= y_cap I``, which keeps the problem bounded when the
    infimum of ``trace Z`` is only approached as ``Y`` grows.
    """
    n, pdim = n_form.k, spec.p
    nmat, s = _scaled(n_form.mat)
    prob = sdp.SdpProblem()
    y, l, alpha, beta, cyl = _perf_blocks(prob, n, m, spec)  # noqa: E741
    lmi = sdp.bmat([
        [y - beta * np.eye(n), None, None, None, None],
        [None, np.zeros((n, n)), None, y, None],
        [None, None, np.zeros((m, m)), l, None],
        [None, y, l.T, y, cyl.T],
        [None, None, None, cyl, np.eye(pdim)],
    ])
    lmi = _conjugate(lmi, transform, 3 * n + m + pdim) - alpha * _pad(nmat, 3 * n + m + pdim)
    prob.add_psd(lmi, name="H2 LMI")
    prob.add_psd(sdp.bmat([[y, cyl.T], [cyl, np.eye(pdim)]]), name="output LMI", strict=True)
    e = np.eye(n) if e_subspace is None else np.atleast_2d(np.asarray(e_subspace, dtype=float))
    if e.shape[0] != n:
        raise ValueError(f"E must have {n} rows")
    z = prob.symmetric("Z", e.shape[1])
    prob.add_psd(sdp.bmat([[z, e.T], [e, y]]), name="trace coupling")
    if y_cap is not None:
        prob.add_psd(y_cap * np.eye(n) - y, name="Y cap")
    if spec.gamma is not None:
        prob.add_psd(spec.gamma ** 2 * (1.0 - TRACE_GAP) - z.trace(), name="trace Z < gamma^2")
    prob.add_psd(alpha, name="alpha >= 0")
    prob.add_psd(beta, name="beta > 0", strict=True)
    prob.minimize(z.trace())
    return SynthProblem(prob, "h2", n, m, {"alpha": s})


def hinf_problem(n_form: QmiForm, m: int, spec: PerformanceSpec, transform=None) -> SynthProblem:
    """H-infinity LMI with blocks ``(n, n, m, n, p)``.

    With ``spec.gamma`` set, ``mu = 1/gamma^2`` is fixed and the problem is a
    feasibility problem; otherwise ``mu`` is a variable and is maximized.
    """
    n, pdim = n_form.k, spec.p
    nmat, s = _scaled(n_form.mat)
    prob = sdp.SdpProblem()
    y, l, alpha, beta, cyl = _perf_blocks(prob, n, m, spec)  # noqa: E741
    if spec.gamma is None:
        mu, mu_fixed = prob.scalar("mu"), None
        prob.maximize(mu)
    else:
        mu_fixed = 1.0 / spec.gamma ** 2
        mu = mu_fixed
    lmi = sdp.bmat([
        [y - beta * np.eye(n), None, None, None, cyl.T],
        [None, np.zeros((n, n)), None, y, None],
        [None, None, np.zeros((m, m)), l, None],
        [None, y, l.T, y - mu * np.eye(n), None],
        [cyl, None, None, None, np.eye(pdim)],
    ])
    lmi = _conjugate(lmi, transform, 3 * n + m + pdim) - alpha * _pad(nmat, 3 * n + m + pdim)
    prob.add_psd(lmi, name="Hinf LMI")
    prob.add_psd(y - mu * np.eye(n), name="Y > mu I", strict=True)
    prob.add_psd(alpha, name="alpha >= 0")
    prob.add_psd(beta, name="beta > 0", strict=True)
    return SynthProblem(prob, "hinf", n, m, {"alpha": s}, mu_fixed)


def sample_forms(x_plus, x_minus, u_minus, eps: float) -> list[QmiForm]:
    """Per-sample QMIs from ``|w(t)|^2 <= eps``."""
    x_plus, x_minus, u_minus = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x_plus, x_minus, u_minus))
    n, T = x_plus.shape
    model = from_sample_norm_bound(eps, n, 1)
    return [build_n(x_plus[:, t:t + 1], x_minus[:, t:t + 1], u_minus[:, t:t + 1], model) for t in range(T)]


def stab_multi_problem(forms: list[QmiForm], m: int) -> SynthProblem:
    """Stabilization LMI with one multiplier per sample QMI."""
    n = forms[0].k
    prob = sdp.SdpProblem()
    p = prob.symmetric("P", n)
    l = prob.full("L", m, n)  # noqa: E741
    beta = prob.scalar("beta")
    lmi = sdp.bmat([
        [p - beta * np.eye(n), None, None, None],
        [None, -p, -l.T, None],
        [None, -l, np.zeros((m, m)), l],
        [None, None, l.T, p],
    ])
    scales = {}
    for t, f in enumerate(forms):
        nmat, s = _scaled(f.mat)
        a = prob.scalar(f"alpha{t}")
        prob.add_psd(a, name=f"alpha{t} >= 0")
        lmi = lmi - a * _pad(nmat, 3 * n + m)
        scales[f"alpha{t}"] = s
    prob.add_psd(lmi, name="multi-multiplier LMI")
    prob.add_psd(p, name="P > 0", strict=True)
    prob.add_psd(np.eye(n) - p, name="P <= I")
    prob.add_psd(beta, name="beta > 0", strict=True)
    prob.maximize(beta)
    return SynthProblem(prob, "stab-multi", n, m, scales)


def _gain(l, cert):
    # K = L cert^{-1} via a linear solve with the symmetric certificate
    return np.linalg.solve(cert, l.T).T


def _run(sp: SynthProblem, settings: sdp.SdpSettings, slater: bool, what: str, conclusive_infeasible: bool = True):
    assignment, report = sdp.solve(sp.problem, settings)
    flags = []
    if report.status == sdp.INFEASIBLE:
        if conclusive_infeasible:
            note = "" if slater else " (Slater condition not verified: only the sufficient direction holds)"
            raise NotInformativeError(f"data are not informative for {what}{note}", slater, report)
        raise IndeterminateError(f"{what}: LMI infeasible, which is inconclusive for this design", report)
    if report.status == sdp.UNBOUNDED or assignment is None:
        raise IndeterminateError(f"{what}: solver returned {report.status}: {report.message}", report)
    if report.status != sdp.OPTIMAL:
        feasible, _ = sdp.verify_assignment(sp.problem, assignment, settings)
        if not feasible:
            raise IndeterminateError(f"{what}: solver returned {report.status}: {report.message}", report)
        flags.append("solver-inaccurate-but-verified")
    if not slater:
        flags.append("sufficient-only")
    return assignment, report, flags


def synth_stab(x_plus, x_minus, u_minus, model: NoiseModel,
               settings: sdp.SdpSettings = sdp.SdpSettings(), tol: Tolerance = DEFAULT_TOL) -> Controller:
    """Quadratically stabilizing gain for every system consistent with the data."""
    n_form, transform, slater = data_form(x_plus, x_minus, u_minus, model, tol)
    m = np.atleast_2d(u_minus).shape[0]
    sp = stab_problem(n_form, m, transform)
    a, _, flags = _run(sp, settings, slater, "quadratic stabilization")
    return Controller("stab", _gain(a["L"], a["P"]), a["alpha"] / sp.alpha_vars["alpha"], a["beta"],
                      slater, p=a["P"], flags=tuple(flags))


def synth_h2(x_plus, x_minus, u_minus, model: NoiseModel, spec: PerformanceSpec, e_subspace=None,
             settings: sdp.SdpSettings = sdp.SdpSettings(), tol: Tolerance = DEFAULT_TOL) -> Controller:
    """Gain with ``|G|_H2 < gamma_achieved`` for every consistent system."""
    n_form, transform, slater = data_form(x_plus, x_minus, u_minus, model, tol)
    m = np.atleast_2d(u_minus).shape[0]
    sp = h2_problem(n_form, m, spec, e_subspace, transform)
    level = "" if spec.gamma is None else f" at gamma={spec.gamma:g}"
    try:
        a, _, flags = _run(sp, settings, slater, f"H2 control{level}")
    except IndeterminateError:
        if spec.gamma is not None:
            raise
        sp = h2_problem(n_form, m, spec, e_subspace, transform, y_cap=H2_Y_CAP)
        a, _, flags = _run(sp, settings, slater, "H2 control (capped Y)")
        flags.append("lyapunov-capped")
    gamma = float(np.sqrt(np.trace(a["Z"]) * (1.0 + TRACE_GAP)))
    return Controller("h2", _gain(a["L"], a["Y"]), a["alpha"] / sp.alpha_vars["alpha"], a["beta"], slater,
                      y=a["Y"], z=a["Z"], gamma_achieved=gamma, flags=tuple(flags))


def synth_hinf(x_plus, x_minus, u_minus, model: NoiseModel, spec: PerformanceSpec,
               settings: sdp.SdpSettings = sdp.SdpSettings(), tol: Tolerance = DEFAULT_TOL) -> Controller:
    """Gain with ``|G|_Hinf < gamma_achieved`` for every consistent system."""
    n_form, transform, slater = data_form(x_plus, x_minus, u_minus, model, tol)
    m = np.atleast_2d(u_minus).shape[0]
    sp = hinf_problem(n_form, m, spec, transform)
    level = "" if spec.gamma is None else f" at gamma={spec.gamma:g}"
    a, _, flags = _run(sp, settings, slater, f"Hinf control{level}")
    if sp.mu_fixed is None:
        mu = a["mu"]
        if not mu > 0:
            raise IndeterminateError("Hinf control: optimal mu is not positive")
        gamma = float(1.0 / np.sqrt(mu * (1.0 - TRACE_GAP)))
    else:
        mu, gamma = sp.mu_fixed, spec.gamma
    return Controller("hinf", _gain(a["L"], a["Y"]), a["alpha"] / sp.alpha_vars["alpha"], a["beta"], slater,
                      y=a["Y"], gamma_achieved=gamma, mu=mu, flags=tuple(flags))


def synth_stab_multi(x_plus, x_minus, u_minus, eps: float,
                     settings: sdp.SdpSettings = sdp.SdpSettings()) -> Controller:
    """Stabilization with one multiplier per sample bound ``|w(t)|^2 <= eps``.

    Only sufficient: infeasibility raises :class:`IndeterminateError`.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    forms = sample_forms(x_plus, x_minus, u_minus, eps)
    m = np.atleast_2d(u_minus).shape[0]
    sp = stab_multi_problem(forms, m)
    a, _, flags = _run(sp, settings, True, "multi-multiplier stabilization", conclusive_infeasible=False)
    alphas = np.array([a[name] / s for name, s in sp.alpha_vars.items()])
    return Controller("stab-multi", _gain(a["L"], a["P"]), float(alphas.sum()), a["beta"], False,
                      p=a["P"], alphas=alphas, flags=tuple(flags) + ("conservative",))


def problem_for(ctrl: Controller, x_plus, x_minus, u_minus, model: Optional[NoiseModel] = None,
                spec: Optional[PerformanceSpec] = None, e_subspace=None, eps: Optional[float] = None) -> SynthProblem:
    """Rebuild the LMI a controller was computed from, for certificate checks."""
    m = np.atleast_2d(u_minus).shape[0]
    if ctrl.kind == "stab-multi":
        return stab_multi_problem(sample_forms(x_plus, x_minus, u_minus, eps), m)
    n_form, transform, _ = data_form(x_plus, x_minus, u_minus, model)
    if ctrl.kind == "stab":
        return stab_problem(n_form, m, transform)
    if ctrl.kind == "h2":
        return h2_problem(n_form, m, spec, e_subspace, transform)
    return hinf_problem(n_form, m, spec, transform)


def check_image_inclusion(k, x_minus, u_minus, rel_tol: float = 1e-8) -> bool:
    """Whether ``im [I; K]`` lies in ``im [X-; U-]`` (least-squares residual per column)."""
    k = np.atleast_2d(np.asarray(k, dtype=float))
    data = np.vstack([np.atleast_2d(x_minus), np.atleast_2d(u_minus)])
    target = np.vstack([np.eye(k.shape[1]), k])
    if data.shape[0] != target.shape[0]:
        raise ValueError("K must be m x n with [X-; U-] of n + m rows")
    if not np.any(data):
        return False
    coef, *_ = np.linalg.lstsq(data, target, rcond=None)
    resid = np.linalg.norm(data @ coef - target, axis=0)
    return bool(np.all(resid <= rel_tol * np.maximum(1.0, np.linalg.norm(target, axis=0))))
