"""The set of systems consistent with the data, written as a quadratic matrix inequality.

A :class:`QmiForm` with identity block size ``k`` represents the map
``Z -> [I_k; Z]^T M [I_k; Z]``. For data-consistent systems ``Z = [A^T; B^T]``
and ``k = n``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cholesky, qr, solve_triangular

from .data import SystemPair
from .matcore import DEFAULT_TOL, Tolerance, as_sym, definiteness, null_space, psd_sqrt, spectral_scale
from .noise import NoiseModel

__all__ = [
    "QmiForm",
    "build_n",
    "membership",
    "slater_check",
    "is_bounded",
    "kernel_inclusion",
    "ellipsoid_center",
    "sample_solution_set",
    "sample_sigma",
    "WhitenedData",
    "whiten",
]


@dataclass(frozen=True)
class QmiForm:
    mat: np.ndarray
    k: int

    def __post_init__(self):
        mat = as_sym(self.mat, "QMI matrix")
        if not 1 <= self.k < mat.shape[0]:
            raise ValueError(f"identity block size must lie in [1, {mat.shape[0] - 1}]")
        object.__setattr__(self, "mat", mat)

    @property
    def q(self) -> int:
        return self.mat.shape[0] - self.k

    @property
    def m11(self):
        return self.mat[: self.k, : self.k]

    @property
    def m12(self):
        return self.mat[: self.k, self.k:]

    @property
    def m22(self):
        return self.mat[self.k:, self.k:]

    def evaluate(self, z) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        if z.shape != (self.q, self.k):
            raise ValueError(f"Z must be {self.q}x{self.k}, got {z.shape}")
        g = self.m12 @ z
        return as_sym(self.m11 + g + g.T + z.T @ self.m22 @ z)

    def evaluate_many(self, zs) -> np.ndarray:
        """Vectorized :meth:`evaluate` over a stack of shape (count, q, k)."""
        g = np.einsum("ij,njk->nik", self.m12, zs)
        out = self.m11 + g + np.swapaxes(g, 1, 2) + np.einsum("nji,jk,nkl->nil", zs, self.m22, zs)
        return 0.5 * (out + np.swapaxes(out, 1, 2))


def _data_lift(x_plus, x_minus, u_minus):
    n, T = x_plus.shape
    m = u_minus.shape[0]
    return np.block([
        [np.eye(n), x_plus],
        [np.zeros((n, n)), -x_minus],
        [np.zeros((m, n)), -u_minus],
    ])


def build_n(x_plus, x_minus, u_minus, model: NoiseModel) -> QmiForm:
    """``N = [I X+; 0 -X-; 0 -U-] Phi [I X+; 0 -X-; 0 -U-]^T`` with ``k = n``."""
    x_plus, x_minus, u_minus = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x_plus, x_minus, u_minus))
    n, T = x_plus.shape
    if x_minus.shape != (n, T) or u_minus.shape[1] != T:
        raise ValueError("X+, X-, U- must share the number of columns and X+/X- the row count")
    if model.n != n or model.T != T:
        raise ValueError(f"noise model is {model.n}x{model.T}, data are {n}x{T}")
    lift = _data_lift(x_plus, x_minus, u_minus)
    return QmiForm(lift @ model.matrix @ lift.T, n)


def membership(sys: SystemPair, n_form: QmiForm, tol: Tolerance = DEFAULT_TOL) -> tuple[bool, float]:
    """Whether ``(A, B)`` explains the data; returns the verdict and ``lambda_min``."""
    z = np.vstack([sys.a.T, sys.b.T])
    q = n_form.evaluate(z)
    return definiteness(q, "PSD", tol), float(np.linalg.eigvalsh(q)[0])


def is_bounded(x_minus, u_minus, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Full row rank of ``[X-; U-]``, which makes the consistent set bounded."""
    s = np.linalg.svd(np.vstack([np.atleast_2d(x_minus), np.atleast_2d(u_minus)]), compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return False
    rows = np.atleast_2d(x_minus).shape[0] + np.atleast_2d(u_minus).shape[0]
    return int(np.sum(s > tol.eig_zero * max(1.0, s[0]))) == rows


def kernel_inclusion(n22, n12, rel_tol: float = 1e-8) -> bool:
    """``ker N22 within ker N12`` via ``|N12 V0| <= tol`` for a kernel basis ``V0``."""
    n22 = as_sym(n22)
    w = np.linalg.eigvalsh(n22)
    kern = null_space(n22, rel_tol * 1e-1)
    if kern.shape[1] == 0:
        return True
    scale = max(spectral_scale(w), float(np.max(np.abs(n12), initial=0.0)))
    return bool(np.max(np.abs(np.atleast_2d(n12) @ kern)) <= rel_tol * scale)


def ellipsoid_center(form: QmiForm, tol: Tolerance = DEFAULT_TOL):
    """``(Zc, Delta)`` from completing the square, using a pseudo-inverse of ``N22``.

    ``Z^T N22 Z + ... = Delta + (Z - Zc)^T N22 (Z - Zc)``, exact whenever the
    range of ``N12^T`` lies in the range of ``N22``.
    """
    pinv = np.linalg.pinv(form.m22, rcond=tol.eig_zero, hermitian=True)
    zc = -pinv @ form.m12.T
    delta = as_sym(form.m11 - form.m12 @ pinv @ form.m12.T)
    return zc, delta


def slater_check(n_form: QmiForm, n: Optional[int] = None, seed: int = 0,
                 candidates: int = 1000, tol: Tolerance = DEFAULT_TOL):
    """Look for ``Zbar`` with ``[I; Zbar]^T N [I; Zbar] > 0``.

    Returns ``(satisfied, zbar, positive_eigenvalue_count)``. The analytic
    center is tried first, then ``candidates`` seeded Gaussian matrices
    around it on a logarithmic grid of scales.
    """
    k = n_form.k if n is None else n
    if k != n_form.k:
        raise ValueError("n must equal the identity block size of the form")
    w = np.linalg.eigvalsh(n_form.mat)
    npos = int(np.sum(w > tol.strict_margin * spectral_scale(w)))
    if npos < k:
        return False, None, npos

    def ok(z):
        return definiteness(n_form.evaluate(z), "PD", tol)

    zc, _ = ellipsoid_center(n_form, tol)
    if ok(zc):
        return True, zc, npos
    zero = np.zeros((n_form.q, k))
    if ok(zero):
        return True, zero, npos
    rng = np.random.default_rng(seed)
    scales = np.logspace(-3, 3, 13)
    for i in range(candidates):
        base = zc if i % 2 == 0 else zero
        z = base + scales[i % scales.size] * rng.standard_normal((n_form.q, k))
        if ok(z):
            return True, z, npos
    return False, None, npos


def _spectral_unit_ball(rng, shape, count, mode):
    g = rng.standard_normal((count, *shape))
    smax = np.linalg.norm(g, ord=2, axis=(1, 2))
    v = g / smax[:, None, None]
    if mode == "boundary":
        return v
    if mode != "interior":
        raise ValueError(f"unknown sampling mode {mode!r}")
    dim = shape[0] * shape[1]
    return v * rng.uniform(size=count)[:, None, None] ** (1.0 / dim)


def sample_solution_set(form: QmiForm, count: int, rng, mode: str = "interior",
                        tol: Tolerance = DEFAULT_TOL, kernel_scale: float = 10.0) -> np.ndarray:
    """Sample ``Z`` with ``[I; Z]^T N [I; Z] >= 0``; returns shape (count, q, k).

    Uses ``Z = Zc + (-N22)^{+1/2} V Delta^{1/2} + K0 R`` with ``|V|_2 <= 1``
    (``= 1`` in boundary mode). ``K0`` spans ``ker N22`` and ``R`` is Gaussian
    with standard deviation ``kernel_scale``; it is only present when
    ``N22`` is singular, which requires ``ker N22`` within ``ker N12``.
    """
    if not definiteness(form.m22, "NSD", tol):
        raise ValueError("N22 must be negative semidefinite to sample the solution set")
    w, vecs = np.linalg.eigh(form.m22)
    scale = spectral_scale(w)
    nz = w < -tol.eig_zero * scale
    kern = vecs[:, ~nz]
    if kern.shape[1] and not kernel_inclusion(form.m22, form.m12):
        raise ValueError("ker N22 is not contained in ker N12; solution set is not an ellipsoid")
    zc, delta = ellipsoid_center(form, tol)
    dw = np.linalg.eigvalsh(delta)
    if dw[0] < -tol.eig_zero * spectral_scale(dw):
        raise ValueError("Schur complement Delta is not PSD; the solution set is empty")
    droot = psd_sqrt(delta, tol)
    inv_root = (vecs[:, nz] / np.sqrt(-w[nz])) @ vecs[:, nz].T
    v = _spectral_unit_ball(rng, (form.q, form.k), count, mode)
    z = zc + np.einsum("ij,njk,kl->nil", inv_root, v, droot)
    if kern.shape[1]:
        r = kernel_scale * rng.standard_normal((count, kern.shape[1], form.k))
        z = z + np.einsum("ij,njk->nik", kern, r)
    return z


def sample_sigma(n_form: QmiForm, count: int, seed: int, mode: str = "interior",
                 tol: Tolerance = DEFAULT_TOL) -> list[SystemPair]:
    """Draw systems ``(A, B)`` from the consistent set (requires ``N22 < 0``)."""
    if not definiteness(n_form.m22, "ND", tol):
        raise ValueError("N22 must be negative definite (data of full row rank)")
    rng = np.random.default_rng(seed)
    zs = sample_solution_set(n_form, count, rng, mode, tol)
    n = n_form.k
    return [SystemPair(z[:n].T, z[n:].T) for z in zs]


@dataclass(frozen=True)
class WhitenedData:
    """Consistent set in coordinates where its QMI is ``diag(Delta, -I)``.

    ``Z = zc + R^{-1} Zhat`` with ``-N22 = R^T R``; then
    ``[I; Z]^T N [I; Z] = Delta - Zhat^T Zhat``. Working in these coordinates
    avoids the cancellation in ``N11 - N12 N22^{-1} N12^T`` when the data
    are large compared to the noise level.
    """

    zc: np.ndarray
    r: np.ndarray
    delta: np.ndarray

    @property
    def n(self) -> int:
        return self.zc.shape[1]

    @property
    def form(self) -> QmiForm:
        q = self.r.shape[0]
        mat = np.zeros((self.n + q, self.n + q))
        mat[: self.n, : self.n] = self.delta
        mat[self.n:, self.n:] = -np.eye(q)
        return QmiForm(mat, self.n)

    @property
    def transform(self) -> np.ndarray:
        """``T`` with ``[I; Z] = T [I; Zhat]``, so that ``T^T N T`` is the whitened matrix."""
        q = self.r.shape[0]
        t = np.zeros((self.n + q, self.n + q))
        t[: self.n, : self.n] = np.eye(self.n)
        t[self.n:, : self.n] = self.zc
        t[self.n:, self.n:] = solve_triangular(self.r, np.eye(q))
        return t

    def to_z(self, zhat) -> np.ndarray:
        return self.zc + solve_triangular(self.r, zhat)

    def sample(self, count: int, seed: int, mode: str = "interior",
               tol: Tolerance = DEFAULT_TOL) -> list[SystemPair]:
        """Systems drawn from the consistent set, as :func:`sample_sigma`."""
        rng = np.random.default_rng(seed)
        zs = [self.to_z(zh) for zh in sample_solution_set(self.form, count, rng, mode, tol)]
        return [SystemPair(z[: self.n].T, z[self.n:].T) for z in zs]


def whiten(x_plus, x_minus, u_minus, model: NoiseModel, tol: Tolerance = DEFAULT_TOL) -> WhitenedData:
    """Whitened description of the consistent set; needs ``[X-; U-]`` of full row rank.

    With ``V = -Phi22 = L L^T``, ``H = L^{-1} (Phi12^T + Phi22 X+^T)`` and
    ``(D L)^T = Q R`` for ``D = [X-; U-]``:
    ``Delta = Phi11 + Phi12 V^{-1} Phi12^T - H^T (I - Q Q^T) H`` and
    ``zc = -R^{-1} Q^T H``.
    """
    x_plus, x_minus, u_minus = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x_plus, x_minus, u_minus))
    n, T = x_plus.shape
    if model.n != n or model.T != T or x_minus.shape != (n, T) or u_minus.shape[1] != T:
        raise ValueError("data and noise model dimensions do not match")
    d = np.vstack([x_minus, u_minus])
    if d.shape[0] > T:
        raise ValueError("fewer samples than states plus inputs: [X-; U-] cannot have full row rank")
    lower = cholesky(-model.phi22, lower=True)
    h = solve_triangular(lower, model.phi12.T + model.phi22 @ x_plus.T, lower=True)
    q, r = qr((d @ lower).T, mode="economic")
    diag = np.abs(np.diag(r))
    if diag.min() <= tol.eig_zero * diag.max():
        raise ValueError("[X-; U-] does not have full row rank")
    qth = q.T @ h
    perp = h - q @ qth
    f = solve_triangular(lower, model.phi12.T, lower=True)
    delta = as_sym(model.phi11 + f.T @ f - perp.T @ perp)
    zc = -solve_triangular(r, qth)
    return WhitenedData(zc, r, delta)
