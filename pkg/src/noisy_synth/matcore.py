"""Dense symmetric-matrix helpers shared by the rest of the package.

Symmetric matrices are plain ``numpy`` arrays; :func:`as_sym` is the single
entry point that validates and symmetrizes them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "Tolerance",
    "DEFAULT_TOL",
    "as_sym",
    "spectral_scale",
    "sym_eig",
    "min_eig",
    "definiteness",
    "schur_complement",
    "null_space",
    "psd_sqrt",
    "read_matrix_csv",
    "write_matrix_csv",
]


@dataclass(frozen=True)
class Tolerance:
    """Numeric thresholds for (semi)definiteness decisions.

    ``eig_zero`` is relative to the spectral scale ``max(1, |lambda|_max)``;
    ``strict_margin`` is relative as well. ``psd_margin`` is the absolute
    slack used when certifying LMI constraints.
    """

    eig_zero: float = 1e-9
    psd_margin: float = 1e-8
    strict_margin: float = 1e-8

    def __post_init__(self):
        for name in ("eig_zero", "psd_margin", "strict_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


DEFAULT_TOL = Tolerance()


def as_sym(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite symmetric 2-D float array.

    Scalars and 1-element inputs become 1x1 matrices. The result is
    ``(a + a.T) / 2`` so it is bit-exactly symmetric.
    """
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] < 1:
        raise ValueError(f"{name} must be a non-empty square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} has non-finite entries")
    return 0.5 * (m + m.T)


def spectral_scale(eigenvalues) -> float:
    ev = np.asarray(eigenvalues, dtype=float)
    return max(1.0, float(np.max(np.abs(ev)))) if ev.size else 1.0


def sym_eig(s) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix."""
    s = as_sym(s)
    w, v = np.linalg.eigh(s)
    return w, v


def min_eig(s) -> float:
    return float(np.linalg.eigvalsh(as_sym(s))[0])


def definiteness(s, mode: str, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Test ``s`` for one of the modes ``PSD``, ``PD``, ``NSD``, ``ND``."""
    mode = mode.upper()
    if mode in ("NSD", "ND"):
        return definiteness(-as_sym(s), "PSD" if mode == "NSD" else "PD", tol)
    w = np.linalg.eigvalsh(as_sym(s))
    scale = spectral_scale(w)
    if mode == "PD":
        return bool(w[0] > tol.strict_margin * scale)
    if mode == "PSD":
        return bool(w[0] >= -tol.eig_zero * scale)
    raise ValueError(f"unknown definiteness mode {mode!r}")


def schur_complement(m, split: int, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """``A - B D^{-1} B^T`` for ``m = [[A, B], [B^T, D]]`` with ``A`` of size ``split``."""
    m = as_sym(m)
    k = m.shape[0]
    if not 0 < split < k:
        raise ValueError(f"split must lie in (0, {k}), got {split}")
    a, b, d = m[:split, :split], m[:split, split:], m[split:, split:]
    w = np.linalg.eigvalsh(d)
    if np.min(np.abs(w)) <= tol.eig_zero * spectral_scale(w):
        raise np.linalg.LinAlgError("trailing block is singular")
    return as_sym(a - b @ np.linalg.solve(d, b.T))


def null_space(a, rel_tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of ``a``."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    _, s, vt = np.linalg.svd(a)
    scale = max(1.0, s[0]) if s.size else 1.0
    rank = int(np.sum(s > rel_tol * scale))
    return vt[rank:].T.copy()


def psd_sqrt(s, tol: Tolerance = DEFAULT_TOL) -> np.ndarray:
    """Symmetric square root; eigenvalues within ``-eig_zero*scale`` are clipped to 0."""
    w, v = sym_eig(s)
    scale = spectral_scale(w)
    if w[0] < -tol.eig_zero * scale:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    return (v * np.sqrt(w)) @ v.T


def read_matrix_csv(path) -> np.ndarray:
    """Read a headerless comma-separated matrix; always returns a 2-D array."""
    text = Path(path).read_text().strip()
    if not text:
        raise ValueError(f"{path}: empty matrix file")
    rows = [[float(c) for c in line.split(",")] for line in text.splitlines() if line.strip()]
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: ragged rows")
    return np.array(rows, dtype=float)


def write_matrix_csv(path, a) -> None:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    lines = [",".join(repr(float(v)) for v in row) for row in a]
    Path(path).write_text("\n".join(lines) + "\n")
