"""Quadratic noise models ``[I; W^T]^T Phi [I; W^T] >= 0`` on the noise matrix ``W``."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.linalg import block_diag

from .matcore import DEFAULT_TOL, Tolerance, as_sym, definiteness, read_matrix_csv, write_matrix_csv

__all__ = [
    "NoiseModel",
    "from_energy_bound",
    "from_sample_norm_bound",
    "from_sample_covariance",
    "embed_subspace",
    "check_noise",
    "to_transposed_model",
    "block_diagonal",
    "load_model",
    "save_model",
]


@dataclass(frozen=True)
class NoiseModel:
    """Admissible noise set ``Phi11 + Phi12 W^T + W Phi12^T + W Phi22 W^T >= 0``.

    ``phi11`` is n x n, ``phi12`` is n x T and ``phi22`` is T x T and negative
    definite, which makes the admissible set bounded.
    """

    phi11: np.ndarray
    phi12: np.ndarray
    phi22: np.ndarray

    def __post_init__(self):
        phi11 = as_sym(self.phi11, "phi11")
        phi22 = as_sym(self.phi22, "phi22")
        phi12 = np.atleast_2d(np.asarray(self.phi12, dtype=float))
        if phi12.shape != (phi11.shape[0], phi22.shape[0]):
            raise ValueError(
                f"phi12 must be {phi11.shape[0]}x{phi22.shape[0]}, got {phi12.shape}"
            )
        if not np.all(np.isfinite(phi12)):
            raise ValueError("phi12 has non-finite entries")
        if not definiteness(phi22, "ND"):
            raise ValueError("phi22 must be negative definite")
        object.__setattr__(self, "phi11", phi11)
        object.__setattr__(self, "phi12", phi12)
        object.__setattr__(self, "phi22", phi22)

    @property
    def n(self) -> int:
        return self.phi11.shape[0]

    @property
    def T(self) -> int:
        return self.phi22.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        """The full (n+T) x (n+T) matrix ``Phi``."""
        return np.block([[self.phi11, self.phi12], [self.phi12.T, self.phi22]])

    def evaluate(self, w) -> np.ndarray:
        w = np.atleast_2d(np.asarray(w, dtype=float))
        if w.shape != (self.n, self.T):
            raise ValueError(f"noise matrix must be {self.n}x{self.T}, got {w.shape}")
        g = self.phi12 @ w.T
        return as_sym(self.phi11 + g + g.T + w @ self.phi22 @ w.T)


def from_energy_bound(bound, T: int) -> NoiseModel:
    """``W W^T <= bound``."""
    bound = as_sym(bound, "bound")
    if not definiteness(bound, "PSD"):
        raise ValueError("energy bound must be positive semidefinite")
    n = bound.shape[0]
    return NoiseModel(bound, np.zeros((n, T)), -np.eye(T))


def from_sample_norm_bound(eps: float, n: int, T: int) -> NoiseModel:
    """Every column satisfies ``|w(t)|^2 <= eps``, relaxed to ``W W^T <= T eps I``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    return from_energy_bound(T * eps * np.eye(n), T)


def from_sample_covariance(bound, T: int, delta: float = 0.0) -> NoiseModel:
    """Bound on the sample covariance ``W (I - J/T) W^T / (T-1) <= bound``.

    The centering matrix is singular, so ``Phi22`` is only negative
    semidefinite. ``delta > 0`` shifts it to ``Phi22 - delta I``; without it a
    ``ValueError`` is raised.
    """
    bound = as_sym(bound, "bound")
    if not definiteness(bound, "PSD"):
        raise ValueError("covariance bound must be positive semidefinite")
    if T < 2:
        raise ValueError("sample covariance needs T >= 2")
    centering = np.eye(T) - np.ones((T, T)) / T
    phi22 = -centering / (T - 1) - delta * np.eye(T)
    if not definiteness(phi22, "ND"):
        raise ValueError(
            "sample-covariance phi22 is only negative semidefinite; pass delta > 0"
        )
    return NoiseModel(bound, np.zeros((bound.shape[0], T)), phi22)


def embed_subspace(e, hat: NoiseModel) -> NoiseModel:
    """Lift a model on ``W_hat`` (r x T) to ``W = E W_hat`` with ``E`` n x r."""
    e = np.atleast_2d(np.asarray(e, dtype=float))
    if e.shape[1] != hat.n:
        raise ValueError(f"E must have {hat.n} columns, got {e.shape}")
    return NoiseModel(e @ hat.phi11 @ e.T, e @ hat.phi12, hat.phi22)


def check_noise(model: NoiseModel, w, tol: Tolerance = DEFAULT_TOL) -> tuple[bool, float]:
    """Return ``(admissible, lambda_min)`` of the noise quadratic form at ``w``."""
    q = model.evaluate(w)
    margin = float(np.linalg.eigvalsh(q)[0])
    return definiteness(q, "PSD", tol), margin


def to_transposed_model(model: NoiseModel, tol: Tolerance = DEFAULT_TOL):
    """Equivalent bound ``-Phi22^{-1} - W^T Phi11^{-1} W >= 0`` on ``W^T``.

    Returns the triple ``(-Phi22^{-1}, 0, -Phi11^{-1})``.
    """
    if not definiteness(model.phi11, "PD", tol):
        raise ValueError("transposed model needs phi11 positive definite")
    if np.max(np.abs(model.phi12), initial=0.0) > 0:
        raise ValueError("transposed model needs phi12 = 0")
    q11 = as_sym(-np.linalg.inv(model.phi22))
    q22 = as_sym(-np.linalg.inv(model.phi11))
    return q11, np.zeros((model.T, model.n)), q22


def block_diagonal(models: list[NoiseModel]) -> NoiseModel:
    """Noise model for horizontally stacked experiments with a shared energy budget.

    ``Phi11`` is summed and ``Phi12``/``Phi22`` are placed block-diagonally, so
    the stacked form is the sum of the per-experiment forms.
    """
    if not models:
        raise ValueError("need at least one model")
    n = models[0].n
    if any(m.n != n for m in models):
        raise ValueError("models must share the state dimension")
    phi11 = sum(m.phi11 for m in models)
    phi12 = np.hstack([m.phi12 for m in models])
    phi22 = block_diag(*[m.phi22 for m in models])
    return NoiseModel(phi11, phi12, phi22)


def load_model(directory) -> NoiseModel:
    d = Path(directory)
    return NoiseModel(
        read_matrix_csv(d / "phi11.csv"),
        read_matrix_csv(d / "phi12.csv"),
        read_matrix_csv(d / "phi22.csv"),
    )


def save_model(model: NoiseModel, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(d / "phi11.csv", model.phi11)
    write_matrix_csv(d / "phi12.csv", model.phi12)
    write_matrix_csv(d / "phi22.csv", model.phi22)
