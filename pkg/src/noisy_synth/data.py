"""Trajectories of ``x(t+1) = A x(t) + B u(t) + w(t)`` and the derived data matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

__all__ = [
    "SystemPair",
    "DataSet",
    "simulate",
    "partition",
    "stack",
    "read_trajectory_csv",
    "write_trajectory_csv",
]


def _finite2d(a, name):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True)
class SystemPair:
    a: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        a = _finite2d(self.a, "A")
        b = _finite2d(self.b, "B")
        if a.shape[0] != a.shape[1]:
            raise ValueError(f"A must be square, got {a.shape}")
        if b.shape[0] != a.shape[0]:
            raise ValueError(f"B must have {a.shape[0]} rows, got {b.shape}")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    def closed_loop(self, k) -> np.ndarray:
        return self.a + self.b @ np.atleast_2d(k)


@dataclass(frozen=True)
class DataSet:
    """States ``x(0..T)`` (n x T+1), inputs ``u(0..T-1)`` (m x T), optional true noise."""

    x: np.ndarray
    u: np.ndarray
    w_true: Optional[np.ndarray] = None

    def __post_init__(self):
        x = _finite2d(self.x, "x")
        u = _finite2d(self.u, "u")
        T = x.shape[1] - 1
        if T < 1:
            raise ValueError("need at least two state samples")
        if u.shape[1] != T:
            raise ValueError(f"u must have {T} columns, got {u.shape[1]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "u", u)
        if self.w_true is not None:
            w = _finite2d(self.w_true, "w_true")
            if w.shape != (x.shape[0], T):
                raise ValueError(f"w_true must be {x.shape[0]}x{T}, got {w.shape}")
            object.__setattr__(self, "w_true", w)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.u.shape[0]

    @property
    def T(self) -> int:
        return self.u.shape[1]

    def prefix(self, T: int) -> "DataSet":
        """The first ``T`` transitions."""
        if not 1 <= T <= self.T:
            raise ValueError(f"prefix length must lie in [1, {self.T}]")
        w = None if self.w_true is None else self.w_true[:, :T]
        return DataSet(self.x[:, : T + 1], self.u[:, :T], w)


def simulate(sys: SystemPair, x0, u, w) -> DataSet:
    """Run the recursion exactly and keep ``w`` as ground truth."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    w = np.atleast_2d(np.asarray(w, dtype=float))
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    T = u.shape[1]
    if u.shape[0] != sys.m or w.shape != (sys.n, T) or x0.shape[0] != sys.n:
        raise ValueError("dimensions of x0, u, w do not match the system")
    x = np.empty((sys.n, T + 1))
    x[:, 0] = x0
    for t in range(T):
        x[:, t + 1] = sys.a @ x[:, t] + sys.b @ u[:, t] + w[:, t]
    return DataSet(x, u, w)


def partition(d: DataSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(X_plus, X_minus, U_minus)``."""
    return d.x[:, 1:].copy(), d.x[:, :-1].copy(), d.u.copy()


def stack(ds: list[DataSet]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Concatenate the partitions of several experiments column-wise."""
    if not ds:
        raise ValueError("need at least one data set")
    n, m = ds[0].n, ds[0].m
    if any(d.n != n or d.m != m for d in ds):
        raise ValueError("data sets must share state and input dimensions")
    parts = [partition(d) for d in ds]
    return tuple(np.hstack([p[i] for p in parts]) for i in range(3))


def read_trajectory_csv(path) -> DataSet:
    """Read ``t,x1..xn,u1..um``; the last row may leave the input cells empty."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 3:
        raise ValueError(f"{path}: need a header and at least two samples")
    header = [h.strip() for h in rows[0]]
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    if not xcols or not ucols or header[0] != "t":
        raise ValueError(f"{path}: header must be t,x1..xn,u1..um")
    body = rows[1:]
    x = np.array([[float(r[i]) for i in xcols] for r in body]).T
    inputs = []
    for j, r in enumerate(body):
        cells = [r[i].strip() if i < len(r) else "" for i in ucols]
        if all(c == "" for c in cells):
            if j != len(body) - 1:
                raise ValueError(f"{path}: only the last row may omit inputs")
            continue
        if any(c == "" for c in cells):
            raise ValueError(f"{path}: partially missing inputs in row {j + 1}")
        inputs.append([float(c) for c in cells])
    u = np.array(inputs).T
    if u.shape[1] == x.shape[1]:
        # input recorded at the final state is unused
        u = u[:, :-1]
    return DataSet(x, u)


def write_trajectory_csv(path, d: DataSet) -> None:
    header = ["t"] + [f"x{i + 1}" for i in range(d.n)] + [f"u{i + 1}" for i in range(d.m)]
    with open(Path(path), "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for t in range(d.T + 1):
            us = [repr(float(v)) for v in d.u[:, t]] if t < d.T else [""] * d.m
            wr.writerow([t] + [repr(float(v)) for v in d.x[:, t]] + us)
