"""Small dense linear algebra and fixed-step ODE integration.

Matrices are plain ``numpy`` arrays.  Rank and null-space decisions all go
through one relative singular-value cutoff held in :class:`ToleranceConfig`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

__all__ = [
    "ToleranceConfig", "SubspaceBasis", "SingularMatrixError", "IntegrationError",
    "invert", "kernel", "rank", "singular_values", "rk4_path",
    "subspace_distance", "span_contains", "intersect",
]

PIVOT_TOL = 1e-12


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, t: float):
        self.t = t
        super().__init__(f"{message} at t={t:.6g}")


@dataclass(frozen=True)
class ToleranceConfig:
    rank_tol: float = 1e-8
    fd_tol: float = 1e-6
    ode_steps: int = 2000

    def __post_init__(self):
        for name in ("rank_tol", "fd_tol", "ode_steps"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")

    @classmethod
    def from_dict(cls, d: dict | None) -> "ToleranceConfig":
        d = dict(d or {})
        unknown = set(d) - {"rank_tol", "fd_tol", "ode_steps"}
        if unknown:
            raise ValueError(f"unknown tolerance keys: {sorted(unknown)}")
        if "ode_steps" in d:
            d["ode_steps"] = int(d["ode_steps"])
        return cls(**d)

    def as_dict(self) -> dict:
        return {"rank_tol": self.rank_tol, "fd_tol": self.fd_tol, "ode_steps": self.ode_steps}


DEFAULT_TOL = ToleranceConfig()


@dataclass
class SubspaceBasis:
    """Orthonormal basis (rows of ``vectors``) of a subspace of R^n."""

    ambient_dim: int
    vectors: np.ndarray
    tol: float = DEFAULT_TOL.rank_tol
    singular_values: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=float).reshape(-1, self.ambient_dim)

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    def projector(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def contains(self, v, tol: float = 1e-8) -> bool:
        v = np.asarray(v, dtype=float)
        r = v - self.projector() @ v
        return bool(np.linalg.norm(r) <= tol * max(1.0, np.linalg.norm(v)))

    def to_list(self) -> list[list[float]]:
        return self.vectors.tolist()


def invert(m) -> np.ndarray:
    """Inverse of a square matrix via pivoted LU.

    Raises :class:`SingularMatrixError` when a pivot falls below ``1e-12``
    relative to the largest entry.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("invert needs a square matrix")
    n = m.shape[0]
    scale = np.max(np.abs(m)) if m.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(m, check_finite=True)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * scale:
        raise SingularMatrixError("matrix is singular within pivot tolerance")
    return scipy.linalg.lu_solve((lu, piv), np.eye(n))


def singular_values(m) -> np.ndarray:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return np.zeros(0)
    return np.linalg.svd(m, compute_uv=False)


def kernel(m, tol: ToleranceConfig = DEFAULT_TOL, scale: float | None = None) -> SubspaceBasis:
    """Numerical null space of ``m`` (rows are constraints).

    Singular directions with ``sigma <= rank_tol * ref`` are kept, where
    ``ref`` is ``scale`` when given and otherwise the largest singular value
    (1 for the zero matrix).
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    n = m.shape[1]
    if m.shape[0] == 0:
        return SubspaceBasis(n, np.eye(n), tol.rank_tol)
    _, s, vt = np.linalg.svd(m, full_matrices=True)
    ref = scale if scale is not None else (s[0] if s.size and s[0] > 0 else 1.0)
    sig = np.zeros(n)
    sig[: s.size] = s
    keep = sig <= tol.rank_tol * ref
    return SubspaceBasis(n, vt[keep], tol.rank_tol, sig)


def rank(vectors: Sequence[Sequence[float]], tol: ToleranceConfig = DEFAULT_TOL,
         scale: float | None = None) -> int:
    """Numerical rank of a family of equal-length vectors."""
    if len(vectors) == 0:
        return 0
    s = singular_values(np.asarray(vectors, dtype=float))
    if s.size == 0:
        return 0
    ref = scale if scale is not None else s[0]
    if ref == 0:
        return 0
    return int(np.sum(s > tol.rank_tol * ref))


def subspace_distance(a: SubspaceBasis, b) -> float:
    """Spectral norm of the difference of orthogonal projectors."""
    if not isinstance(b, SubspaceBasis):
        b = span(b)
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("ambient dimensions differ")
    return float(np.linalg.norm(a.projector() - b.projector(), 2))


def span(vectors, tol: ToleranceConfig = DEFAULT_TOL) -> SubspaceBasis:
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    n = v.shape[1]
    u, s, vt = np.linalg.svd(v, full_matrices=False)
    k = int(np.sum(s > tol.rank_tol * (s[0] if s.size and s[0] > 0 else 1.0)))
    return SubspaceBasis(n, vt[:k], tol.rank_tol)


def span_contains(basis: SubspaceBasis, vectors, tol: float = 1e-8) -> bool:
    return all(basis.contains(v, tol) for v in np.atleast_2d(vectors))


def intersect(spaces: Sequence[SubspaceBasis], tol: ToleranceConfig = DEFAULT_TOL) -> SubspaceBasis:
    """Intersection of subspaces as the common null space of their complements."""
    n = spaces[0].ambient_dim
    blocks = [np.eye(n) - s.projector() for s in spaces]
    return kernel(np.vstack(blocks), tol, scale=1.0)


def rk4_path(field: Callable[[float, np.ndarray], np.ndarray], t0: float, t1: float,
             state0, ode_steps: int = DEFAULT_TOL.ode_steps) -> np.ndarray:
    """Classical RK4 with ``ceil(ode_steps * (t1 - t0))`` equal steps."""
    if not t1 > t0:
        raise ValueError("rk4_path needs t1 > t0")
    steps = max(1, math.ceil(ode_steps * (t1 - t0) - 1e-9))
    h = (t1 - t0) / steps
    s = np.array(state0, dtype=float)
    for k in range(steps):
        t = t0 + k * h
        k1 = field(t, s)
        k2 = field(t + h / 2, s + h / 2 * k1)
        k3 = field(t + h / 2, s + h / 2 * k2)
        k4 = field(t + h, s + h * k3)
        s = s + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(s)):
            raise IntegrationError("non-finite state", t + h)
    return s
