"""Nullity spaces, parallel transport and parallel one-forms.

Covectors are transported by ``db_i/dt = b_r G^r_ij(c, w) dc^j/dt``.  For a
Finsler spray the Berwald coefficients depend on the reference direction
``w``; the ``velocity`` policy uses ``w = dc/dt`` and the ``frozen`` policy
carries ``w`` along by nonlinear parallel translation
``dw^i/dt = -N^i_j(c, w) dc^j/dt``.  ``auto`` picks ``velocity`` unless a
path direction is an invalid tangent vector (``frozen`` then).

All transports run batched: every loop (or every straight reconstruction
path) advances through one RK4 integration with the sample axis first.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, Tape, parse_expr
from .geometry import (
    MetricSpec, TangentSample, geometry, horizontal_gradient_exprs, valid_mask,
    _h_curvature_batch,
)
from .numerics import DEFAULT_TOL, SubspaceBasis, ToleranceConfig, intersect, kernel, rk4_path

__all__ = [
    "CovectorField", "LoopSet", "ParallelVerdict", "ScanResult", "TransportError",
    "nullity_space", "kernel_space", "algebraic_candidate_space",
    "transport_covector", "transport_vector", "loop_transport_maps",
    "parallel_form_basis", "verify_parallel_form", "sufficient_condition_scan",
    "induced_invariant_check", "construct_berwald", "default_reference",
]

POLICIES = ("auto", "velocity", "frozen")


class TransportError(ValueError):
    """A path leaves the domain or reaches an invalid tangent direction."""


def _as_xy(y_samples, n: int) -> np.ndarray:
    Y = []
    for s in y_samples:
        Y.append(s.y if isinstance(s, TangentSample) else np.asarray(s, dtype=float))
    Y = np.array(Y, dtype=float).reshape(-1, n)
    return Y


# ------------------------------------------------------------- nullity / kernel

def _riemann_blocks(spec: MetricSpec, x, y_samples) -> np.ndarray:
    if spec.kind != "riemannian":
        raise ValueError("nullity and kernel spaces are defined for riemannian specs")
    n = spec.dim
    Y = _as_xy(y_samples, n)
    if Y.shape[0] == 0:
        Y = np.eye(n)
    X = np.tile(np.asarray(x, dtype=float), (Y.shape[0], 1))
    ok = valid_mask(spec, X, Y)
    if not np.all(ok):
        raise TransportError(f"invalid sample at x={list(x)}")
    geo = geometry(spec)
    Rh = _h_curvature_batch(geo, X, Y)  # (S, h, i, j, k)
    # size of the terms that cancel in a flat metric
    scale = max(float(np.max(np.abs(geo.values("dB", X, Y)))),
                float(np.max(np.abs(geo.values("B", X, Y)))) ** 2, 1e-300)
    return Rh, scale


def _stacked_kernel(rows_per_sample: list[np.ndarray], scale: float, tol: ToleranceConfig,
                    check: bool) -> SubspaceBasis:
    if check:
        dims = {kernel(r, tol, scale).dim for r in rows_per_sample}
        if len(dims) > 1:
            raise ArithmeticError(f"kernel dimension varies across y samples: {sorted(dims)}")
    return kernel(np.vstack(rows_per_sample), tol, scale)


def nullity_space(spec: MetricSpec, x, y_samples=(), tol: ToleranceConfig = DEFAULT_TOL,
                  check: bool = True) -> SubspaceBasis:
    """``{X : X^m R^h_ijm = 0}`` at ``x`` (last slot of the curvature)."""
    Rh, scale = _riemann_blocks(spec, x, y_samples)
    n = spec.dim
    rows = [Rh[s].reshape(n * n * n, n) for s in range(Rh.shape[0])]
    return _stacked_kernel(rows, scale, tol, check)


def kernel_space(spec: MetricSpec, x, y_samples=(), tol: ToleranceConfig = DEFAULT_TOL,
                 check: bool = True) -> SubspaceBasis:
    """``{X : X^m R^h_mjk = 0}`` at ``x`` (first slot of the curvature)."""
    Rh, scale = _riemann_blocks(spec, x, y_samples)
    n = spec.dim
    rows = [np.moveaxis(Rh[s], 1, 3).reshape(n * n * n, n) for s in range(Rh.shape[0])]
    return _stacked_kernel(rows, scale, tol, check)


def _algebraic_rows(spec: MetricSpec, x, Y: np.ndarray) -> np.ndarray:
    """Constraint rows on ``b`` at each sample, each block divided by its natural scale."""
    geo = geometry(spec)
    n = spec.dim
    X = np.tile(np.asarray(x, dtype=float), (Y.shape[0], 1))
    if not np.all(valid_mask(spec, X, Y)):
        raise TransportError(f"invalid y sample at x={list(x)}")
    R = geo.values("R", X, Y)          # R[s, h, i, j]
    terms = geo.values("Rterm", X, Y)  # the two halves before cancellation
    blocks = []
    for s in range(Y.shape[0]):
        scale = max(float(np.max(np.abs(terms[s]))), 1e-300)
        blocks.append(R[s].reshape(n, n * n).T / scale)
    if spec.kind == "finsler":
        B = geo.values("B", X, Y)
        B3 = geo.values("B3", X, Y)
        for s in range(Y.shape[0]):
            ynorm = np.linalg.norm(Y[s])
            scale = max(float(np.max(np.abs(B[s]))) / ynorm, float(np.max(np.abs(B3[s]))),
                        1e-300)
            blocks.append(B3[s].reshape(n, n ** 3).T / scale)
    return np.vstack(blocks)


def algebraic_candidate_space(spec: MetricSpec, x, y_samples,
                              tol: ToleranceConfig = DEFAULT_TOL) -> SubspaceBasis:
    """Covectors with ``b_h R^h_ij = 0`` (and ``b_h G^h_ijk = 0`` for Finsler) at all samples."""
    n = spec.dim
    Y = _as_xy(y_samples, n)
    if Y.shape[0] < 2 * n:
        raise ValueError(f"need at least {2 * n} y samples, got {Y.shape[0]}")
    return kernel(_algebraic_rows(spec, x, Y), tol, scale=1.0)


# ------------------------------------------------------------- transport core

def default_reference(spec: MetricSpec, x) -> np.ndarray:
    """A deterministic valid tangent direction at ``x``."""
    n = spec.dim
    x = np.asarray(x, dtype=float)
    cands = [np.ones(n)] + [np.eye(n)[i] for i in range(n)]
    cands += [np.ones(n) + np.eye(n)[i] for i in range(n)]
    for y in cands:
        if valid_mask(spec, x, y)[0]:
            return y
    raise TransportError(f"no valid reference direction found at x={x.tolist()}")


def _domain_ok(spec: MetricSpec, X: np.ndarray) -> np.ndarray:
    X = np.atleast_2d(X)
    if not spec.domain:
        return np.all(np.isfinite(X), axis=1)
    d = geometry(spec).values("domain", X, np.ones_like(X))
    return np.all(np.nan_to_num(d, nan=-1.0) > 0, axis=1)


def _path_points(V: np.ndarray, per_edge: int = 8) -> np.ndarray:
    t = np.linspace(0.0, 1.0, per_edge + 1)
    seg = V[:, :-1, None, :] + t[None, None, :, None] * (V[:, 1:] - V[:, :-1])[:, :, None, :]
    return seg.reshape(-1, V.shape[-1])


def _velocity_valid(spec: MetricSpec, V: np.ndarray) -> bool:
    if spec.kind == "riemannian":
        return True
    D = V[:, 1:] - V[:, :-1]
    moving = np.linalg.norm(D, axis=-1) > 0
    for frac in (0.0, 0.5, 1.0):
        C = V[:, :-1] + frac * D
        if not np.all(valid_mask(spec, C[moving], D[moving])):
            return False
    return True


def _resolve_policy(spec: MetricSpec, V: np.ndarray, policy: str) -> str:
    if policy not in POLICIES:
        raise ValueError(f"unknown reference policy {policy!r}")
    if spec.kind == "riemannian":
        return "velocity"
    if policy == "auto":
        return "velocity" if _velocity_valid(spec, V) else "frozen"
    if policy == "velocity" and not _velocity_valid(spec, V):
        raise TransportError("path velocity is not a valid tangent direction for this metric")
    return policy


def _batch_transport(spec: MetricSpec, V: np.ndarray, policy: str, W0: np.ndarray | None,
                     ode_steps: int) -> tuple[np.ndarray, np.ndarray | None]:
    """Transport matrices for a batch of polylines ``V`` of shape (L, K+1, n).

    Returns ``M`` of shape (L, n, n) whose row ``r`` is the transport of the
    ``r``-th coordinate covector, so ``b0 -> b0 @ M``; plus the final
    reference vectors for the frozen policy.
    """
    L, K1, n = V.shape
    K = K1 - 1
    if not np.all(_domain_ok(spec, _path_points(V))):
        raise TransportError("path leaves the domain")
    frozen = policy == "frozen"
    # Only the N tape is evaluated.  Velocity policy: B(c, dc) dc = N(c, dc) by
    # homogeneity.  Frozen policy: B(c, w) dc is the complex-step derivative of
    # N(c, w + i*eps*dc), exact to rounding without a B tape.
    tape = geometry(spec).tape("N")
    eps = 1e-30
    if frozen:
        if W0 is None:
            raise ValueError("frozen policy needs a reference vector")
        W0 = np.broadcast_to(np.asarray(W0, dtype=float), (L, n)).copy()
    M = np.broadcast_to(np.eye(n), (L, n, n)).copy()

    def N_at(C, Wr, rows):
        out = np.zeros((L, n, n), dtype=Wr.dtype)
        if np.any(rows):
            vals = tape.fast(C[rows], Wr[rows])
            out[rows] = np.moveaxis(vals.reshape(n, n, -1), -1, 0)
        return out

    for k in range(K):
        D = V[:, k + 1] - V[:, k]
        vel = K * D
        moving = np.linalg.norm(D, axis=1) > 0
        t0, t1 = k / K, (k + 1) / K

        def rhs(t, state, k=k, D=D, vel=vel, moving=moving):
            C = V[:, k] + (t * K - k) * D
            Ms = state[:, : n * n].reshape(L, n, n)
            if frozen:
                Wr = state[:, n * n:]
                Z = N_at(C, Wr + 1j * eps * vel, np.ones(L, dtype=bool))
                A = Z.imag / eps
                dW = -np.einsum("lij,lj->li", Z.real, vel)
            else:
                A = N_at(C, vel, moving)
                dW = np.zeros((L, 0))
            dM = Ms @ A
            return np.concatenate([dM.reshape(L, n * n), dW], axis=1)

        state = np.concatenate([M.reshape(L, n * n), W0 if frozen else np.zeros((L, 0))], axis=1)
        state = rk4_path(rhs, t0, t1, state, ode_steps)
        M = state[:, : n * n].reshape(L, n, n)
        if frozen:
            W0 = state[:, n * n:]
            if not np.all(valid_mask(spec, V[:, k + 1], W0)):
                raise TransportError("reference vector reached an invalid direction")
    return M, (W0 if frozen else None)


def _as_polyline(path, n: int) -> np.ndarray:
    V = np.asarray(path, dtype=float)
    if V.ndim != 2 or V.shape[1] != n or V.shape[0] < 2:
        raise ValueError(f"path must be a polyline of shape (k+1, {n}) with k >= 1")
    return V


def transport_covector(spec: MetricSpec, path, b0, reference_policy: str = "auto",
                       reference=None, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Covector ``b0`` at ``path[0]`` transported along the polyline ``path``."""
    V = _as_polyline(path, spec.dim)[None]
    policy = _resolve_policy(spec, V, reference_policy)
    if policy == "frozen" and reference is None:
        reference = default_reference(spec, V[0, 0])
    M, _ = _batch_transport(spec, V, policy, reference, tol.ode_steps)
    return np.asarray(b0, dtype=float) @ M[0]


def transport_vector(spec: MetricSpec, path, v0, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
    """Nonlinear parallel translate of the tangent vector ``v0`` along ``path``."""
    V = _as_polyline(path, spec.dim)
    n = spec.dim
    v = np.asarray(v0, dtype=float)
    if not np.any(v):
        raise ValueError("v0 must be nonzero")
    if not np.all(_domain_ok(spec, _path_points(V[None]))):
        raise TransportError("path leaves the domain")
    tape = geometry(spec).tape("N")
    K = V.shape[0] - 1
    for k in range(K):
        D = V[k + 1] - V[k]
        if not np.any(D):
            continue

        def rhs(t, y, k=k, D=D):
            c = V[k] + (t * K - k) * D
            N = tape.fast(c[None], y[None])[:, 0].reshape(n, n)
            return -N @ (K * D)

        v = rk4_path(rhs, k / K, (k + 1) / K, v, tol.ode_steps)
        if not valid_mask(spec, V[k + 1], v)[0]:
            raise TransportError("transported vector reached an invalid direction")
    return v


# ------------------------------------------------------------- loops

@dataclass
class LoopSet:
    """Closed polylines based at ``base``; ``loops`` has shape (L, K+1, n)."""

    base: np.ndarray
    loops: np.ndarray
    labels: list[str]
    ode_steps: int = DEFAULT_TOL.ode_steps

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.loops = np.asarray(self.loops, dtype=float)
        if self.loops.ndim != 3 or self.loops.shape[0] == 0:
            raise ValueError("loop set must hold at least one loop")
        if not (np.allclose(self.loops[:, 0], self.base) and np.allclose(self.loops[:, -1], self.base)):
            raise ValueError("every loop must start and end at the base point")

    def __len__(self) -> int:
        return self.loops.shape[0]

    def reversed(self) -> "LoopSet":
        return LoopSet(self.base, self.loops[:, ::-1], [f"rev({l})" for l in self.labels],
                       self.ode_steps)

    @classmethod
    def rectangles(cls, spec: MetricSpec, base, scales: Sequence[float] = (0.1, 0.3),
                   ode_steps: int = DEFAULT_TOL.ode_steps) -> "LoopSet":
        """Coordinate rectangles in every coordinate 2-plane at each side length.

        For each plane the first sign pattern ``(+,+), (+,-), (-,+), (-,-)``
        keeping the rectangle inside the domain is used.
        """
        base = np.asarray(base, dtype=float)
        n = spec.dim
        if not _domain_ok(spec, base)[0]:
            raise TransportError(f"base point {base.tolist()} violates the domain")
        loops, labels = [], []
        E = np.eye(n)
        for s in scales:
            for p, q in itertools.combinations(range(n), 2):
                for sp, sq in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                    u, v = sp * s * E[p], sq * s * E[q]
                    V = np.array([base, base + u, base + u + v, base + v, base])
                    if np.all(_domain_ok(spec, _path_points(V[None]))):
                        loops.append(V)
                        labels.append(f"rect(x{p + 1}{'+-'[sp < 0]},x{q + 1}{'+-'[sq < 0]},{s:g})")
                        break
                else:
                    raise TransportError(f"no rectangle of side {s} in plane ({p + 1},{q + 1}) fits "
                                         "inside the domain")
        return cls(base, np.array(loops), labels, ode_steps)


def loop_transport_maps(spec: MetricSpec, loops: LoopSet, reference_policy: str = "auto",
                        reference=None) -> tuple[np.ndarray, str]:
    """Transport matrices of all loops (``b0 -> b0 @ T``) and the policy used."""
    policy = _resolve_policy(spec, loops.loops, reference_policy)
    if policy == "frozen" and reference is None:
        reference = default_reference(spec, loops.base)
    T, _ = _batch_transport(spec, loops.loops, policy, reference, loops.ode_steps)
    return T, policy


# ------------------------------------------------------------- parallel forms

@dataclass
class CovectorField:
    """A covector field determined by its value ``b0`` at ``base``.

    Values elsewhere are reconstructed by transport along straight paths
    from ``base``.  ``exprs`` optionally holds closed-form components
    ``b_i(x)``.
    """

    base: np.ndarray
    b0: np.ndarray
    exprs: tuple[Expr, ...] | None = None
    reference_policy: str = "auto"
    reference: np.ndarray | None = None

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.b0 = np.asarray(self.b0, dtype=float)

    def reconstruct(self, spec: MetricSpec, X, tol: ToleranceConfig = DEFAULT_TOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.tile(self.b0, (X.shape[0], 1))
        moving = np.linalg.norm(X - self.base, axis=1) > 0
        if not np.any(moving):
            return out
        V = np.stack([np.tile(self.base, (int(moving.sum()), 1)), X[moving]], axis=1)
        policy = _resolve_policy(spec, V, self.reference_policy)
        ref = self.reference
        if policy == "frozen" and ref is None:
            ref = default_reference(spec, self.base)
        M, _ = _batch_transport(spec, V, policy, ref, tol.ode_steps)
        out[moving] = np.einsum("r,lri->li", self.b0, M)
        return out

    def expr_text(self) -> list[str] | None:
        return None if self.exprs is None else [ex.to_text(e) for e in self.exprs]


@dataclass
class ParallelVerdict:
    base: np.ndarray
    algebraic: SubspaceBasis
    holonomy: SubspaceBasis
    final: SubspaceBasis
    policy: str
    residuals: dict = field(default_factory=dict)

    @property
    def algebraic_dim(self) -> int:
        return self.algebraic.dim

    @property
    def holonomy_dim(self) -> int:
        return self.holonomy.dim

    @property
    def final_dim(self) -> int:
        return self.final.dim

    def forms(self) -> list[CovectorField]:
        return [CovectorField(self.base, b, reference_policy=self.policy) for b in self.final.vectors]

    def as_dict(self) -> dict:
        return {"algebraic_dim": self.algebraic_dim, "holonomy_dim": self.holonomy_dim,
                "final_dim": self.final_dim, "basis": _canonical(self.final).tolist(),
                "base_point": self.base.tolist(), "policy": self.policy,
                "residuals": self.residuals}


def _canonical(basis: SubspaceBasis) -> np.ndarray:
    """Reduced row echelon form of a basis: a representation independent of the SVD."""
    V = basis.vectors.copy()
    if V.shape[0] == 0:
        return V
    rows, cols = V.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        p = r + int(np.argmax(np.abs(V[r:, c])))
        if abs(V[p, c]) <= 1e-10:
            continue
        V[[r, p]] = V[[p, r]]
        V[r] /= V[r, c]
        for i in range(rows):
            if i != r:
                V[i] -= V[i, c] * V[r]
        r += 1
    V[np.abs(V) < 1e-14] = 0.0
    return V


def parallel_form_basis(spec: MetricSpec, loops: LoopSet, y_samples,
                        tol: ToleranceConfig = DEFAULT_TOL,
                        reference_policy: str = "auto") -> ParallelVerdict:
    """Covectors at the base point passing both the algebraic and the loop-holonomy tests."""
    n = spec.dim
    Y = _as_xy(y_samples, n)
    alg = algebraic_candidate_space(spec, loops.base, Y, tol)
    ref = Y[0] if valid_mask(spec, loops.base, Y[0])[0] else None
    T, policy = loop_transport_maps(spec, loops, reference_policy, ref)
    I = np.eye(n)
    hol = kernel(np.vstack([(t - I).T for t in T]), tol, scale=1.0)
    final = intersect([alg, hol], tol)
    res = {"loops": len(loops)}
    if final.dim:
        res["holonomy"] = float(max(np.max(np.abs(final.vectors @ (t - I))) for t in T))
        res["algebraic"] = float(np.max(np.abs(
            _algebraic_rows(spec, loops.base, Y) @ final.vectors.T)))
    if spec.kind == "finsler" and policy == "velocity" and final.dim:
        Tf, _ = loop_transport_maps(spec, loops, "frozen", ref)
        res["policy_gap"] = float(max(np.max(np.abs(final.vectors @ (a - b)))
                                      for a, b in zip(T, Tf)))
    return ParallelVerdict(loops.base, alg, hol, final, policy, res)


def _fd_weights() -> tuple[np.ndarray, np.ndarray]:
    return np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0


def verify_parallel_form(spec: MetricSpec, form: CovectorField, samples: Sequence[TangentSample],
                         tol: ToleranceConfig = DEFAULT_TOL, step: float = 1e-3) -> dict:
    """Residuals of ``d_S beta = 0`` and ``d_h beta = 0`` for a transported form.

    ``b_i(x)`` comes from transport out of the base point, its derivatives
    from fourth-order central differences of that reconstruction.
    """
    n = spec.dim
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    S = X.shape[0]
    offs, w = _fd_weights()
    pts = [X]
    for i in range(n):
        for o in offs:
            pts.append(X + o * step * np.eye(n)[i])
    P = np.vstack(pts)
    b_all = form.reconstruct(spec, P, tol).reshape(1 + 4 * n, S, n)
    b = b_all[0]
    db = np.zeros((S, n, n))  # db[s, i, j] = d_i b_j
    for i in range(n):
        blk = b_all[1 + 4 * i: 5 + 4 * i]
        db[:, i, :] = np.einsum("o,osj->sj", w, blk) / step
    N = geometry(spec).values("N", X, Y)  # N[s, r, i]
    dh = np.einsum("sij,sj->si", db, Y) - np.einsum("sri,sr->si", N, b)
    dS = np.einsum("si,si->s", dh, Y)
    scale = np.maximum(1.0, np.abs(b).max(axis=1) * np.linalg.norm(Y, axis=1))
    worst_h = float(np.max(np.abs(dh)))
    worst_s = float(np.max(np.abs(dS)))
    worst = max(worst_h, worst_s)
    return {"d_h": worst_h, "d_S": worst_s, "max_residual": worst,
            "relative": float(np.max(np.abs(dh).max(axis=1) / scale)),
            "pass": worst <= tol.fd_tol}


# ------------------------------------------------------------- scans and checks

@dataclass
class ScanResult:
    indices: list[int]
    zero_spray: list[int]
    residuals: dict[int, float]

    def as_dict(self) -> dict:
        return {"indices": self.indices, "zero_spray": self.zero_spray,
                "residuals": {str(k): v for k, v in self.residuals.items()}}


def sufficient_condition_scan(spec: MetricSpec, samples: Sequence[TangentSample],
                              tol: ToleranceConfig = DEFAULT_TOL) -> ScanResult:
    """1-based indices ``mu`` whose curvature rows vanish (and, for Finsler, Berwald rows)."""
    if len(samples) < 20:
        raise ValueError("sufficient_condition_scan needs at least 20 samples")
    geo = geometry(spec)
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    n = spec.dim
    terms = geo.values("Rterm", X, Y)
    r_scale = max(1.0, float(np.max(np.abs(terms))))
    if spec.kind == "riemannian":
        curv = _h_curvature_batch(geo, X, Y)
        dB = geo.values("dB", X, Y)
        c_scale = max(1.0, float(np.max(np.abs(dB))))
    else:
        curv = geo.values("R", X, Y)
        c_scale = r_scale
        B3 = geo.values("B3", X, Y)
        b_scale = max(1.0, float(np.max(np.abs(B3))))
    G = geo.values("G", X, Y)
    g_scale = max(1.0, float(np.max(np.abs(G))))
    indices, zero, res = [], [], {}
    for mu in range(n):
        r = float(np.max(np.abs(curv[:, mu]))) / c_scale
        if spec.kind == "finsler":
            r = max(r, float(np.max(np.abs(B3[:, mu]))) / b_scale)
        res[mu + 1] = r
        if r <= tol.rank_tol:
            indices.append(mu + 1)
        if float(np.max(np.abs(G[:, mu]))) / g_scale <= tol.rank_tol:
            zero.append(mu + 1)
    return ScanResult(indices, zero, res)


def _tensor_exprs(T, n: int) -> tuple[list, int]:
    """Flatten a nested list tensor into ``{index tuple: Expr}`` and report its order."""
    out = {}

    def walk(obj, idx):
        if isinstance(obj, (list, tuple)):
            if len(obj) != n:
                raise ValueError(f"tensor slots must have length {n}")
            for i, o in enumerate(obj):
                walk(o, idx + (i,))
        else:
            out[idx] = obj if isinstance(obj, Expr) else parse_expr(str(obj), n)

    walk(T, ())
    orders = {len(k) for k in out}
    if len(orders) != 1:
        raise ValueError("ragged tensor")
    return out, orders.pop()


def induced_invariant_check(spec: MetricSpec, T, samples: Sequence[TangentSample],
                            tol: ToleranceConfig = DEFAULT_TOL) -> float:
    """``max |d_h Q|`` for ``Q = T_{i..k} y^i..y^k`` over the samples."""
    if spec.kind != "riemannian":
        raise ValueError("induced_invariant_check expects a riemannian spec")
    n = spec.dim
    comps, p = _tensor_exprs(T, n)
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    keys = sorted(comps)
    vals = Tape([comps[k] for k in keys]).fast(X, Y)
    for a, k in enumerate(keys):
        for perm in set(itertools.permutations(k)):
            b = keys.index(perm)
            if not np.allclose(vals[a], vals[b], rtol=1e-12, atol=1e-12):
                raise ValueError(f"tensor is not symmetric in slots {k} vs {perm}")
    terms = []
    for k in keys:
        if comps[k].is_zero:
            continue
        terms.append(ex.mul(comps[k], *[ex.var("y", i + 1) for i in k]))
    Q = ex.add(*terms)
    grad = horizontal_gradient_exprs(spec, Q)
    return float(np.max(np.abs(Tape(grad).fast(X, Y))))


def construct_berwald(spec: MetricSpec, form: CovectorField, samples: Sequence[TangentSample],
                      tol: ToleranceConfig = DEFAULT_TOL, name: str | None = None
                      ) -> tuple[MetricSpec, float]:
    """Randers metric ``F = alpha + beta`` and ``max |G_F - G_alpha|`` over the samples.

    ``beta`` needs closed-form components: ``form.exprs`` when present,
    otherwise the constant ``b0`` if transport shows the form is constant.
    """
    if spec.kind != "riemannian":
        raise ValueError("construct_berwald expects a riemannian spec")
    n = spec.dim
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    if form.exprs is not None:
        b_exprs = tuple(form.exprs)
    elif not np.any(form.b0):
        b_exprs = tuple(ex.ZERO for _ in range(n))
    else:
        b = form.reconstruct(spec, X, tol)
        if np.max(np.abs(b - form.b0)) > 1e-8 * max(1.0, np.max(np.abs(form.b0))):
            raise ValueError("beta is not constant in this chart; pass closed-form components")
        b_exprs = tuple(ex.const(float(v)) for v in form.b0)
    alpha = geometry(spec).norm
    beta = ex.add(*[ex.mul(b, ex.var("y", i + 1)) for i, b in enumerate(b_exprs)])
    F = ex.add(alpha, beta)
    Fv = Tape([F]).fast(X, Y)[0]
    if not np.all(Fv > 0):
        bad = int(np.argmin(Fv))
        raise ValueError(f"alpha + beta is not positive at sample {bad}: {Fv[bad]:.3g}")
    randers = MetricSpec.finsler(name or f"{spec.name}+beta", n, F, spec.domain)
    diff = geometry(randers).values("G", X, Y) - geometry(spec).values("G", X, Y)
    return randers, float(np.max(np.abs(diff)))
