"""Sprays, connections and curvatures of Riemannian and Finsler metrics.

Every object is first produced as expressions (exact AST derivatives of the
energy ``F**2``) and then evaluated, vectorised over samples, through cached
tapes.  Index conventions for the returned arrays::

    N[i, j]        = N^i_j  = dG^i/dy^j
    B[h, i, j]     = G^h_ij = dN^h_i/dy^j          (Berwald connection)
    B3[h, i, j, k] = G^h_ijk                        (Berwald curvature)
    R[i, j, k]     = R^i_jk                         (curvature of the spray)
    Rh[h, i, j, k] = R^h_ijk                        (h-curvature, y^i Rh[h,i,j,k] = R[h,j,k])
"""

from __future__ import annotations

import threading
import weakref
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, Tape, differentiate, parse_expr
from .numerics import DEFAULT_TOL, SingularMatrixError, ToleranceConfig, invert

__all__ = [
    "MetricSpec", "TangentSample", "GeometryJet", "ConnectionExpressions",
    "InvalidSampleError", "DimensionTooLargeError", "SYMBOLIC_DIM_CAP",
    "geometry", "freeze", "energy", "norm_expr", "validate", "valid_mask",
    "fundamental_tensor", "spray_coefficients", "connection_expressions",
    "spray_curvature", "h_curvature", "geometry_jet", "evaluate_jets",
    "is_berwald", "horizontal_scalar_derivative", "check_homogeneity",
]

SYMBOLIC_DIM_CAP = 4


class InvalidSampleError(ValueError):
    pass


class DimensionTooLargeError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MetricSpec:
    """A Riemannian metric ``a_ij(x)`` or a Finsler norm ``F(x, y)`` on a chart.

    ``domain`` lists expressions in ``x`` that must be strictly positive.
    Specs compare and hash by identity; derived data is cached per instance.
    """

    name: str
    dim: int
    kind: str
    metric: tuple[tuple[Expr, ...], ...] | None = None
    F: Expr | None = None
    domain: tuple[Expr, ...] = ()
    source: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be at least 2")
        ybits = sum(1 << (2 * i + 1) for i in range(64))
        if self.kind == "riemannian":
            if self.metric is None or len(self.metric) != self.dim or any(
                    len(row) != self.dim for row in self.metric):
                raise ValueError(f"riemannian metric must be a {self.dim}x{self.dim} matrix")
            for i in range(self.dim):
                for j in range(self.dim):
                    a = self.metric[i][j]
                    if a.vmask & ybits:
                        raise ValueError(f"metric entry ({i + 1},{j + 1}) depends on y")
                    if ex.simplify_basic(a) is not ex.simplify_basic(self.metric[j][i]):
                        raise ValueError(f"metric is not symmetric at ({i + 1},{j + 1})")
        elif self.kind == "finsler":
            if self.F is None:
                raise ValueError("finsler spec needs F")
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        for d in self.domain:
            if d.vmask & ybits:
                raise ValueError("domain constraints must depend on x only")

    @classmethod
    def riemannian(cls, name: str, matrix: Sequence[Sequence[str | Expr]],
                   domain: Sequence[str | Expr] = ()) -> "MetricSpec":
        n = len(matrix)
        rows = tuple(tuple(_as_expr(a, n) for a in row) for row in matrix)
        src = {"name": name, "dim": n, "kind": "riemannian",
               "metric": [[ex.to_text(a) for a in row] for row in rows],
               "domain": [ex.to_text(_as_expr(d, n)) for d in domain]}
        return cls(name, n, "riemannian", metric=rows,
                   domain=tuple(_as_expr(d, n) for d in domain), source=src)

    @classmethod
    def finsler(cls, name: str, dim: int, F: str | Expr,
                domain: Sequence[str | Expr] = ()) -> "MetricSpec":
        Fe = _as_expr(F, dim)
        src = {"name": name, "dim": dim, "kind": "finsler", "F": ex.to_text(Fe),
               "domain": [ex.to_text(_as_expr(d, dim)) for d in domain]}
        return cls(name, dim, "finsler", F=Fe,
                   domain=tuple(_as_expr(d, dim) for d in domain), source=src)

    def with_name(self, name: str) -> "MetricSpec":
        src = dict(self.source, name=name)
        return MetricSpec(name, self.dim, self.kind, self.metric, self.F, self.domain, src)


def _as_expr(v, dim: int) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, Fraction)):
        return ex.const(v)
    return parse_expr(v, dim)


@dataclass
class TangentSample:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)


@dataclass
class GeometryJet:
    g: np.ndarray
    ginv: np.ndarray
    G: np.ndarray
    N: np.ndarray
    B: np.ndarray
    B3: np.ndarray
    R: np.ndarray
    Rh: np.ndarray


@dataclass(frozen=True)
class ConnectionExpressions:
    G: tuple[Expr, ...]
    N: tuple[tuple[Expr, ...], ...]
    B: tuple[tuple[tuple[Expr, ...], ...], ...]
    B3: tuple
    R: tuple


def _xv(i: int) -> Expr:
    return ex.var("x", i + 1)


def _yv(i: int) -> Expr:
    return ex.var("y", i + 1)


def _dx(e: Expr, i: int) -> Expr:
    return differentiate(e, "x", i + 1)


def _dy(e: Expr, i: int) -> Expr:
    return differentiate(e, "y", i + 1)


def symbolic_det_adj(m: list[list[Expr]]) -> tuple[Expr, list[list[Expr]]]:
    """Determinant and adjugate by memoised Laplace expansion (zero entries skipped)."""
    n = len(m)
    memo: dict[tuple[int, tuple[int, ...], tuple[int, ...]], Expr] = {}

    def minor(rows: tuple[int, ...], cols: tuple[int, ...]) -> Expr:
        if not rows:
            return ex.ONE
        key = (0, rows, cols)
        if key in memo:
            return memo[key]
        r, rest = rows[0], rows[1:]
        terms = []
        for pos, c in enumerate(cols):
            a = m[r][c]
            if a.is_zero:
                continue
            sub = minor(rest, cols[:pos] + cols[pos + 1:])
            if sub.is_zero:
                continue
            t = ex.mul(a, sub)
            terms.append(ex.neg(t) if pos % 2 else t)
        memo[key] = val = ex.add(*terms)
        return val

    allr = tuple(range(n))
    det = minor(allr, allr)
    adj = [[ex.ZERO] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            # adj[i][j] = (-1)^(i+j) * minor with row j and column i removed
            rows = tuple(r for r in allr if r != j)
            cols = tuple(c for c in allr if c != i)
            mn = minor(rows, cols)
            adj[i][j] = ex.neg(mn) if (i + j) % 2 else mn
    return det, adj


class Geometry:
    """Expression factory and evaluator for one :class:`MetricSpec`."""

    def __init__(self, spec: MetricSpec, dim_cap: int = SYMBOLIC_DIM_CAP):
        self.spec = spec
        self.n = spec.dim
        self.dim_cap = dim_cap
        self._tapes: dict[str, Tape] = {}
        self._lock = threading.RLock()

    # ---- expressions
    @cached_property
    def energy(self) -> Expr:
        s, n = self.spec, self.n
        if s.kind == "riemannian":
            terms = []
            for i in range(n):
                for j in range(n):
                    a = s.metric[i][j]
                    if not a.is_zero:
                        terms.append(ex.mul(ex.simplify_basic(a), _yv(i), _yv(j)))
            return ex.add(*terms)
        return ex.simplify_basic(ex.power(ex.simplify_basic(s.F), 2))

    @cached_property
    def norm(self) -> Expr:
        if self.spec.kind == "riemannian":
            return ex.sqrt(self.energy)
        return ex.simplify_basic(self.spec.F)

    @cached_property
    def g(self) -> list[list[Expr]]:
        n = self.n
        if self.spec.kind == "riemannian":
            return [[ex.simplify_basic(self.spec.metric[i][j]) for j in range(n)] for i in range(n)]
        dE = [_dy(self.energy, i) for i in range(n)]
        out = [[None] * n for _ in range(n)]
        for i in range(n):
            for j in range(i, n):
                out[i][j] = out[j][i] = ex.mul(ex.HALF, _dy(dE[i], j))
        return out

    @cached_property
    def det_adj(self):
        if self.n > self.dim_cap:
            raise DimensionTooLargeError(
                f"symbolic inverse limited to dim <= {self.dim_cap} (got {self.n})")
        return symbolic_det_adj(self.g)

    @cached_property
    def G(self) -> tuple[Expr, ...]:
        n, E = self.n, self.energy
        dE = [_dy(E, l) for l in range(n)]
        w = []
        for l in range(n):
            terms = [ex.mul(_yv(k), _dx(dE[l], k)) for k in range(n)]
            w.append(ex.sub(ex.add(*terms), _dx(E, l)))
        det, adj = self.det_adj
        out = []
        for i in range(n):
            num = ex.add(*(ex.mul(adj[i][l], w[l]) for l in range(n) if not adj[i][l].is_zero))
            out.append(ex.div(ex.mul(const4(), num), det))
        return tuple(out)

    @cached_property
    def N(self):
        return tuple(tuple(_dy(self.G[i], j) for j in range(self.n)) for i in range(self.n))

    @cached_property
    def B(self):
        n = self.n
        out = [[[None] * n for _ in range(n)] for _ in range(n)]
        for h in range(n):
            for i in range(n):
                for j in range(i, n):
                    out[h][i][j] = out[h][j][i] = _dy(self.N[h][i], j)
        return tuple(tuple(tuple(r) for r in m) for m in out)

    @cached_property
    def B3(self):
        n = self.n
        out = {}
        for h in range(n):
            for i in range(n):
                for j in range(i, n):
                    for k in range(j, n):
                        out[h, i, j, k] = _dy(self.B[h][i][j], k)
        full = [[[[out[(h,) + tuple(sorted((i, j, k)))] for k in range(n)] for j in range(n)]
                 for i in range(n)] for h in range(n)]
        return tuple(tuple(tuple(tuple(c) for c in b) for b in a) for a in full)

    def delta(self, e: Expr, k: int) -> Expr:
        """delta e / delta x^k = d_k e - N^m_k d(e)/dy^m."""
        n = self.n
        terms = [_dx(e, k)]
        for m in range(n):
            d = _dy(e, m)
            if not d.is_zero and not self.N[m][k].is_zero:
                terms.append(ex.neg(ex.mul(self.N[m][k], d)))
        return ex.add(*terms)

    @cached_property
    def R_terms(self):
        """A[i][j][k] = delta N^i_j / delta x^k, so R^i_jk = A^i_jk - A^i_kj."""
        n = self.n
        return tuple(tuple(tuple(self.delta(self.N[i][j], k) for k in range(n))
                           for j in range(n)) for i in range(n))

    @cached_property
    def R(self):
        n, A = self.n, self.R_terms
        out = [[[ex.ZERO] * n for _ in range(n)] for _ in range(n)]
        for i in range(n):
            for j, k in combinations(range(n), 2):
                r = ex.sub(A[i][j][k], A[i][k][j])
                out[i][j][k] = r
                out[i][k][j] = ex.neg(r)
        return tuple(tuple(tuple(r) for r in m) for m in out)

    @cached_property
    def dB(self):
        """dB[h][i][j][k] = d G^h_ij / d x^k."""
        n = self.n
        return tuple(tuple(tuple(tuple(_dx(self.B[h][i][j], k) for k in range(n))
                                 for j in range(n)) for i in range(n)) for h in range(n))

    def connection(self) -> ConnectionExpressions:
        return ConnectionExpressions(self.G, self.N, self.B, self.B3, self.R)

    # ---- evaluation
    def _flat(self, group: str) -> list[Expr]:
        obj = {"E": [self.energy], "F": [self.norm], "domain": list(self.spec.domain),
               "g": self.g, "G": self.G, "N": self.N, "B": self.B, "B3": self.B3,
               "R": self.R, "Rterm": self.R_terms, "dB": self.dB}[group]
        return list(_flatten(obj))

    def tape(self, group: str) -> Tape:
        t = self._tapes.get(group)
        if t is None:
            with self._lock:
                t = self._tapes.get(group)
                if t is None:
                    t = self._tapes[group] = Tape(self._flat(group))
        return t

    _SHAPES = {"E": 0, "F": 0, "g": 2, "G": 1, "N": 2, "B": 3, "B3": 4, "R": 3, "Rterm": 3,
               "dB": 4}

    def values(self, group: str, X, Y) -> np.ndarray:
        """Evaluate a component group at samples; result has the sample axis first."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        S = X.shape[0]
        if group == "domain" and not self.spec.domain:
            return np.ones((S, 0))
        flat = self.tape(group).fast(X, Y)
        if group == "domain":
            return flat.T
        rank = self._SHAPES[group]
        shape = (self.n,) * rank
        if rank == 0:
            return flat[0]
        return np.moveaxis(flat.reshape(shape + (S,)), -1, 0)

    def freeze(self) -> "Geometry":
        for group in ("E", "F", "g", "G", "N", "B", "B3", "R", "Rterm", "dB"):
            self.tape(group)
        return self


def const4() -> Expr:
    return ex.const(Fraction(1, 4))


def _flatten(obj):
    if isinstance(obj, Expr):
        yield obj
    else:
        for o in obj:
            yield from _flatten(o)


_registry: "weakref.WeakKeyDictionary[MetricSpec, Geometry]" = weakref.WeakKeyDictionary()
_reg_lock = threading.Lock()


def geometry(spec: MetricSpec) -> Geometry:
    with _reg_lock:
        geo = _registry.get(spec)
        if geo is None:
            geo = _registry[spec] = Geometry(spec)
        return geo


def freeze(spec: MetricSpec) -> Geometry:
    """Build every expression and tape up front (before concurrent evaluation)."""
    return geometry(spec).freeze()


def energy(spec: MetricSpec) -> Expr:
    return geometry(spec).energy


def norm_expr(spec: MetricSpec) -> Expr:
    return geometry(spec).norm


# ------------------------------------------------------------- validation

def valid_mask(spec: MetricSpec, X, Y, groups: Sequence[str] = ("G", "N", "B")) -> np.ndarray:
    """Boolean mask of samples lying in the regular part of the slit tangent bundle."""
    geo = geometry(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    ok = np.linalg.norm(Y, axis=1) > 0
    ok &= np.all(np.isfinite(X), axis=1) & np.all(np.isfinite(Y), axis=1)
    dom = geo.values("domain", X, Y)
    if dom.shape[1]:
        ok &= np.all(np.nan_to_num(dom, nan=-1.0) > 0, axis=1)
    Fv = geo.values("F", X, Y)
    ok &= np.nan_to_num(Fv, nan=-1.0) > 0
    g = geo.values("g", X, Y)
    finite_g = np.all(np.isfinite(g.reshape(len(g), -1)), axis=1)
    ok &= finite_g
    for s in np.nonzero(ok)[0]:
        sv = np.linalg.svd(g[s], compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            ok[s] = False
    for group in groups:
        v = geo.values(group, X, Y)
        ok &= np.all(np.isfinite(v.reshape(len(v), -1)), axis=1)
    return ok


def validate(spec: MetricSpec, sample: TangentSample) -> TangentSample:
    if sample.x.shape != (spec.dim,) or sample.y.shape != (spec.dim,):
        raise InvalidSampleError(f"sample must have x, y of length {spec.dim}")
    if not valid_mask(spec, sample.x, sample.y)[0]:
        raise InvalidSampleError(f"invalid sample x={sample.x.tolist()} y={sample.y.tolist()} "
                                 f"for {spec.name}")
    return sample


def _xy(sample) -> tuple[np.ndarray, np.ndarray]:
    return sample.x.reshape(1, -1), sample.y.reshape(1, -1)


# ------------------------------------------------------------- operations

def fundamental_tensor(spec: MetricSpec, sample: TangentSample) -> tuple[np.ndarray, np.ndarray]:
    """``(g_ij, g^ij)`` at the sample; raises on a degenerate metric."""
    g = geometry(spec).values("g", *_xy(sample))[0]
    if not np.all(np.isfinite(g)):
        raise InvalidSampleError("fundamental tensor is not finite at sample")
    try:
        return g, invert(g)
    except SingularMatrixError as err:
        raise SingularMatrixError(f"degenerate metric at sample: {err}") from None


def spray_coefficients(spec: MetricSpec, sample: TangentSample) -> np.ndarray:
    validate(spec, sample)
    return geometry(spec).values("G", *_xy(sample))[0]


def connection_expressions(spec: MetricSpec) -> ConnectionExpressions:
    return geometry(spec).connection()


def spray_curvature(spec: MetricSpec, sample: TangentSample) -> np.ndarray:
    validate(spec, sample)
    return geometry(spec).values("R", *_xy(sample))[0]


def _h_curvature_batch(geo: Geometry, X, Y) -> np.ndarray:
    N = geo.values("N", X, Y)
    B = geo.values("B", X, Y)
    B3 = geo.values("B3", X, Y)
    dB = geo.values("dB", X, Y)
    # D[s,h,i,j,k] = delta G^h_ij / delta x^k
    D = dB - np.einsum("smk,shijm->shijk", N, B3)
    return (D - np.swapaxes(D, 3, 4)
            + np.einsum("shmk,smij->shijk", B, B) - np.einsum("shmj,smik->shijk", B, B))


def h_curvature(spec: MetricSpec, sample: TangentSample) -> np.ndarray:
    validate(spec, sample)
    return _h_curvature_batch(geometry(spec), *_xy(sample))[0]


def evaluate_jets(spec: MetricSpec, X, Y) -> dict[str, np.ndarray]:
    """All jet components at many samples at once (sample axis first)."""
    geo = geometry(spec)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    out = {k: geo.values(k, X, Y) for k in ("g", "G", "N", "B", "B3", "R")}
    out["Rh"] = _h_curvature_batch(geo, X, Y)
    out["ginv"] = np.array([invert(g) for g in out["g"]])
    return out


def geometry_jet(spec: MetricSpec, sample: TangentSample) -> GeometryJet:
    validate(spec, sample)
    j = evaluate_jets(spec, *_xy(sample))
    return GeometryJet(**{k: v[0] for k, v in j.items()})


def is_berwald(spec: MetricSpec, samples: Sequence[TangentSample],
               tol: ToleranceConfig = DEFAULT_TOL) -> tuple[bool, float]:
    """``(max |G^h_ijk| <= rank_tol, max |G^h_ijk|)`` over the samples."""
    if len(samples) < 20:
        raise ValueError("is_berwald needs at least 20 samples")
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    B3 = geometry(spec).values("B3", X, Y)
    worst = float(np.max(np.abs(B3)))
    return worst <= tol.rank_tol, worst


def horizontal_gradient_exprs(spec: MetricSpec, f: Expr) -> list[Expr]:
    geo = geometry(spec)
    return [geo.delta(f, i) for i in range(spec.dim)]


def horizontal_scalar_derivative(spec: MetricSpec, f: Expr | str,
                                 sample: TangentSample) -> np.ndarray:
    """Components ``delta f / delta x^i`` of ``d_h f`` at the sample."""
    if not isinstance(f, Expr):
        f = parse_expr(f, spec.dim)
    validate(spec, sample)
    comps = horizontal_gradient_exprs(spec, ex.simplify_basic(f))
    return Tape(comps).fast(*_xy(sample))[:, 0]


def check_homogeneity(spec: MetricSpec, X, Y, lambdas=(0.5, 2.0, 3.0)) -> float:
    """Max relative deviation of ``G(x, l*y)`` from ``l**2 G(x, y)``."""
    geo = geometry(spec)
    G = geo.values("G", X, Y)
    worst = 0.0
    for lam in lambdas:
        Gl = geo.values("G", X, lam * np.asarray(Y))
        scale = np.maximum(np.abs(lam ** 2 * G), 1e-300) + np.max(np.abs(G))
        worst = max(worst, float(np.max(np.abs(Gl - lam ** 2 * G) / scale)))
    return worst
