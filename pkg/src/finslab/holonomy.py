"""Holonomy distribution of a spray and its metrizability freedom.

The distribution is generated by the horizontal frame
``h_i = d/dx^i - N^j_i d/dy^j`` and its iterated brackets
``[h_i1, [h_i2, ... [h_ik, h_j]]]``.  Brackets are formed symbolically; the
rank is decided numerically at sample points.

Generation keeps a bracket only if it adds a direction at one of the
reference samples.  A bracket that lies pointwise in the span of retained
fields contributes nothing new at later depths either (its brackets expand
into brackets of retained fields plus multiples of them), so dropping it
does not change the rank at generic points.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr, ExpressionBudgetError, Tape
from .geometry import MetricSpec, TangentSample, geometry, norm_expr, valid_mask
from .numerics import DEFAULT_TOL, ToleranceConfig

__all__ = [
    "TMVectorField", "FreedomReport", "horizontal_frame", "lie_bracket",
    "HolonomyGenerator", "holonomy_rank", "metrizability_freedom",
    "functional_independence", "NODE_BUDGET",
]

NODE_BUDGET = 2_000_000


@dataclass(frozen=True, eq=False)
class TMVectorField:
    """Vector field on TM: ``components[:n]`` along d/dx, ``components[n:]`` along d/dy."""

    components: tuple[Expr, ...]
    label: str
    # the two halves a(b) and b(a) of a bracket, kept for cancellation-aware zero tests
    parts: tuple[tuple[Expr, ...], tuple[Expr, ...]] | None = None

    @property
    def dim(self) -> int:
        return len(self.components) // 2

    @property
    def is_zero(self) -> bool:
        return all(c.is_zero for c in self.components)

    def evaluate(self, X, Y) -> np.ndarray:
        return Tape(self.components).fast(X, Y).T


def _coord(m: int, n: int) -> tuple[str, int]:
    return ("x", m + 1) if m < n else ("y", m - n + 1)


def horizontal_frame(spec: MetricSpec) -> list[TMVectorField]:
    n = spec.dim
    N = geometry(spec).N
    frame = []
    for i in range(n):
        comps = [ex.ONE if j == i else ex.ZERO for j in range(n)]
        comps += [ex.neg(N[j][i]) for j in range(n)]
        frame.append(TMVectorField(tuple(comps), f"h{i + 1}"))
    return frame


def _apply(a: Sequence[Expr], f: Expr, n: int) -> Expr:
    """Directional derivative a(f) = a^m d_m f over the 2n coordinates of TM."""
    terms = []
    for m, am in enumerate(a):
        if am.is_zero:
            continue
        axis, idx = _coord(m, n)
        if not f.depends_on(axis, idx):
            continue
        d = ex.differentiate(f, axis, idx)
        if not d.is_zero:
            terms.append(ex.mul(am, d))
    return ex.add(*terms)


def lie_bracket(a: TMVectorField, b: TMVectorField, budget: int = NODE_BUDGET,
                label: str | None = None) -> TMVectorField:
    """``[a, b]^k = a(b^k) - b(a^k)``, built by exact differentiation."""
    if len(a.components) != len(b.components):
        raise ValueError("fields live on different charts")
    n = a.dim
    ps, qs, comps = [], [], []
    for k in range(2 * n):
        p = _apply(a.components, b.components[k], n)
        q = _apply(b.components, a.components[k], n)
        c = ex.sub(p, q)
        if not c.is_const and ex.node_count(c) > budget:
            raise ExpressionBudgetError(
                f"bracket [{a.label},{b.label}] component {k} exceeds node budget {budget}")
        ps.append(p)
        qs.append(q)
        comps.append(c)
    return TMVectorField(tuple(comps), label or f"[{a.label},{b.label}]", (tuple(ps), tuple(qs)))


def _column_rank(M: np.ndarray, tol: ToleranceConfig) -> tuple[int, np.ndarray]:
    """Rank of the columns of ``M`` after scaling each nonzero column to unit length."""
    norms = np.linalg.norm(M, axis=0)
    if not np.any(norms > 0):
        return 0, np.zeros(0)
    # columns at rounding level relative to the largest one are treated as zero
    keep = norms > tol.rank_tol * norms.max()
    if not np.any(keep):
        return 0, np.zeros(0)
    s = np.linalg.svd(M[:, keep] / norms[keep], compute_uv=False)
    return int(np.sum(s > tol.rank_tol * s[0])), s


class HolonomyGenerator:
    """Incrementally generates and prunes brackets for one spec.

    ``levels[0]`` is the horizontal frame, ``levels[1]`` the retained
    brackets ``[h_i, h_j]`` and ``levels[d]`` the retained ``[h_i, Y]`` for
    ``Y`` in ``levels[d-1]``.
    """

    def __init__(self, spec: MetricSpec, X_ref, Y_ref, tol: ToleranceConfig = DEFAULT_TOL,
                 budget: int = NODE_BUDGET):
        self.spec = spec
        self.n = spec.dim
        self.X_ref = np.atleast_2d(np.asarray(X_ref, dtype=float))
        self.Y_ref = np.atleast_2d(np.asarray(Y_ref, dtype=float))
        self.tol = tol
        self.budget = budget
        self.frame = horizontal_frame(spec)
        self.levels: list[list[TMVectorField]] = [list(self.frame)]
        self.pruned: list[dict[str, int]] = [{"zero": 0, "dependent": 0}]
        self._ref_vals = [self._values(self.frame)]  # per-field arrays (S, 2n)
        self._lock = threading.Lock()

    def _values(self, fields: Sequence[TMVectorField]) -> list[np.ndarray]:
        if not fields:
            return []
        comps = [c for f in fields for c in f.components]
        vals = Tape(comps).fast(self.X_ref, self.Y_ref)  # (len, S)
        m = 2 * self.n
        return [vals[i * m:(i + 1) * m].T for i in range(len(fields))]

    def _is_numerically_zero(self, f: TMVectorField, vals: np.ndarray,
                             parent_scale: np.ndarray) -> bool:
        """Zero up to cancellation error, judged against the halves and the parents."""
        if not np.all(np.isfinite(vals)):
            return False
        if f.parts is None:
            return bool(np.all(vals == 0))
        pv = Tape(list(f.parts[0]) + list(f.parts[1])).fast(self.X_ref, self.Y_ref)
        m = 2 * self.n
        scale = np.linalg.norm(pv[:m], axis=0) + np.linalg.norm(pv[m:], axis=0) + parent_scale
        return bool(np.all(np.linalg.norm(vals, axis=1) <= self.tol.rank_tol * scale))

    def _all_retained_values(self) -> list[np.ndarray]:
        return [v for lvl in self._ref_vals for v in lvl]

    def _ranks(self, vals: list[np.ndarray]) -> np.ndarray:
        S = self.X_ref.shape[0]
        if not vals:
            return np.zeros(S, dtype=int)
        stack = np.stack(vals, axis=2)  # (S, 2n, m)
        return np.array([_column_rank(stack[s], self.tol)[0] for s in range(S)])

    def extend_to(self, depth: int) -> None:
        with self._lock:
            while len(self.levels) <= depth:
                self._next_level()

    def _next_level(self) -> None:
        d = len(self.levels)
        fv = self._ref_vals[0]
        if d == 1:
            cands = [(lie_bracket(self.frame[i], self.frame[j], self.budget), fv[i], fv[j])
                     for i in range(self.n) for j in range(i + 1, self.n)]
        else:
            cands = [(lie_bracket(h, Y, self.budget), fv[i], yv)
                     for Y, yv in zip(self.levels[-1], self._ref_vals[-1])
                     for i, h in enumerate(self.frame)]
        kept: list[TMVectorField] = []
        kept_vals: list[np.ndarray] = []
        stats = {"zero": 0, "dependent": 0}
        current = self._all_retained_values()
        ranks = self._ranks(current)
        for f, va, vb in cands:
            if f.is_zero:
                stats["zero"] += 1
                continue
            v = self._values([f])[0]
            parent = np.linalg.norm(va, axis=1) * np.linalg.norm(vb, axis=1)
            if self._is_numerically_zero(f, v, parent):
                stats["zero"] += 1
                continue
            new_ranks = self._ranks(current + [v])
            if np.any(new_ranks > ranks):
                kept.append(f)
                kept_vals.append(v)
                current = current + [v]
                ranks = new_ranks
            else:
                stats["dependent"] += 1
        self.levels.append(kept)
        self._ref_vals.append(kept_vals)
        self.pruned.append(stats)

    def fields(self, depth: int) -> list[TMVectorField]:
        self.extend_to(depth)
        return [f for lvl in self.levels[: depth + 1] for f in lvl]

    def closed_at(self) -> int | None:
        """Smallest depth after which no retained bracket appears, if reached."""
        for d in range(1, len(self.levels)):
            if not self.levels[d]:
                return d - 1
        return None

    def rank_at(self, X, Y, depth: int) -> tuple[np.ndarray, list[np.ndarray]]:
        fields = self.fields(depth)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        Y = np.atleast_2d(np.asarray(Y, dtype=float))
        comps = [c for f in fields for c in f.components]
        vals = Tape(comps).fast(X, Y)
        m = 2 * self.n
        ranks, svals = [], []
        for s in range(X.shape[0]):
            M = vals[:, s].reshape(len(fields), m).T
            r, sv = _column_rank(M, self.tol)
            ranks.append(r)
            svals.append(sv)
        return np.array(ranks), svals


def _jitter_references(spec: MetricSpec, x, y, count: int = 6, seed: int = 7):
    """Deterministic generic companions of one sample for pruning decisions."""
    rng = np.random.default_rng(seed)
    X, Y = [np.asarray(x, float)], [np.asarray(y, float)]
    tries = 0
    while len(X) < count + 1 and tries < 200:
        tries += 1
        xs = X[0] + 0.02 * rng.standard_normal(spec.dim)
        ys = Y[0] + 0.05 * np.linalg.norm(Y[0]) * rng.standard_normal(spec.dim)
        if valid_mask(spec, xs, ys)[0]:
            X.append(xs)
            Y.append(ys)
    return np.array(X), np.array(Y)


def holonomy_rank(spec: MetricSpec, sample: TangentSample, depth: int,
                  tol: ToleranceConfig = DEFAULT_TOL, reference: Sequence[TangentSample] | None = None,
                  budget: int = NODE_BUDGET) -> int:
    """Numerical rank of the frame plus brackets up to ``depth`` at the sample."""
    if depth < 1:
        raise ValueError("depth must be >= 1")
    if reference:
        Xr = np.array([s.x for s in reference])
        Yr = np.array([s.y for s in reference])
    else:
        Xr, Yr = _jitter_references(spec, sample.x, sample.y)
    gen = HolonomyGenerator(spec, Xr, Yr, tol, budget)
    ranks, _ = gen.rank_at(sample.x, sample.y, depth)
    return int(ranks[0])


@dataclass
class FreedomReport:
    rank_per_sample: list[int]
    depth: int
    max_rank: int
    mu_s: int
    stabilized: bool
    stable_depth: int | None
    rank_by_depth: list[list[int]]
    fields_per_depth: list[int]
    pruned: list[dict[str, int]] = field(default_factory=list)
    near_cutoff: list[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "rank_per_sample": self.rank_per_sample, "depth": self.depth,
            "max_rank": self.max_rank, "mu_s": self.mu_s, "stabilized": self.stabilized,
            "stable_depth": self.stable_depth, "rank_by_depth": self.rank_by_depth,
            "fields_per_depth": self.fields_per_depth, "pruned": self.pruned,
            "near_cutoff": self.near_cutoff,
        }


def metrizability_freedom(spec: MetricSpec, samples: Sequence[TangentSample], depth: int = 4,
                          tol: ToleranceConfig = DEFAULT_TOL,
                          budget: int = NODE_BUDGET) -> FreedomReport:
    """Corank of the holonomy distribution at generic samples.

    The samples double as reference points for bracket pruning.
    """
    if len(samples) < 10:
        raise ValueError("metrizability_freedom needs at least 10 samples")
    if depth < 1:
        raise ValueError("depth must be >= 1")
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    gen = HolonomyGenerator(spec, X, Y, tol, budget)
    by_depth = []
    svals = None
    for d in range(1, depth + 1):
        gen.extend_to(d)
        if d > 1 and not gen.levels[d]:
            by_depth.append(list(by_depth[-1]))
            continue
        ranks, svals_d = gen.rank_at(X, Y, d)
        by_depth.append(ranks.tolist())
        svals = svals_d
    final = by_depth[-1]
    stabilized = depth >= 2 and by_depth[-1] == by_depth[-2]
    closed = gen.closed_at()
    max_rank = int(max(final))
    near = []
    if svals is not None:
        cut = []
        for sv in svals:
            if sv.size:
                cutoff = tol.rank_tol * sv[0]
                above = sv[sv > cutoff]
                below = sv[sv <= cutoff]
                if above.size:
                    cut.append(float(above[-1]))
                if below.size:
                    cut.append(float(below[0]))
        near = sorted(set(cut), key=lambda v: abs(np.log10(v / tol.rank_tol)) if v > 0 else 1e9)[:4]
    return FreedomReport(
        rank_per_sample=[int(r) for r in final], depth=depth, max_rank=max_rank,
        mu_s=2 * spec.dim - max_rank, stabilized=bool(stabilized),
        stable_depth=closed if closed is not None and closed <= depth else None,
        rank_by_depth=by_depth, fields_per_depth=[len(l) for l in gen.levels[: depth + 1]],
        pruned=gen.pruned[1: depth + 1], near_cutoff=near)


def functional_independence(spec_a: MetricSpec, spec_b: MetricSpec,
                            samples: Sequence[TangentSample],
                            tol: ToleranceConfig = DEFAULT_TOL) -> bool:
    """True iff dF_A and dF_B are linearly independent at some sample."""
    if spec_a.dim != spec_b.dim:
        raise ValueError("specs live on different charts")
    n = spec_a.dim
    grads = []
    for spec in (spec_a, spec_b):
        F = norm_expr(spec)
        grads.extend(ex.differentiate(F, *_coord(m, n)) for m in range(2 * n))
    X = np.array([s.x for s in samples])
    Y = np.array([s.y for s in samples])
    vals = Tape(grads).fast(X, Y)
    for s in range(X.shape[0]):
        M = vals[:, s].reshape(2, 2 * n)
        if not np.all(np.isfinite(M)):
            continue
        norms = np.linalg.norm(M, axis=1)
        if np.any(norms == 0):
            continue
        sv = np.linalg.svd(M / norms[:, None], compute_uv=False)
        if sv[1] > tol.rank_tol * sv[0]:
            return True
    return False
