"""Run the requested analyses for one config and assemble a JSON-ready report."""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import __version__
from .config import AnalysisConfig, base_point, draw_samples, y_samples_at
from .geometry import check_homogeneity, evaluate_jets, geometry, is_berwald
from .holonomy import metrizability_freedom
from .parallel import (
    LoopSet, _canonical, construct_berwald, kernel_space, nullity_space, parallel_form_basis,
    sufficient_condition_scan, verify_parallel_form,
)
from .numerics import subspace_distance

__all__ = ["AnalysisReport", "run", "canonical_json", "VERIFY_SAMPLES"]

# samples used for transport-based verification of each parallel form
VERIFY_SAMPLES = 12
PROPERTY_TOL = 1e-8
SPRAY_MATCH_TOL = 1e-7


@dataclass
class AnalysisReport:
    metric: str
    config: dict
    blocks: dict = field(default_factory=dict)
    version: str = __version__

    @property
    def verdict(self) -> str:
        ok = all(b.get("status") == "PASS" for b in self.blocks.values())
        return "PASS" if ok else "FAIL"

    def to_dict(self) -> dict:
        return {"metric": self.metric, "version": self.version, "config": self.config,
                "blocks": self.blocks, "verdict": self.verdict}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=indent, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(report: AnalysisReport | dict) -> str:
    """Report JSON with wall-time fields removed, for reproducibility comparisons."""
    d = report.to_dict() if isinstance(report, AnalysisReport) else report

    def strip(o):
        if isinstance(o, dict):
            return {k: strip(v) for k, v in o.items() if k != "wall_time"}
        if isinstance(o, list):
            return [strip(v) for v in o]
        return o

    return json.dumps(strip(_jsonable(d)), sort_keys=True)


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(b))) if np.size(b) else 1.0)
    return float(np.max(np.abs(a - b))) / scale if np.size(a) else 0.0


class _Context:
    """Shared samples and intermediate results across blocks."""

    def __init__(self, cfg: AnalysisConfig):
        self.cfg = cfg
        self.samples = draw_samples(cfg)
        self.X = np.array([s.x for s in self.samples])
        self.Y = np.array([s.y for s in self.samples])
        self._jets = None
        self.verdict = None

    @property
    def jets(self):
        if self._jets is None:
            self._jets = evaluate_jets(self.cfg.spec, self.X, self.Y)
        return self._jets


def _spray(ctx: _Context) -> dict:
    cfg, spec = ctx.cfg, ctx.cfg.spec
    J = ctx.jets
    G, N, B = J["G"], J["N"], J["B"]
    euler_N = _rel(np.einsum("sij,sj->si", N, ctx.Y), 2 * G)
    euler_B = _rel(np.einsum("shij,sj->shi", B, ctx.Y), N)
    homog = check_homogeneity(spec, ctx.X, ctx.Y)
    out = {"samples": len(ctx.samples), "G_first_sample": G[0], "x_first_sample": ctx.X[0],
           "y_first_sample": ctx.Y[0], "euler_N": euler_N, "euler_B": euler_B,
           "homogeneity": homog}
    ok = max(euler_N, euler_B, homog) <= PROPERTY_TOL
    alts = {}
    for alt in cfg.alternates:
        Ga = geometry(alt).values("G", ctx.X, ctx.Y)
        alts[alt.name] = float(np.max(np.abs(Ga - G)))
        ok &= alts[alt.name] <= SPRAY_MATCH_TOL
    if alts:
        out["alternate_spray_match"] = alts
    out["status"] = "PASS" if ok else "FAIL"
    return out


def _curvature(ctx: _Context) -> dict:
    spec = ctx.cfg.spec
    J = ctx.jets
    R, Rh = J["R"], J["Rh"]
    antisym = _rel(R, -np.swapaxes(R, 2, 3))
    contraction = _rel(np.einsum("si,shijk->shjk", ctx.Y, Rh), R)
    out = {"max_abs_R": float(np.max(np.abs(R))), "max_abs_Rh": float(np.max(np.abs(Rh))),
           "R_first_sample": R[0], "antisymmetry": antisym, "contraction": contraction}
    worst = max(antisym, contraction)
    if spec.kind == "riemannian":
        bianchi = _rel(Rh + np.moveaxis(Rh, (2, 3, 4), (3, 4, 2))
                       + np.moveaxis(Rh, (2, 3, 4), (4, 2, 3)), 0 * Rh)
        out["bianchi"] = bianchi
        worst = max(worst, bianchi)
    out["status"] = "PASS" if worst <= PROPERTY_TOL else "FAIL"
    return out


def _nullity(ctx: _Context) -> dict:
    cfg = ctx.cfg
    if cfg.spec.kind != "riemannian":
        return {"status": "PASS", "skipped": "nullity and kernel spaces are computed for riemannian metrics only"}
    x0 = base_point(cfg)
    Ys = y_samples_at(cfg, x0, 2 * cfg.dim)
    nul = nullity_space(cfg.spec, x0, Ys, cfg.tol)
    ker = kernel_space(cfg.spec, x0, Ys, cfg.tol)
    dist = subspace_distance(nul, ker) if nul.dim == ker.dim else 1.0
    return {"dim": nul.dim, "basis": _canonical(nul), "kernel_dim": ker.dim,
            "kernel_basis": _canonical(ker), "lemma_distance": dist, "base_point": x0,
            "status": "PASS" if nul.dim == ker.dim and dist <= PROPERTY_TOL else "FAIL"}


def _parallel(ctx: _Context) -> dict:
    cfg = ctx.cfg
    x0 = base_point(cfg)
    Ys = y_samples_at(cfg, x0, 4 * cfg.dim)
    loops = LoopSet.rectangles(cfg.spec, x0, cfg.loop_scales, cfg.tol.ode_steps)
    verdict = parallel_form_basis(cfg.spec, loops, Ys, cfg.tol)
    ctx.verdict = verdict
    out = verdict.as_dict()
    ok = verdict.final_dim <= min(verdict.algebraic_dim, verdict.holonomy_dim)
    checks = []
    vs = ctx.samples[:VERIFY_SAMPLES]
    for form in verdict.forms():
        r = verify_parallel_form(cfg.spec, form, vs, cfg.tol)
        checks.append(r)
        ok &= r["pass"]
    out["residuals"]["verification"] = checks
    if len(ctx.samples) >= 20:
        out["sufficient_condition"] = sufficient_condition_scan(cfg.spec, ctx.samples, cfg.tol).as_dict()
    out["status"] = "PASS" if ok else "FAIL"
    return out


def _berwald(ctx: _Context) -> dict:
    cfg = ctx.cfg
    samples = ctx.samples if len(ctx.samples) >= 20 else draw_samples(cfg, 20)
    flag, worst = is_berwald(cfg.spec, samples, cfg.tol)
    out = {"is_berwald": flag, "max_residual": worst}
    ok = True
    alts = {}
    for alt in cfg.alternates:
        f, w = is_berwald(alt, samples, cfg.tol)
        alts[alt.name] = {"is_berwald": f, "max_residual": w}
    if alts:
        out["alternates"] = alts
    if cfg.spec.kind == "riemannian" and ctx.verdict is not None and ctx.verdict.final_dim:
        randers = []
        for form in ctx.verdict.forms():
            form.b0 = 0.5 * form.b0
            try:
                spec_f, res = construct_berwald(cfg.spec, form, samples, cfg.tol)
                randers.append({"b0": form.b0, "F": spec_f.source["F"], "spray_match": res})
                ok &= res <= SPRAY_MATCH_TOL
            except ValueError as err:
                randers.append({"b0": form.b0, "skipped": str(err)})
        out["randers"] = randers
    out["status"] = "PASS" if ok else "FAIL"
    return out


def _freedom(ctx: _Context) -> dict:
    cfg = ctx.cfg
    samples = ctx.samples if len(ctx.samples) >= 10 else draw_samples(cfg, 10)
    rep = metrizability_freedom(cfg.spec, samples, cfg.depth, cfg.tol)
    out = rep.as_dict()
    ok = min(rep.rank_per_sample) >= cfg.dim
    if ctx.verdict is not None:
        consistent = ctx.verdict.final_dim == 0 or rep.mu_s >= 2
        out["parallel_consistency"] = consistent
        ok &= consistent
    out["status"] = "PASS" if ok else "FAIL"
    return out


_BLOCKS: dict[str, Callable[[_Context], dict]] = {
    "spray": _spray, "curvature": _curvature, "nullity": _nullity,
    "parallel": _parallel, "berwald": _berwald, "freedom": _freedom,
}


def run(cfg: AnalysisConfig, log: Callable[[str], None] | None = None) -> AnalysisReport:
    """Execute the configured analyses in fixed order; block errors are captured."""
    report = AnalysisReport(cfg.spec.name, cfg.echo())
    ctx = _Context(cfg)
    for name in _BLOCKS:
        if name not in cfg.analyses:
            continue
        t0 = time.perf_counter()
        try:
            block = _BLOCKS[name](ctx)
        except Exception as err:  # noqa: BLE001 - reported per block
            block = {"status": "ERROR", "error": f"{type(err).__name__}: {err}"}
        block["wall_time"] = round(time.perf_counter() - t0, 3)
        report.blocks[name] = _jsonable(block)
        if log:
            log(f"{cfg.spec.name}: {name} {block['status']} ({block['wall_time']:.1f}s)")
    return report
