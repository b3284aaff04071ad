"""Analysis configuration: JSON loading, validation and seeded sampling.

Sampling uses SplitMix64 (64-bit state, Steele/Lea/Flood constants) so that
a seed reproduces the same samples on every platform and numpy version.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .expr import ParseError
from .geometry import MetricSpec, TangentSample, valid_mask
from .numerics import ToleranceConfig

__all__ = [
    "ANALYSES", "AnalysisConfig", "ConfigError", "SplitMix64",
    "config_from_dict", "load_config", "draw_samples", "base_point", "y_samples_at",
]

ANALYSES = ("spray", "curvature", "nullity", "parallel", "berwald", "freedom")
_KEYS = {"name", "dim", "kind", "F", "metric", "domain", "box", "samples", "seed", "tolerances",
         "analyses", "base_point", "loop_scales", "depth", "alternates", "parameters"}
MIN_ACCEPT_RATE = 0.5


class ConfigError(ValueError):
    pass


class SplitMix64:
    """SplitMix64 generator; ``uniform`` returns 53-bit doubles in [0, 1)."""

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * 2.0 ** -53


@dataclass
class AnalysisConfig:
    spec: MetricSpec
    box_x: np.ndarray
    box_y: np.ndarray
    samples: int = 50
    seed: int = 0
    tol: ToleranceConfig = field(default_factory=ToleranceConfig)
    analyses: tuple[str, ...] = ANALYSES
    base_point: np.ndarray | None = None
    loop_scales: tuple[float, ...] = (0.1, 0.3)
    depth: int = 4
    alternates: list[MetricSpec] = field(default_factory=list)
    parameters: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.spec.dim

    def echo(self) -> dict:
        """Normalized config dictionary embedded in reports."""
        d = dict(self.spec.source)
        d.update({
            "box": {"x": self.box_x.tolist(), "y": self.box_y.tolist()},
            "samples": self.samples, "seed": self.seed, "tolerances": self.tol.as_dict(),
            "analyses": list(self.analyses), "loop_scales": list(self.loop_scales),
            "depth": self.depth,
        })
        if self.base_point is not None:
            d["base_point"] = self.base_point.tolist()
        if self.alternates:
            d["alternates"] = [{"name": a.name, "F": a.source["F"]} for a in self.alternates]
        if self.parameters:
            d["parameters"] = self.parameters
        return d


def _box(raw: Any, n: int, what: str) -> np.ndarray:
    try:
        b = np.asarray(raw, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"box.{what} must be a list of [lo, hi] pairs") from None
    if b.shape != (n, 2):
        raise ConfigError(f"box.{what} must have {n} [lo, hi] pairs")
    if not np.all(np.isfinite(b)) or np.any(b[:, 0] > b[:, 1]):
        raise ConfigError(f"box.{what} intervals must be finite with lo <= hi")
    return b


def _spec(d: dict) -> MetricSpec:
    name = str(d.get("name", "metric"))
    dim = d.get("dim")
    if not isinstance(dim, int) or isinstance(dim, bool) or dim < 2:
        raise ConfigError(f"dim must be an integer >= 2, got {dim!r}")
    kind = d.get("kind")
    domain = d.get("domain", [])
    if not isinstance(domain, list) or not all(isinstance(s, str) for s in domain):
        raise ConfigError("domain must be a list of expression strings")
    try:
        if kind == "riemannian":
            m = d.get("metric")
            if not isinstance(m, list) or len(m) != dim or any(
                    not isinstance(r, list) or len(r) != dim for r in m):
                raise ConfigError(f"metric must be a {dim}x{dim} list of strings")
            return MetricSpec.riemannian(name, m, domain)
        if kind == "finsler":
            if not isinstance(d.get("F"), str):
                raise ConfigError("finsler config needs an F string")
            return MetricSpec.finsler(name, dim, d["F"], domain)
    except ParseError as err:
        raise ConfigError(f"expression error: {err}") from err
    except ConfigError:
        raise
    except ValueError as err:
        raise ConfigError(str(err)) from err
    raise ConfigError(f"kind must be 'riemannian' or 'finsler', got {kind!r}")


def config_from_dict(d: dict) -> AnalysisConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(d) - _KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    spec = _spec(d)
    n = spec.dim
    box = d.get("box")
    if not isinstance(box, dict) or "x" not in box:
        raise ConfigError("box with an 'x' list is required")
    bx = _box(box["x"], n, "x")
    by = _box(box.get("y", [[-1, 1]] * n), n, "y")

    samples = d.get("samples", 50)
    if not isinstance(samples, int) or samples < 1:
        raise ConfigError("samples must be a positive integer")
    seed = d.get("seed", 0)
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed must be a non-negative integer")
    try:
        tol = ToleranceConfig.from_dict(d.get("tolerances"))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"tolerances: {err}") from None

    analyses = d.get("analyses", ["all"])
    if isinstance(analyses, str):
        analyses = [a.strip() for a in analyses.split(",") if a.strip()]
    bad = [a for a in analyses if a not in ANALYSES and a != "all"]
    if bad or not analyses:
        raise ConfigError(f"unknown analyses {bad}; choose from {list(ANALYSES) + ['all']}")
    chosen = ANALYSES if "all" in analyses else tuple(a for a in ANALYSES if a in analyses)

    base = d.get("base_point")
    if base is not None:
        base = np.asarray(base, dtype=float)
        if base.shape != (n,):
            raise ConfigError(f"base_point must have {n} entries")
    scales = d.get("loop_scales", [0.1, 0.3])
    if not scales or not all(isinstance(s, (int, float)) and s > 0 for s in scales):
        raise ConfigError("loop_scales must be a non-empty list of positive numbers")
    depth = d.get("depth", 4)
    if not isinstance(depth, int) or depth < 1:
        raise ConfigError("depth must be an integer >= 1")

    alternates = []
    for alt in d.get("alternates", []):
        try:
            alternates.append(MetricSpec.finsler(alt["name"], n, alt["F"], d.get("domain", [])))
        except (KeyError, TypeError) as err:
            raise ConfigError(f"alternate needs name and F: {err}") from None
        except ValueError as err:
            raise ConfigError(f"alternate {alt.get('name')!r}: {err}") from err

    cfg = AnalysisConfig(spec, bx, by, samples, seed, tol, chosen, base,
                         tuple(float(s) for s in scales), depth, alternates,
                         dict(d.get("parameters", {})))
    draw_samples(cfg)  # validates the box against the domain
    return cfg


def load_config(path: str | Path) -> AnalysisConfig:
    try:
        text = Path(path).read_text()
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    try:
        d = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"malformed JSON in {path}: {err}") from None
    return config_from_dict(d)


def _rejection(cfg: AnalysisConfig, rng: SplitMix64, count: int, bx, by) -> tuple[np.ndarray, np.ndarray]:
    n = cfg.dim
    lo = np.concatenate([bx[:, 0], by[:, 0]])
    width = np.concatenate([bx[:, 1] - bx[:, 0], by[:, 1] - by[:, 0]])
    X, Y = [], []
    attempts = 0
    budget = max(4 * count, 40)
    while len(X) < count:
        batch = max(count - len(X), 8)
        pts = np.array([[rng.uniform() for _ in range(2 * n)] for _ in range(batch)])
        pts = lo + pts * width
        ok = valid_mask(cfg.spec, pts[:, :n], pts[:, n:])
        for p, good in zip(pts, ok):
            attempts += 1
            if good and len(X) < count:
                X.append(p[:n])
                Y.append(p[n:])
        if attempts >= budget and len(X) < MIN_ACCEPT_RATE * attempts:
            raise ConfigError(
                f"sampling box is not inside the domain of {cfg.spec.name}: "
                f"{len(X)} of {attempts} draws valid")
    return np.array(X), np.array(Y)


def draw_samples(cfg: AnalysisConfig, count: int | None = None,
                 stream: int = 0) -> list[TangentSample]:
    """Seeded valid samples from the box; ``stream`` selects an independent sequence."""
    count = cfg.samples if count is None else count
    seed = (cfg.seed + stream * 0x632BE59BD9B4E019) & SplitMix64.MASK
    X, Y = _rejection(cfg, SplitMix64(seed), count, cfg.box_x, cfg.box_y)
    return [TangentSample(x, y) for x, y in zip(X, Y)]


def base_point(cfg: AnalysisConfig) -> np.ndarray:
    """Configured base point, else the box centre (or the nearest valid sample to it)."""
    if cfg.base_point is not None:
        return cfg.base_point.copy()
    c = cfg.box_x.mean(axis=1)
    y = draw_samples(cfg, 1)[0].y
    if valid_mask(cfg.spec, c, y)[0]:
        return c
    pts = draw_samples(cfg, 64, stream=3)
    best = min(pts, key=lambda s: math.dist(s.x, c))
    return best.x.copy()


def y_samples_at(cfg: AnalysisConfig, x, count: int, stream: int = 2) -> np.ndarray:
    """``count`` seeded directions from the y box that are valid tangent vectors at ``x``."""
    x = np.asarray(x, dtype=float)
    rng = SplitMix64((cfg.seed + stream * 0x632BE59BD9B4E019) & SplitMix64.MASK)
    n = cfg.dim
    lo, width = cfg.box_y[:, 0], cfg.box_y[:, 1] - cfg.box_y[:, 0]
    out, attempts = [], 0
    while len(out) < count:
        Y = lo + width * np.array([[rng.uniform() for _ in range(n)] for _ in range(count)])
        ok = valid_mask(cfg.spec, np.tile(x, (count, 1)), Y)
        attempts += count
        out.extend(Y[ok][: count - len(out)])
        if attempts >= max(4 * count, 40) and len(out) < MIN_ACCEPT_RATE * attempts:
            raise ConfigError(f"y box gives too few valid directions at x={x.tolist()}")
    return np.array(out)
