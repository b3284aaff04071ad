"""Built-in metrics with sampling boxes that avoid their singular loci.

Each entry is a plain config dictionary in the same JSON shape accepted by
:func:`finslab.config.load_config`.
"""

from __future__ import annotations

import copy
import re

__all__ = ["catalog_dict", "catalog_names", "example2_metric", "CATALOG"]


def _diag(entries: list[str]) -> list[list[str]]:
    n = len(entries)
    return [[entries[i] if i == j else "0" for j in range(n)] for i in range(n)]


def _fmt(v: float) -> str:
    s = repr(float(v))
    return s if not s.startswith("-") else "(" + s + ")"


def example2_metric(a: list[float]) -> list[list[str]]:
    """Flat metric whose spray is ``G^i = -<a,y>/(1+<a,x>) y^i``.

    It is the pull-back of the Euclidean metric, scaled by ``1-|a|^2``,
    under the projective map ``x -> x/(1+<a,x>)``:
    ``a_ij = (1-|a|^2) [s^2 d_ij - s (x_i a_j + a_i x_j) + |x|^2 a_i a_j] / s^4``
    with ``s = 1 + <a,x>``.
    """
    n = len(a)
    c = 1.0 - sum(v * v for v in a)
    s = "(1 + " + " + ".join(f"{_fmt(v)}*x{i + 1}" for i, v in enumerate(a)) + ")"
    xx = "(" + " + ".join(f"x{i + 1}^2" for i in range(n)) + ")"

    def entry(i: int, j: int) -> str:
        terms = [f"{s}^2"] if i == j else []
        if a[i] != 0 or a[j] != 0:
            terms.append(f"{s}*({_fmt(a[j])}*x{i + 1} + {_fmt(a[i])}*x{j + 1})")
            terms[-1] = "- " + terms[-1] if len(terms) > 1 else "-" + terms[-1]
        if a[i] * a[j] != 0:
            terms.append(f"+ {xx}*{_fmt(a[i] * a[j])}")
        if not terms:
            return "0"
        return f"{_fmt(c)}*({' '.join(terms)})/{s}^4"

    return [[entry(min(i, j), max(i, j)) for j in range(n)] for i in range(n)]


_EX2_A = [0.5, 0.3, -0.2, 0.1]

_SHEN = ("(sqrt((1 - x1^2 - x2^2)*(y1^2 + y2^2) + (x1*y1 + x2*y2)^2) + x1*y1 + x2*y2)^2"
         "/((1 - x1^2 - x2^2)^2*sqrt((1 - x1^2 - x2^2)*(y1^2 + y2^2) + (x1*y1 + x2*y2)^2))")

_QUARTIC = "((x2*y1^2 + x1*y2^2)^2 + (x4*y3^2 + x3*y4^2)^2)^(1/4)"

CATALOG: dict[str, dict] = {
    "ex1": {
        "name": "ex1", "dim": 4, "kind": "riemannian",
        "metric": _diag(["x2*x3", "1", "1", "1"]),
        "domain": ["x2", "x3"],
        "box": {"x": [[-1, 1], [0.5, 2], [0.5, 2], [-1, 1]], "y": [[-1, 1]] * 4},
    },
    "ex3": {
        "name": "ex3", "dim": 4, "kind": "riemannian",
        "metric": _diag(["x2", "x1", "x4", "x3"]),
        "domain": ["x1", "x2", "x3", "x4"],
        "box": {"x": [[0.5, 2]] * 4, "y": [[-1, 1]] * 4},
        "alternates": [{"name": "ex3-quartic", "F": _QUARTIC}],
    },
    "ex3-quartic": {
        "name": "ex3-quartic", "dim": 4, "kind": "finsler", "F": _QUARTIC,
        "domain": ["x1", "x2", "x3", "x4"],
        "box": {"x": [[0.5, 2]] * 4, "y": [[-1, 1]] * 4},
    },
    "ex4": {
        "name": "ex4", "dim": 2, "kind": "finsler", "F": _SHEN,
        "domain": ["1 - x1^2 - x2^2"],
        "box": {"x": [[-0.49, 0.49]] * 2, "y": [[-1, 1]] * 2},
    },
    "ex5": {
        "name": "ex5", "dim": 3, "kind": "finsler",
        "F": "sqrt(sqrt(y1^4 + x1*x2*y2^4 + y3^4) + y3^2)",
        "domain": ["x1", "x2"],
        "box": {"x": [[0.5, 2], [0.5, 2], [-1, 1]], "y": [[0.5, 1.5], [-1, 1], [-1, 1]]},
    },
    "sphere2": {
        "name": "sphere2", "dim": 2, "kind": "riemannian",
        "metric": _diag(["1", "sin(x1)^2"]),
        "domain": ["sin(x1)"],
        "box": {"x": [[0.6, 2.4], [-1, 1]], "y": [[-1, 1]] * 2},
    },
}

_DEFAULTS = {"samples": 50, "seed": 20240601, "analyses": ["all"], "loop_scales": [0.1, 0.3],
             "depth": 4}


def _ex2(n: int) -> dict:
    a = [0.5, 0.0] if n == 2 else _EX2_A[:n]
    return {
        "name": "ex2" if n == 2 else f"ex2-{n}", "dim": n, "kind": "riemannian",
        "metric": example2_metric(a),
        "domain": ["1 + " + " + ".join(f"{_fmt(v)}*x{i + 1}" for i, v in enumerate(a))],
        "box": {"x": [[-0.3, 0.3]] * n, "y": [[-1, 1]] * n},
        "parameters": {"a": a},
    }


def _euclidean(n: int) -> dict:
    return {
        "name": f"euclidean-{n}", "dim": n, "kind": "riemannian",
        "metric": _diag(["1"] * n), "domain": [],
        "box": {"x": [[-1, 1]] * n, "y": [[-1, 1]] * n},
    }


def catalog_names() -> list[str]:
    return sorted(CATALOG) + ["ex2", "ex2-3", "euclidean-2", "euclidean-3", "euclidean-4"]


def catalog_dict(name: str) -> dict:
    """Config dictionary for a catalog entry (``ex2-<n>`` and ``euclidean-<n>`` take a dimension)."""
    if name in CATALOG:
        entry = copy.deepcopy(CATALOG[name])
    elif name == "ex2" or re.fullmatch(r"ex2-[2-4]", name):
        entry = _ex2(2 if name == "ex2" else int(name[4:]))
    elif m := re.fullmatch(r"euclidean-(\d+)", name):
        n = int(m.group(1))
        if n < 2:
            raise KeyError(f"unknown catalog entry {name!r}")
        entry = _euclidean(n)
    else:
        raise KeyError(f"unknown catalog entry {name!r}; known: {', '.join(catalog_names())}")
    for k, v in _DEFAULTS.items():
        entry.setdefault(k, copy.deepcopy(v))
    return entry
