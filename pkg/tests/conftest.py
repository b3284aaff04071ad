import functools

import numpy as np
import pytest

from finslab.catalog import catalog_dict
from finslab.config import base_point, config_from_dict, draw_samples
from finslab.runner import run

RIEMANNIAN = ["ex1", "ex2", "ex2-3", "ex3", "sphere2", "euclidean-3"]
FINSLER = ["ex3-quartic", "ex4", "ex5"]
CATALOG = RIEMANNIAN + FINSLER


@functools.lru_cache(maxsize=None)
def cfg(name: str):
    return config_from_dict(catalog_dict(name))


@functools.lru_cache(maxsize=None)
def _samples(name: str, count: int, stream: int):
    return tuple(draw_samples(cfg(name), count, stream=stream))


def samples(name: str, count: int = 50, stream: int = 0):
    return list(_samples(name, count, stream))


def arrays(name: str, count: int = 50, stream: int = 0):
    s = samples(name, count, stream)
    return np.array([t.x for t in s]), np.array([t.y for t in s])


@functools.lru_cache(maxsize=None)
def report(name: str):
    return run(cfg(name)).to_dict()


def x0(name: str):
    return base_point(cfg(name))


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    def record(number: int, ok: bool, detail: str = ""):
        prev_ok, prev = _CRITERIA.get(number, (True, ""))
        _CRITERIA[number] = (prev_ok and bool(ok), f"{prev}; {detail}" if prev else detail)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
