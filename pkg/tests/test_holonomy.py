import numpy as np
import pytest

from finslab import expr as ex
from finslab.expr import ExpressionBudgetError
from finslab.geometry import MetricSpec, geometry
from finslab.holonomy import (
    TMVectorField, functional_independence, holonomy_rank, horizontal_frame, lie_bracket,
    metrizability_freedom,
)

from conftest import CATALOG, cfg, samples

ONES4 = (np.ones((1, 4)), np.ones((1, 4)))


def coord_field(n, m):
    return TMVectorField(tuple(ex.ONE if k == m else ex.ZERO for k in range(2 * n)), f"d{m}")


# ---------------------------------------------------------------- frame

def test_flat_frame_is_coordinate_frame():
    for i, h in enumerate(horizontal_frame(cfg("euclidean-3").spec)):
        assert all(c is (ex.ONE if k == i else ex.ZERO) for k, c in enumerate(h.components))


def test_example3_frame_matches_printed_spray():
    X = np.array([s.x for s in samples("ex3", 20)])
    Y = np.array([s.y for s in samples("ex3", 20)])
    h1 = horizontal_frame(cfg("ex3").spec)[0].evaluate(X, Y)
    # G^1 = y2 (2 y1 - y2) / (4 x2): -dG^1/dy1 = -y2 / (2 x2)
    assert np.max(np.abs(h1[:, 4] + Y[:, 1] / (2 * X[:, 1]))) <= 1e-13
    assert np.max(np.abs(h1[:, :4] - [1, 0, 0, 0])) == 0


def test_example1_frame_value():
    h1 = horizontal_frame(cfg("ex1").spec)[0]
    v = h1.evaluate(np.array([[0.0, 1.0, 2.0, 0.0]]), np.ones((1, 4)))[0]
    # G^2 = -x3 y1^2 / 4 gives N^2_1 = -x3 y1 / 2 = -1
    assert v[5] == pytest.approx(1.0, abs=1e-14)


# ---------------------------------------------------------------- brackets

def test_coordinate_fields_commute():
    assert lie_bracket(coord_field(2, 0), coord_field(2, 1)).is_zero


def test_example3_first_brackets():
    h = horizontal_frame(cfg("ex3").spec)
    h12 = lie_bracket(h[0], h[1]).evaluate(*ONES4)[0]
    assert np.allclose(h12, [0, 0, 0, 0, -0.5, 0.5, 0, 0], atol=1e-14)
    X = np.array([t.x for t in samples("ex3", 20)])
    Y = np.array([t.y for t in samples("ex3", 20)])
    for a, b in ((0, 2), (0, 3), (1, 2), (1, 3)):
        # zero up to rounding: the adjugate factors cancel only numerically
        assert np.max(np.abs(lie_bracket(h[a], h[b]).evaluate(X, Y))) <= 1e-14


def test_bracket_budget():
    h = horizontal_frame(cfg("ex5").spec)
    with pytest.raises(ExpressionBudgetError):
        lie_bracket(h[0], h[1], budget=5)


@pytest.mark.parametrize("name", CATALOG)
def test_first_bracket_is_curvature(name):
    spec = cfg(name).spec
    n = spec.dim
    s = samples(name, 20)
    X = np.array([t.x for t in s])
    Y = np.array([t.y for t in s])
    h = horizontal_frame(spec)
    R = geometry(spec).values("R", X, Y)
    for j in range(n):
        for k in range(j + 1, n):
            v = lie_bracket(h[j], h[k]).evaluate(X, Y)
            scale = max(1.0, np.max(np.abs(R)))
            assert np.max(np.abs(v[:, :n])) <= 1e-12
            assert np.max(np.abs(v[:, n:] - R[:, :, j, k])) <= 1e-8 * scale


# ---------------------------------------------------------------- rank

def test_flat_rank_is_n():
    s = samples("euclidean-3", 1)[0]
    for d in (1, 2, 3):
        assert holonomy_rank(cfg("euclidean-3").spec, s, d) == 3


def test_example3_rank():
    s = samples("ex3", 1)[0]
    assert holonomy_rank(cfg("ex3").spec, s, 2) == 6
    assert holonomy_rank(cfg("ex3").spec, s, 4) == 6


def test_sphere_rank():
    s = samples("sphere2", 1)[0]
    assert holonomy_rank(cfg("sphere2").spec, s, 2) == 3


def test_rank_needs_depth():
    with pytest.raises(ValueError):
        holonomy_rank(cfg("ex3").spec, samples("ex3", 1)[0], 0)


# ---------------------------------------------------------------- freedom

@pytest.fixture(scope="module")
def freedom():
    return {name: metrizability_freedom(cfg(name).spec, samples(name, 10), 4)
            for name in ("ex1", "ex2", "ex3", "ex4", "ex5", "sphere2", "euclidean-2")}


def test_example3_freedom(freedom):
    r = freedom["ex3"]
    assert r.mu_s == 2 and r.stabilized
    assert r.stable_depth is not None and r.stable_depth <= 3


def test_sphere_freedom(freedom):
    assert freedom["sphere2"].mu_s == 1


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex5", "euclidean-2"])
def test_parallel_form_implies_freedom_at_least_two(freedom, name):
    assert freedom[name].mu_s >= 2


def test_shen_freedom_is_reported(freedom):
    r = freedom["ex4"]
    assert r.mu_s == 2 * 2 - r.max_rank


@pytest.mark.parametrize("name", ["ex1", "ex2", "ex3", "ex4", "ex5", "sphere2", "euclidean-2"])
def test_rank_is_monotone_and_at_least_n(freedom, name):
    r = freedom[name]
    n = cfg(name).dim
    by = np.array(r.rank_by_depth)
    assert np.all(np.diff(by, axis=0) >= 0)
    assert min(r.rank_per_sample) >= n
    assert r.as_dict()["mu_s"] == r.mu_s


def test_freedom_needs_samples():
    with pytest.raises(ValueError):
        metrizability_freedom(cfg("ex3").spec, samples("ex3", 5))


# ---------------------------------------------------------------- independence

def test_proportional_metrics_are_dependent():
    a = cfg("ex5").spec
    b = MetricSpec.finsler("twice", 3, "2*" + a.source["F"], a.source["domain"])
    assert not functional_independence(a, b, samples("ex5", 10))


def test_quartic_is_independent_of_alpha():
    assert functional_independence(cfg("ex3").spec, cfg("ex3-quartic").spec, samples("ex3", 10))


def test_randers_is_independent_of_alpha():
    a = cfg("ex1").spec
    b = MetricSpec.finsler("randers", 4, "sqrt(x2*x3*y1^2 + y2^2 + y3^2 + y4^2) + 0.5*y4",
                           a.source["domain"])
    assert functional_independence(a, b, samples("ex1", 10))
