import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays as np_arrays

from finslab.geometry import TangentSample, fundamental_tensor
from finslab.holonomy import holonomy_rank
from finslab.numerics import (
    IntegrationError, SingularMatrixError, SubspaceBasis, ToleranceConfig, intersect, invert,
    kernel, rank, rk4_path, span, subspace_distance,
)
from finslab.parallel import LoopSet, _riemann_blocks, loop_transport_maps

from conftest import cfg, samples, x0


# ---------------------------------------------------------------- tolerances

def test_tolerance_defaults_and_round_trip():
    t = ToleranceConfig()
    assert (t.rank_tol, t.fd_tol, t.ode_steps) == (1e-8, 1e-6, 2000)
    assert ToleranceConfig.from_dict(t.as_dict()) == t


@pytest.mark.parametrize("bad", [{"rank_tol": 0}, {"fd_tol": -1}, {"ode_steps": 0}, {"other": 1}])
def test_tolerance_rejects_bad_values(bad):
    with pytest.raises(ValueError):
        ToleranceConfig.from_dict(bad)


# ---------------------------------------------------------------- invert

def test_invert_identity_and_diagonal():
    assert np.array_equal(invert(np.eye(3)), np.eye(3))
    assert np.allclose(invert(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]), atol=0, rtol=1e-15)


def test_invert_example1_metric():
    g, _ = fundamental_tensor(cfg("ex1").spec,
                              TangentSample(np.array([0.3, 1.0, 2.0, -0.1]), np.array([1.0, 0.5, 0, 0])))
    assert np.allclose(g, np.diag([2.0, 1, 1, 1]), atol=1e-14)
    assert np.allclose(invert(g), np.diag([0.5, 1, 1, 1]), atol=1e-14)


@pytest.mark.parametrize("m", [np.zeros((2, 2)), np.array([[1.0, 2.0], [2.0, 4.0]]),
                               np.array([[1.0, 0.0], [0.0, 1e-14]])])
def test_invert_singular(m):
    with pytest.raises(SingularMatrixError):
        invert(m)


@settings(max_examples=100, deadline=None)
@given(np_arrays(float, (4, 4), elements=st.floats(-3, 3)))
def test_invert_is_inverse_when_well_conditioned(a):
    m = a + 8 * np.eye(4)  # diagonally dominant, condition number well below 1e8
    assert np.max(np.abs(m @ invert(m) - np.eye(4))) <= 1e-10


# ---------------------------------------------------------------- kernel and rank

def test_kernel_of_zero_matrix_is_everything():
    k = kernel(np.zeros((2, 2)))
    assert k.dim == 2 and subspace_distance(k, np.eye(2)) <= 1e-15


def test_kernel_of_projection():
    k = kernel(np.array([[1.0, 0.0], [0.0, 0.0]]))
    assert k.dim == 1 and k.contains([0.0, 1.0])


def test_kernel_with_explicit_scale():
    m = np.diag([1e-10, 1.0])
    assert kernel(m).dim == 1
    assert kernel(m, scale=1e-9).dim == 0


def test_stacked_example1_curvature_constraints_have_2d_kernel():
    spec = cfg("ex1").spec
    x = x0("ex1")
    Ys = np.array([s.y for s in samples("ex1", 8, stream=2)])
    Rh, scale = _riemann_blocks(spec, x, Ys)
    rows = np.vstack([Rh[s].reshape(-1, 4) for s in range(Rh.shape[0])])
    assert kernel(rows, scale=scale).dim == 2


def test_rank_examples():
    assert rank([[1, 0], [0, 1], [1, 1]]) == 2
    assert rank([]) == 0
    assert rank([[0.0, 0.0]]) == 0


def test_example3_holonomy_rank_is_six():
    s = samples("ex3", 1)[0]
    assert holonomy_rank(cfg("ex3").spec, s, 3) == 6


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 5), st.integers(0, 5), st.integers(0, 10**6))
def test_rank_nullity(r, extra, seed):
    rng = np.random.default_rng(seed)
    n = r + extra
    m = rng.standard_normal((n + 2, r)) @ rng.standard_normal((r, n))
    assert rank(m) == r
    assert kernel(m).dim == n - r


def test_subspace_helpers():
    a = span([[1, 0, 0], [1, 1, 0]])
    b = SubspaceBasis(3, np.array([[0, 1.0, 0], [1.0, 0, 0]]))
    assert a.dim == 2 and subspace_distance(a, b) <= 1e-15
    c = span([[0, 1, 0], [0, 0, 1]])
    i = intersect([a, c])
    assert i.dim == 1 and i.contains([0, 1, 0])
    assert subspace_distance(a, c) == pytest.approx(1.0)


# ---------------------------------------------------------------- rk4

def test_rk4_zero_field():
    s0 = np.array([1.0, -2.0])
    assert np.array_equal(rk4_path(lambda t, s: 0 * s, 0.0, 1.0, s0), s0)


def test_rk4_exponential():
    assert abs(rk4_path(lambda t, s: s, 0.0, 1.0, np.array([1.0]))[0] - math.e) <= 1e-9


def test_rk4_step_count():
    calls = []
    rk4_path(lambda t, s: (calls.append(t), s)[1], 0.0, 0.5, np.array([1.0]), ode_steps=10)
    assert len(calls) == 4 * 5


def test_rk4_reports_blow_up_time():
    with pytest.raises(IntegrationError) as info:
        rk4_path(lambda t, s: s ** 2, 0.0, 2.0, np.array([1.0]), ode_steps=100)
    assert 0.9 <= info.value.t <= 2.0


def test_rk4_fourth_order_convergence():
    f = lambda t, s: np.array([s[1], -s[0]])
    exact = np.array([math.cos(1.0), -math.sin(1.0)])
    e1 = np.linalg.norm(rk4_path(f, 0, 1, [1.0, 0.0], 10) - exact)
    e2 = np.linalg.norm(rk4_path(f, 0, 1, [1.0, 0.0], 20) - exact)
    assert 14 < e1 / e2 < 18


def test_transport_around_degenerate_loop_is_identity():
    spec = cfg("ex3").spec
    x = x0("ex3")
    loops = LoopSet(x, [np.array([x, x, x])], ["point"])
    T, _ = loop_transport_maps(spec, loops)
    assert np.allclose(T[0], np.eye(4), atol=1e-15)
