import math

import numpy as np
import pytest

from doublephase.assembly import ProblemSpec, SystemState
from doublephase.fields import ExponentData
from doublephase.mesh import build_interval_mesh, build_rectangle_mesh
from doublephase.region import RegionError, TrappingRegion
from doublephase.trapping import (
    BracketError, LadderError, SamplingPolicy, constant_region, dirichlet_bracket,
    enumerate_bands, multi_solve, verify_pair,
)

PI = math.pi
EXAMPLE_F = ("sin(s1) + 0.5*cos(s2) + g1^0.5 + atan(g2)/pi",
             "0.5*sin(s1) + cos(s2) + atan(g1)/pi + g2^0.5")
EXAMPLE_G = ("sin(s1) + 0.5*cos(s2) + 0.25", "0.5*sin(s1) + cos(s2) + 0.25")
LADDER = {"h1": "pi/2 + 2*pi*n", "k1": "3*pi/2 + 2*pi*n", "h2": "2*pi*n", "k2": "pi + 2*pi*n"}


@pytest.fixture(scope="module")
def example():
    m = build_rectangle_mesh(1, 1, 8, 8)
    d = ExponentData(1.5, 1.8, 1.0, dim=2)
    return ProblemSpec(m, "neumann_nonlinear", (d, d), EXAMPLE_F, EXAMPLE_G)


def test_constant_region_errors():
    m = build_interval_mesh(0, 1, 4)
    with pytest.raises(RegionError, match="component 2"):
        constant_region((0, 2), (1, 1), m)
    with pytest.raises(RegionError, match="Dirichlet"):
        constant_region((0.5, 0), (1, 1), m, dirichlet=True)


def test_region_methods():
    m = build_interval_mesh(0, 1, 4)
    r = TrappingRegion(SystemState.constant(m, -1, -2), SystemState.constant(m, 3, 2), m.boundary_nodes)
    mid = r.midpoint()
    assert mid.u1[2] == 1.0 and mid.u1[0] == 0.0 and mid.u1[-1] == 0.0
    assert r.contains(mid) and not r.contains(SystemState.constant(m, 4, 0))
    assert r.contains(SystemState.constant(m, 3 + 1e-9, 0), tol=1e-8)


def test_bands_formulas():
    lad = enumerate_bands(LADDER, 3)
    assert len(lad) == 4 and lad.directions == ("increasing", "increasing")
    (h, k) = lad.bands[2]
    assert h == pytest.approx((PI / 2 + 4 * PI, 4 * PI)) and k == pytest.approx((3 * PI / 2 + 4 * PI, 5 * PI))
    assert lad.separation(0, 0) == pytest.approx(PI) and lad.separation(0, 1) == pytest.approx(PI)


def test_bands_lists_and_decreasing():
    lad = enumerate_bands({"h1": [0, -3], "k1": [1, -2], "h2": [0, 2], "k2": [1, 3]}, 1)
    assert lad.directions == ("decreasing", "increasing")
    assert lad.separation(0, 0) == pytest.approx(2.0)
    assert len(enumerate_bands(LADDER, -1)) == 0


@pytest.mark.parametrize("spec,n_max,match", [
    ({"h1": [0, 1], "k1": [2, 3], "h2": [0, 5], "k2": [1, 6]}, 1, "not strictly separated"),
    ({"h1": [0, 2, -5], "k1": [1, 3, -4], "h2": "3*n", "k2": "3*n + 1"}, 2, "direction"),
    ({"h1": [2], "k1": [1], "h2": [0], "k2": [1]}, 0, "h = 2"),
    ({"h1": [0], "k1": [1], "h2": [0]}, 0, "missing"),
    ({"h1": [0], "k1": [1], "h2": [0], "k2": [1]}, 1, "values given"),
])
def test_bands_errors(spec, n_max, match):
    with pytest.raises(LadderError, match=match):
        enumerate_bands(spec, n_max)


def test_verify_example_band(example):
    lad = enumerate_bands(LADDER, 1)
    for h, k in lad:
        rep = verify_pair(constant_region(h, k, example.mesh), example)
        assert rep.passed, rep.violations
        assert rep.structure == "constant-band" and "heuristic" in rep.note
        assert rep.n_states == 11


def test_verify_detects_bad_band(example):
    # shifting the first component by pi flips the sign of sin(s1)
    rep = verify_pair(constant_region((3 * PI / 2, 0), (5 * PI / 2, PI), example.mesh), example)
    assert not rep.passed
    v = rep.violations[0]
    assert v["component"] == 1 and v["inequality"] in ("sub", "super")
    assert len(v["point"]) == 2


def test_verify_exact_solution_is_both():
    # the discrete solution is a sub- and a supersolution at once
    m = build_interval_mesh(0, 1, 16)
    d = ExponentData(2.0, 2.0, 0.0, dim=1)
    spec = ProblemSpec(m, "dirichlet_zero", (d, d), ("1", "1"))
    x = m.vertices[:, 0]
    u = SystemState(x * (1 - x) / 2, x * (1 - x) / 2)
    rep = verify_pair(TrappingRegion(u, u, m.boundary_nodes), spec, SamplingPolicy(2, seed=1))
    assert rep.passed and rep.n_test_functions == 30


def test_sampling_is_seeded():
    m = build_interval_mesh(0, 1, 8)
    r = constant_region((0, 0), (1, 1), m)
    a = SamplingPolicy(3, seed=5).states(r)
    b = SamplingPolicy(3, seed=5).states(r)
    assert [s[0] for s in a] == ["lower", "upper", "midpoint", "random0", "random1", "random2"]
    assert all(np.array_equal(x[1].u1, y[1].u1) for x, y in zip(a, b))


def test_multi_solve_example(example):
    res = multi_solve(example, enumerate_bands(LADDER, 1))
    assert res.complete and len(res) == 2
    assert res.ordering_ok and res.distinct_ok
    (u0, _), (u1, _) = res
    assert np.all(u0.u1 <= u1.u1) and np.min(u1.u1 - u0.u1) > PI


def test_multi_solve_empty(example):
    res = multi_solve(example, enumerate_bands(LADDER, -1))
    assert list(res) == [] and res.complete


def test_multi_solve_partial(example):
    bad = {"h1": [PI / 2, 3 * PI / 2 + 2 * PI], "k1": [3 * PI / 2, 5 * PI / 2 + 2 * PI],
           "h2": [0, 2 * PI], "k2": [PI, 3 * PI]}
    res = multi_solve(example, enumerate_bands(bad, 1))
    assert not res.complete and res.failed_band == 1 and len(res) == 1
    assert "sub/supersolution" in res.error


def bracket_spec(n=32):
    m = build_interval_mesh(0, 1, n)
    d = ExponentData(1.6, 2.0, 1.0, dim=1)
    f = "min(max(1 + 0.25*sin(s1)*atan(g2), 0.5), 1.5)"
    return ProblemSpec(m, "dirichlet_zero", (d, d), (f, f))


def test_dirichlet_bracket():
    spec = bracket_spec()
    r = dirichlet_bracket(spec, (0.5, 0.5), (1.5, 1.5))
    assert r.dirichlet
    for k in range(2):
        assert np.all(r.lower[k] <= r.upper[k]) and r.lower[k].max() > 0
        assert np.all(r.lower[k] >= 0)
    assert verify_pair(r, spec).passed


@pytest.mark.parametrize("phi,psi,match", [
    ((-0.5, 0.5), (1, 1), "nonnegative"),
    ((2.0, 0.5), (1, 1), "exceed"),
    ((0.0, 0.5), (1, 1), "vanish"),
    (("x1 - 0.5", 0.5), (1, 1), "nonnegative"),
])
def test_bracket_preconditions(phi, psi, match):
    with pytest.raises(ValueError, match=match):
        dirichlet_bracket(bracket_spec(8), phi, psi)


def test_bracket_needs_dirichlet(example):
    with pytest.raises(ValueError):
        dirichlet_bracket(example, (1, 1), (2, 2))


def test_bracket_error_type():
    assert issubclass(BracketError, RuntimeError)


def test_bracket_linear_closed_form():
    m = build_interval_mesh(0, 1, 32)
    d = ExponentData(2.0, 2.0, 0.0, dim=1)
    spec = ProblemSpec(m, "dirichlet_zero", (d, d), ("1", "1"))
    r = dirichlet_bracket(spec, (1.0, 1.0), (2.0, 2.0))
    x = m.vertices[:, 0]
    assert np.max(np.abs(r.lower.u1 - x * (1 - x) / 2)) < 1e-12
    assert np.max(np.abs(r.upper.u2 - x * (1 - x))) < 1e-12


def test_bracket_equal_data_gives_equal_bounds():
    r = dirichlet_bracket(bracket_spec(16), (0.7, 0.7), (0.7, 0.7))
    assert np.array_equal(r.lower.u1, r.upper.u1) and np.array_equal(r.lower.u2, r.upper.u2)
