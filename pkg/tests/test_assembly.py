import numpy as np
import pytest

from doublephase.assembly import (
    AssemblyError, ExpressionFailure, ProblemSpec, SystemState, apply_operator, apply_penalty,
    apply_reaction, boundary_vectors, check_growth, operator_jacobian, penalty_jacobian,
    reaction_derivatives, reaction_vectors, stiffness_matrix, to_triplets, truncate,
    truncation_mask, weak_residual,
)
from doublephase.fields import ExponentData
from doublephase.mesh import build_interval_mesh, build_rectangle_mesh, interpolate
from doublephase.region import TrappingRegion


def cotangent_stiffness(mesh):
    """Dense P1 stiffness from the cotangent formula (2D) or 1/h stencil (1D)."""
    n = mesh.n_vertices
    K = np.zeros((n, n))
    for cell in mesh.cells:
        P = mesh.vertices[cell]
        if mesh.dim == 1:
            h = P[1, 0] - P[0, 0]
            loc = np.array([[1, -1], [-1, 1]]) / h
        else:
            loc = np.zeros((3, 3))
            for a in range(3):
                b, c = (a + 1) % 3, (a + 2) % 3
                # angle at vertex a is opposite edge (b, c)
                u, v = P[b] - P[a], P[c] - P[a]
                cot = np.dot(u, v) / abs(u[0] * v[1] - u[1] * v[0])
                loc[b, c] = loc[c, b] = -0.5 * cot
            loc[np.diag_indices(3)] = -loc.sum(axis=1)
        K[np.ix_(cell, cell)] += loc
    return K


@pytest.mark.parametrize("mesh", [build_interval_mesh(0, 1, 10), build_rectangle_mesh(1.5, 1, 5, 4)])
def test_stiffness_oracle(mesh):
    K = stiffness_matrix(mesh).toarray()
    assert np.allclose(K, cotangent_stiffness(mesh), rtol=0, atol=1e-12)
    assert np.allclose(K, K.T, atol=1e-14)
    assert np.allclose(K.sum(axis=1), 0, atol=1e-12)


def test_linear_operator_is_stiffness(small2d):
    rng = np.random.default_rng(1)
    u = rng.standard_normal(small2d.n_vertices)
    d = ExponentData(2.0, 3.0, 0.0, dim=2)
    r = apply_operator(u, d, small2d)
    Ku = cotangent_stiffness(small2d) @ u
    assert np.linalg.norm(r - Ku) <= 1e-12 * np.linalg.norm(Ku)


@pytest.mark.parametrize("data", [
    ExponentData(1.5, 1.8, 1.0, dim=2),
    ExponentData("1.3 + 0.4*x1", "2.5 + 0.2*x2", "x1 + x2", dim=2),
    ExponentData(3.0, 3.5, 0.0, dim=2),
])
def test_jacobian_fd(small2d, data):
    rng = np.random.default_rng(2)
    u = rng.standard_normal(small2d.n_vertices)
    J = operator_jacobian(u, data, small2d)
    for _ in range(5):
        d = rng.standard_normal(small2d.n_vertices)
        h = 1e-6
        fd = (apply_operator(u + h * d, data, small2d) - apply_operator(u - h * d, data, small2d)) / (2 * h)
        assert np.linalg.norm(J @ d - fd) <= 1e-5 * np.linalg.norm(fd)


def test_monotone(small2d):
    rng = np.random.default_rng(3)
    d = ExponentData("1.3 + 0.4*x1", "2.0 + 0.3*x2", 1.0, dim=2)
    for _ in range(20):
        u, v = rng.standard_normal((2, small2d.n_vertices))
        val = (apply_operator(u, d, small2d) - apply_operator(v, d, small2d)) @ (u - v)
        assert val >= -1e-12


def test_truncation():
    lo, hi = np.zeros(4), np.ones(4)
    u = np.array([-1.0, 0.5, 2.0, 1.0])
    assert np.array_equal(truncate(u, lo, hi), [0.0, 0.5, 1.0, 1.0])
    assert np.array_equal(truncation_mask(u, lo, hi), [0.0, 1.0, 0.0, 1.0])
    with pytest.raises(AssemblyError):
        truncate(u, hi, lo)


def test_penalty(small2d):
    d = ExponentData(1.5, 2.5, 1.0, dim=2)
    n = small2d.n_vertices
    lo, hi = np.zeros(n), np.ones(n)
    inside = np.full(n, 0.5)
    assert np.all(apply_penalty(inside, lo, hi, d, small2d) == 0)
    above = np.full(n, 3.0)
    b = apply_penalty(above, lo, hi, d, small2d)
    # b = 2^(q-1) everywhere, tested against hat functions
    assert b.sum() == pytest.approx(2 ** 1.5, rel=1e-12)
    below = np.full(n, -2.0)
    assert apply_penalty(below, lo, hi, d, small2d).sum() == pytest.approx(-(2 ** 1.5), rel=1e-12)
    # Jacobian against central differences, away from the kink
    rng = np.random.default_rng(4)
    u = 2.0 + rng.random(n)
    J = penalty_jacobian(u, lo, hi, d, small2d)
    dv = rng.standard_normal(n)
    h = 1e-6
    fd = (apply_penalty(u + h * dv, lo, hi, d, small2d) - apply_penalty(u - h * dv, lo, hi, d, small2d)) / (2 * h)
    assert np.linalg.norm(J @ dv - fd) <= 1e-6 * np.linalg.norm(fd)


def neumann_spec(mesh, f=("1", "0"), g=("0", "0")):
    d = ExponentData(1.5, 1.8, 1.0, dim=mesh.dim)
    return ProblemSpec(mesh, "neumann_nonlinear", (d, d), f, g)


def test_reaction_vectors(small2d):
    spec = neumann_spec(small2d, f=("1", "s1 + g2"), g=("2", "s2"))
    u1 = interpolate(lambda P: P[:, 0], small2d)
    u2 = interpolate(lambda P: 3 * P[:, 1], small2d)
    F1, F2 = reaction_vectors(spec, u1, u2)
    assert F1.sum() == pytest.approx(1.0, rel=1e-13)
    # int (x + 3) dx over the unit square
    assert F2.sum() == pytest.approx(0.5 + 3.0, rel=1e-13)
    G1, G2 = boundary_vectors(spec, u1, u2)
    assert G1.sum() == pytest.approx(8.0, rel=1e-13)
    assert G2.sum() == pytest.approx(3 * 2.0, rel=1e-13)   # int of 3y over the boundary
    # frozen gradients override |grad v|
    xi = (np.zeros(small2d.n_cells), np.full(small2d.n_cells, 5.0))
    _, F2f = reaction_vectors(spec, u1, u2, xi)
    assert F2f.sum() == pytest.approx(0.5 + 5.0, rel=1e-13)


def test_reaction_derivatives(small2d):
    spec = neumann_spec(small2d, f=("s1^2 + s2", "sin(s2)"))
    rng = np.random.default_rng(0)
    u1, u2 = rng.random((2, small2d.n_vertices))
    xi = (np.zeros(small2d.n_cells),) * 2
    d = reaction_derivatives(spec, u1, u2, xi)
    from doublephase.mesh import eval_at_quadrature
    s1, _ = eval_at_quadrature(u1, small2d)
    s2, _ = eval_at_quadrature(u2, small2d)
    assert np.allclose(d[0][0], 2 * s1, atol=1e-6)
    assert np.allclose(d[0][1], 1.0, atol=1e-6)
    assert np.allclose(d[1][0], 0.0, atol=1e-6)
    assert np.allclose(d[1][1], np.cos(s2), atol=1e-6)


def test_apply_reaction_truncates(small2d):
    spec = neumann_spec(small2d, f=("s1", "s2"))
    n = small2d.n_vertices
    region = TrappingRegion(SystemState(np.zeros(n), np.zeros(n)), SystemState(np.ones(n), np.ones(n)))
    F1, F2 = apply_reaction(SystemState(np.full(n, 5.0), np.full(n, -5.0)), spec, region)
    assert F1.sum() == pytest.approx(1.0, rel=1e-13) and F2.sum() == pytest.approx(0.0, abs=1e-14)


def test_expression_failure_location():
    m = build_interval_mesh(0, 1, 4)
    spec = neumann_spec(m, f=("log(s1)", "0"))
    u1 = m.vertices[:, 0].copy()
    u1[3:] = -1.0
    with pytest.raises(ExpressionFailure) as info:
        reaction_vectors(spec, u1, np.zeros(5))
    assert info.value.name == "f1"
    assert info.value.point[0] > 0.5


def test_spec_errors(small2d):
    d = ExponentData(1.5, 1.8, 1.0, dim=2)
    with pytest.raises(ValueError):
        ProblemSpec(small2d, "robin", (d, d), ("0", "0"))
    with pytest.raises(ValueError):
        ProblemSpec(small2d, "neumann_nonlinear", (d, d), ("0", "0"), ("g1", "0"))
    with pytest.raises(ValueError):
        ProblemSpec(small2d, "dirichlet_zero", (d, d), ("0", "0"), ("1", "0"))
    spec = ProblemSpec(small2d, "dirichlet_zero", (d, d), ("0", "0"))
    with pytest.raises(AssemblyError):
        boundary_vectors(spec, np.zeros(49), np.zeros(49))
    assert len(spec.free_nodes()) == 25


def test_weak_residual_poisson_1d():
    m = build_interval_mesh(0, 1, 16)
    d = ExponentData(2.0, 2.0, 0.0, dim=1)
    spec = ProblemSpec(m, "dirichlet_zero", (d, d), ("1", "2"))
    x = m.vertices[:, 0]
    # P1 nodal interpolant of the exact solution is the discrete solution in 1D
    state = SystemState(x * (1 - x) / 2, x * (1 - x))
    r1, r2 = weak_residual(state, spec)
    assert np.max(np.abs(r1)) < 1e-14 and np.max(np.abs(r2)) < 1e-14


def test_growth_diagnostic(small2d):
    d = ExponentData(1.5, 1.8, 1.0, dim=2)
    spec = ProblemSpec(small2d, "neumann_nonlinear", (d, d), ("1 + g1^0.5", "10"),
                       phi=(1.0, 1.0), c=(1.0, 1.0))
    rng = np.random.default_rng(0)
    st = SystemState(*rng.random((2, small2d.n_vertices)))
    findings = check_growth(spec, [st])
    assert len(findings) == 1 and findings[0].startswith("|f2|")


def test_triplets(small2d):
    r, c, v = to_triplets(stiffness_matrix(small2d))
    assert np.all(np.diff(r) >= 0) and len(r) == len(v)
