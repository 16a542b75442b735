import numpy as np
import pytest

from doublephase.fields import ExponentData, as_field, compile_field, validate_h1
from doublephase.mesh import build_interval_mesh


def test_constant_and_expression_fields(mesh2d):
    c = as_field(1.5)
    assert c.kind == "constant" and c(0.3, 0.7) == 1.5
    f = compile_field("1.5 + 0.2*x1*x2")
    assert f.kind == "expression"
    P = mesh2d.vertices
    assert np.allclose(f.evaluate(P), 1.5 + 0.2 * P[:, 0] * P[:, 1], atol=1e-15)
    # constant expressions are detected
    assert compile_field("2*pi").kind == "constant"


def test_field_rejects_state_variables():
    with pytest.raises(Exception):
        compile_field("s1 + 1")


def test_1d_fields_ignore_x2(mesh1d):
    f = compile_field("x1 + x2")
    assert np.allclose(f.evaluate(mesh1d.vertices), mesh1d.vertices[:, 0])


def test_sample_bounds(mesh2d):
    d = ExponentData("1.2 + 0.3*x1", "1.7 + 0.1*x2", 1.0, dim=2)
    b = d.bounds(mesh2d)
    assert b["p_minus"] == pytest.approx(1.2) and b["p_plus"] == pytest.approx(1.5)
    assert b["q_minus"] == pytest.approx(1.7) and b["q_plus"] == pytest.approx(1.8)
    assert d.sample(mesh2d) is d.sample(mesh2d)
    assert d.sample(mesh2d).p.shape == mesh2d.qpoints.shape[:2]


def test_validate_clean_2d(mesh2d):
    rep = validate_h1(ExponentData(1.5, 1.8, "1 + x1", dim=2), mesh2d)
    assert rep.ok and not rep.notes


@pytest.mark.parametrize("p,q,mu,cond", [
    (1.5, 1.5, 1.0, "q <= p"),
    (1.0, 1.5, 1.0, "p <= 1"),
    (1.5, 1.8, "x1 - 0.5", "mu < 0"),
    (2.0, 2.5, 1.0, "p >= N"),
    (1.5, 6.5, 1.0, "q >= p*"),            # p* = 6 for p = 1.5, N = 2
])
def test_validate_violations(mesh2d, p, q, mu, cond):
    rep = validate_h1(ExponentData(p, q, mu, dim=2), mesh2d)
    assert not rep.ok
    assert cond in [v.condition for v in rep.violations]


def test_validate_1d_relaxation():
    m = build_interval_mesh(0.0, 1.0, 16)
    rep = validate_h1(ExponentData(3.0, 7.0, 1.0, dim=1), m)
    assert rep.ok
    assert any("1D relaxation" in n for n in rep.notes)
