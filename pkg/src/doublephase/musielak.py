"""Double phase modulars and Luxemburg norms of P1 fields.

The modular of a nodal field u is the integral of |u|^p(x) + mu(x)|u|^q(x)
over the P1 interpolant; the Luxemburg norm is the unique lam > 0 with
modular(u / lam) = 1, found by doubling/halving from lam = 1 and bisection.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ExponentData
from .mesh import Mesh, eval_at_quadrature, eval_on_boundary

__all__ = [
    "NORM_TOL", "NormValue", "RelationReport",
    "modular", "gradient_modular", "boundary_modular",
    "luxemburg_norm", "gradient_norm", "boundary_norm",
    "check_norm_modular_relations", "sobolev_norm", "product_norm",
]

NORM_TOL = 1e-10


@dataclass(frozen=True)
class NormValue:
    value: float
    bisection_residual: float = 0.0

    def __float__(self):
        return self.value


def _phase(a, p, q, mu, scale=1.0):
    """|a/scale|^p + mu |a/scale|^q for nonnegative a."""
    t = a / scale
    return t ** p + mu * t ** q


class _Integrand:
    """Magnitudes and exponents at integration points, with their weights."""

    def __init__(self, magnitude, p, q, mu, weights):
        self.a = np.abs(np.ravel(magnitude))
        self.p = np.ravel(p)
        self.q = np.ravel(q)
        self.mu = np.ravel(mu)
        self.w = np.ravel(weights)

    def rho(self, scale=1.0):
        return float(self.w @ _phase(self.a, self.p, self.q, self.mu, scale))


def _bulk(u, data, mesh):
    s = data.sample(mesh)
    vals, _ = eval_at_quadrature(u, mesh)
    w = mesh.volumes[:, None] * mesh.qweights[None, :]
    return _Integrand(vals, s.p, s.q, s.mu, w)


def _grad(u, data, mesh):
    s = data.sample(mesh)
    _, g = eval_at_quadrature(u, mesh)
    mag = np.broadcast_to(np.linalg.norm(g, axis=1)[:, None], s.p.shape)
    w = mesh.volumes[:, None] * mesh.qweights[None, :]
    return _Integrand(mag, s.p, s.q, s.mu, w)


def _boundary(u, data, mesh):
    s = data.sample(mesh)
    vals = eval_on_boundary(u, mesh)
    w = mesh.facet_measures[:, None] * mesh.fweights[None, :]
    return _Integrand(vals, s.p_boundary, s.q_boundary, s.mu_boundary, w)


def modular(u, data: ExponentData, mesh: Mesh) -> float:
    return _bulk(u, data, mesh).rho()


def gradient_modular(u, data: ExponentData, mesh: Mesh) -> float:
    """Modular of |grad u| (cell-wise constant for P1)."""
    return _grad(u, data, mesh).rho()


def boundary_modular(u, data: ExponentData, mesh: Mesh) -> float:
    """Modular of the trace of u over the boundary facets (endpoint sum in 1D)."""
    return _boundary(u, data, mesh).rho()


def _luxemburg(integrand: _Integrand, tol=NORM_TOL, max_iter=2000) -> NormValue:
    if not np.any(integrand.a * integrand.w):
        return NormValue(0.0, 0.0)
    lam = 1.0
    r = integrand.rho(lam)
    if r == 1.0:
        return NormValue(lam, 0.0)
    if r > 1.0:
        lo, hi = lam, 2.0 * lam
        while integrand.rho(hi) > 1.0:
            lo, hi = hi, 2.0 * hi
    else:
        lo, hi = 0.5 * lam, lam
        while integrand.rho(lo) < 1.0:
            lo, hi = 0.5 * lo, lo
    # rho(u/lam) is strictly decreasing in lam: rho(lo) >= 1 >= rho(hi)
    best, best_res = hi, integrand.rho(hi) - 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        res = integrand.rho(mid) - 1.0
        if abs(res) < abs(best_res):
            best, best_res = mid, res
        if abs(res) <= tol or mid in (lo, hi) or res == 0.0:
            break
        if res > 0:
            lo = mid
        else:
            hi = mid
    return NormValue(best, best_res)


def luxemburg_norm(u, data: ExponentData, mesh: Mesh, tol: float = NORM_TOL) -> NormValue:
    return _luxemburg(_bulk(u, data, mesh), tol)


def gradient_norm(u, data: ExponentData, mesh: Mesh, tol: float = NORM_TOL) -> NormValue:
    return _luxemburg(_grad(u, data, mesh), tol)


def boundary_norm(u, data: ExponentData, mesh: Mesh, tol: float = NORM_TOL) -> NormValue:
    return _luxemburg(_boundary(u, data, mesh), tol)


def sobolev_norm(u, data: ExponentData, mesh: Mesh) -> float:
    """||grad u|| + ||u|| in the Musielak-Orlicz Sobolev space."""
    return gradient_norm(u, data, mesh).value + luxemburg_norm(u, data, mesh).value


def product_norm(components, datas, mesh: Mesh, kind="lebesgue") -> float:
    """Sum of component norms; ``kind`` is "lebesgue" or "sobolev"."""
    f = luxemburg_norm if kind == "lebesgue" else sobolev_norm
    return float(sum(float(f(u, d, mesh)) for u, d in zip(components, datas)))


@dataclass(frozen=True)
class RelationReport:
    norm: float
    modular: float
    unit_residual: float      # rho(u/||u||) - 1
    p_minus: float
    q_plus: float
    unit_ok: bool
    sign_ok: bool
    below_one_ok: bool        # vacuously True when ||u|| >= 1
    above_one_ok: bool        # vacuously True when ||u|| <= 1

    @property
    def ok(self):
        return self.unit_ok and self.sign_ok and self.below_one_ok and self.above_one_ok

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"ok": self.ok}


def check_norm_modular_relations(u, data: ExponentData, mesh: Mesh,
                                 slack: float = NORM_TOL,
                                 unit_tol: float = NORM_TOL) -> RelationReport:
    """Check the norm-modular relations for a nonzero field.

    * rho(u/||u||) = 1 within ``unit_tol``;
    * ||u|| - 1 and rho(u) - 1 have the same sign;
    * ||u|| < 1  implies ||u||^q+ <= rho(u) <= ||u||^p-;
    * ||u|| > 1  implies ||u||^p- <= rho(u) <= ||u||^q+;

    the last three up to ``slack``.
    """
    integrand = _bulk(u, data, mesh)
    # bisect to machine precision: equality cases (mu = 0, constant p) leave
    # no room for the 1e-10 default once the modular is large
    nv = _luxemburg(integrand, tol=0.0)
    if nv.value == 0.0:
        raise ValueError("relations are stated for nonzero fields")
    lam, rho = nv.value, integrand.rho()
    b = data.sample(mesh)
    pm, qp = b.p_minus, b.q_plus
    dn, dr = lam - 1.0, rho - 1.0
    sign_ok = bool(np.sign(dn) == np.sign(dr) or min(abs(dn), abs(dr)) <= slack)
    below = above = True
    if lam < 1.0:
        below = lam ** qp - slack <= rho <= lam ** pm + slack
    if lam > 1.0:
        above = lam ** pm - slack <= rho <= lam ** qp + slack
    unit_res = integrand.rho(lam) - 1.0
    return RelationReport(lam, rho, unit_res, pm, qp, abs(unit_res) <= unit_tol,
                          sign_ok, bool(below), bool(above))
