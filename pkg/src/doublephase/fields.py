"""Variable exponents, double phase weights, and the exponent hypothesis check."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as _expr
from .mesh import Mesh

__all__ = [
    "ScalarField", "compile_field", "as_field", "ExponentData", "SampledExponents",
    "Violation", "ValidationReport", "validate_h1",
]


@dataclass(frozen=True)
class ScalarField:
    """A scalar function of the spatial point, either constant or an expression in x1, x2."""

    source: str
    tree: object = field(repr=False, compare=False)
    constant: float | None = None

    @property
    def kind(self):
        return "constant" if self.constant is not None else "expression"

    def evaluate(self, points):
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        if self.constant is not None:
            return np.full(shape, self.constant)
        dim = points.shape[-1]
        env = {"x1": points[..., 0],
               "x2": points[..., 1] if dim > 1 else np.zeros(shape)}
        out = _expr.evaluate(self.tree, env)
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def __call__(self, *coords):
        return self.evaluate(np.array(coords, dtype=float)).item()


def compile_field(source: str) -> ScalarField:
    """Compile an expression in x1, x2 into a :class:`ScalarField`.

    >>> compile_field("1.5 + 0.2*x1")(1.0)
    1.7
    """
    if not isinstance(source, str) or not source.strip():
        raise ValueError("field source must be a non-empty string")
    tree = _expr.parse(source, _expr.SPACE_VARS)
    const = None
    if not _expr.free_variables(tree):
        const = float(_expr.evaluate(tree, {}))
    return ScalarField(source, tree, const)


def as_field(value) -> ScalarField:
    if isinstance(value, ScalarField):
        return value
    if isinstance(value, (int, float, np.floating, np.integer)):
        return compile_field(repr(float(value)))
    return compile_field(str(value))


@dataclass(frozen=True)
class SampledExponents:
    """p, q, mu evaluated at the cell and facet quadrature points of one mesh."""

    p: np.ndarray
    q: np.ndarray
    mu: np.ndarray
    p_boundary: np.ndarray
    q_boundary: np.ndarray
    mu_boundary: np.ndarray
    p_minus: float
    p_plus: float
    q_minus: float
    q_plus: float


class ExponentData:
    """Exponents p(x) < q(x) and weight mu(x) >= 0 of one double phase component.

    Construction never rejects data; use :func:`validate_h1` to check the
    hypotheses. Samples on a mesh are cached per mesh object.
    """

    def __init__(self, p, q, mu, dim: int):
        if int(dim) != dim or dim < 1:
            raise ValueError("dimension must be a positive integer")
        self.p = as_field(p)
        self.q = as_field(q)
        self.mu = as_field(mu)
        self.dim = int(dim)
        self._cache = {}

    def __repr__(self):
        return (f"ExponentData(p={self.p.source!r}, q={self.q.source!r}, "
                f"mu={self.mu.source!r}, dim={self.dim})")

    def sample(self, mesh: Mesh) -> SampledExponents:
        hit = self._cache.get(id(mesh))
        if hit is not None and hit[0] is mesh:
            return hit[1]
        if mesh.dim > self.dim:
            raise ValueError(f"mesh dimension {mesh.dim} exceeds data dimension {self.dim}")
        pts = mesh.sample_points()
        p_all, q_all = self.p.evaluate(pts), self.q.evaluate(pts)
        s = SampledExponents(
            p=self.p.evaluate(mesh.qpoints), q=self.q.evaluate(mesh.qpoints),
            mu=self.mu.evaluate(mesh.qpoints),
            p_boundary=self.p.evaluate(mesh.fpoints), q_boundary=self.q.evaluate(mesh.fpoints),
            mu_boundary=self.mu.evaluate(mesh.fpoints),
            p_minus=float(p_all.min()), p_plus=float(p_all.max()),
            q_minus=float(q_all.min()), q_plus=float(q_all.max()),
        )
        self._cache[id(mesh)] = (mesh, s)
        return s

    def bounds(self, mesh: Mesh) -> dict:
        s = self.sample(mesh)
        return {"p_minus": s.p_minus, "p_plus": s.p_plus,
                "q_minus": s.q_minus, "q_plus": s.q_plus}


@dataclass(frozen=True)
class Violation:
    condition: str
    point: tuple
    value: float
    count: int

    def __str__(self):
        pt = ", ".join(f"{c:.6g}" for c in self.point)
        return f"{self.condition} at ({pt}) [value {self.value:.6g}; {self.count} point(s)]"


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def as_dict(self):
        return {"ok": self.ok, "violations": [str(v) for v in self.violations],
                "notes": list(self.notes)}


def validate_h1(data: ExponentData, mesh: Mesh) -> ValidationReport:
    """Check 1 < p < N, p < q < N p/(N - p) and mu >= 0 on every sample point.

    Sample points are the cell and facet quadrature points and the vertices.
    For N = 1 the critical exponent is taken as +inf and p < N is not
    required; the report carries a "1D relaxation" note instead.
    """
    report = ValidationReport()
    pts = mesh.sample_points()
    p, q, mu = data.p.evaluate(pts), data.q.evaluate(pts), data.mu.evaluate(pts)
    N = data.dim

    def check(condition, bad, margin):
        bad = bad | np.isnan(margin)
        if np.any(bad):
            idx = np.flatnonzero(bad)
            worst = idx[np.argmin(np.nan_to_num(margin[idx], nan=-np.inf))]
            report.violations.append(Violation(condition, tuple(pts[worst]),
                                               float(margin[worst]), int(len(idx))))

    check("p <= 1", p <= 1, p - 1)
    check("mu < 0", mu < 0, mu)
    check("q <= p", q <= p, q - p)
    if N >= 2:
        check("p >= N", p >= N, N - p)
        with np.errstate(divide="ignore", invalid="ignore"):
            p_star = np.where(p < N, N * p / (N - p), np.inf)
        check("q >= p*", (q >= p_star) & (p < N), p_star - q)
    else:
        report.notes.append("1D relaxation: critical exponent p* taken as +inf")
    return report
