"""Discrete operators of the penalized, truncated double phase system.

For a component with exponents p, q and weight mu the operator is

    <A(u), phi_j> = int a(x, |grad u|^2) grad u . grad phi_j dx,
    a(x, s) = (s + eps)^((p(x)-2)/2) + mu(x) (s + eps)^((q(x)-2)/2),

with eps = ``eps_reg`` (default 1e-10) regularizing p < 2. The cut-off
penalty, reaction and boundary terms are load vectors assembled at quadrature
points of P1 interpolants.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import expr as _expr
from .fields import ExponentData, as_field, validate_h1
from .mesh import Mesh, eval_at_quadrature, eval_on_boundary

__all__ = [
    "EPS_REG", "NEUMANN", "DIRICHLET", "ProblemSpec", "SystemState",
    "AssemblyError", "ExpressionFailure",
    "apply_operator", "operator_jacobian", "stiffness_matrix", "weighted_mass",
    "truncate", "truncation_mask", "apply_penalty", "penalty_jacobian",
    "reaction_vectors", "boundary_vectors", "apply_reaction", "apply_boundary",
    "weak_residual", "check_growth", "to_triplets",
]

EPS_REG = 1e-10
NEUMANN = "neumann_nonlinear"
DIRICHLET = "dirichlet_zero"


class AssemblyError(ValueError):
    pass


class ExpressionFailure(AssemblyError):
    """A nonlinearity failed to evaluate; carries the point and the arguments."""

    def __init__(self, name, point, arguments, cause):
        self.name, self.point, self.arguments = name, point, arguments
        args = ", ".join(f"{k}={v:.6g}" for k, v in arguments.items())
        super().__init__(f"{name} failed at point {tuple(point)} with {args}: {cause}")


@dataclass(frozen=True)
class SystemState:
    u1: np.ndarray
    u2: np.ndarray

    def __post_init__(self):
        a = np.array(self.u1, dtype=float)
        b = np.array(self.u2, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("both components must be nodal vectors on the same mesh")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("nodal values must be finite")
        a.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "u1", a)
        object.__setattr__(self, "u2", b)

    def __iter__(self):
        yield self.u1
        yield self.u2

    def __getitem__(self, k):
        return (self.u1, self.u2)[k]

    @classmethod
    def constant(cls, mesh, c1, c2):
        n = mesh.n_vertices
        return cls(np.full(n, float(c1)), np.full(n, float(c2)))

    @classmethod
    def from_vector(cls, vec):
        n = len(vec) // 2
        return cls(vec[:n], vec[n:])

    def as_vector(self):
        return np.concatenate([self.u1, self.u2])


def _compile_nonlinearity(src):
    if isinstance(src, (int, float)):
        src = repr(float(src))
    return _expr.parse(src, _expr.STATE_VARS)


@dataclass
class ProblemSpec:
    """Mesh, boundary kind, exponents and nonlinearities of the two-component system.

    ``f`` entries are expressions in x1, x2, s1, s2, g1, g2 where g_k stands for
    |grad u_k|; ``g`` entries (boundary data) may use x1, x2, s1, s2. The growth
    fields ``phi``, ``c``, ``psi`` are optional and only feed :func:`check_growth`.
    """

    mesh: Mesh
    boundary_kind: str
    data: tuple
    f_sources: tuple
    g_sources: tuple = ("0", "0")
    phi: tuple | None = None
    c: tuple | None = None
    psi: tuple | None = None
    f: tuple = field(init=False, repr=False)
    g: tuple = field(init=False, repr=False)

    def __post_init__(self):
        if self.boundary_kind not in (NEUMANN, DIRICHLET):
            raise ValueError(f"unknown boundary kind {self.boundary_kind!r}")
        if len(self.data) != 2 or len(self.f_sources) != 2:
            raise ValueError("exactly two components are required")
        self.data = tuple(d if isinstance(d, ExponentData) else ExponentData(*d, dim=self.mesh.dim)
                          for d in self.data)
        self.f_sources = tuple(str(s) for s in self.f_sources)
        self.f = tuple(_compile_nonlinearity(s) for s in self.f_sources)
        if self.g_sources is None:
            self.g_sources = ("0", "0")
        self.g_sources = tuple(str(s) for s in self.g_sources)
        self.g = tuple(_compile_nonlinearity(s) for s in self.g_sources)
        for k, gk in enumerate(self.g):
            bad = _expr.free_variables(gk) & {"g1", "g2"}
            if bad:
                raise ValueError(f"boundary term g{k + 1} may not depend on {sorted(bad)}")
        if self.boundary_kind == DIRICHLET and any(_expr.to_source(gk) != "0.0" for gk in self.g):
            raise ValueError("boundary terms g_k are not allowed with homogeneous Dirichlet data")
        if self.phi is not None:
            self.phi = tuple(as_field(v) for v in self.phi)
        if self.psi is not None:
            self.psi = tuple(as_field(v) for v in self.psi)

    @property
    def dirichlet(self):
        return self.boundary_kind == DIRICHLET

    def free_nodes(self):
        if self.dirichlet:
            return self.mesh.interior_nodes
        return np.arange(self.mesh.n_vertices)

    def validate(self):
        return [validate_h1(d, self.mesh) for d in self.data]


# --- double phase operator ----------------------------------------------------

def _coefficients(s, data, mesh, eps_reg, derivative=False):
    """Cell-averaged a(x, s) (and da/ds) over the quadrature points."""
    e = data.sample(mesh)
    t = (s + eps_reg)[:, None]
    zero = (t == 0.0)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        a = t ** ((e.p - 2) / 2) + e.mu * t ** ((e.q - 2) / 2)
        a = np.where(zero, 0.0, a)
        A = a @ mesh.qweights
        if not derivative:
            return A
        da = ((e.p - 2) / 2) * t ** ((e.p - 4) / 2) + e.mu * ((e.q - 2) / 2) * t ** ((e.q - 4) / 2)
        da = np.where(zero, 0.0, da)
        return A, da @ mesh.qweights


def _scatter_matrix(mesh, local):
    nloc = mesh.cells.shape[1]
    rows = np.repeat(mesh.cells, nloc, axis=1).ravel()
    cols = np.tile(mesh.cells, (1, nloc)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def apply_operator(u, data: ExponentData, mesh: Mesh, eps_reg: float = EPS_REG) -> np.ndarray:
    """Residual vector r[j] = <A(u), phi_j>."""
    _, g = eval_at_quadrature(u, mesh)
    s = np.einsum("cd,cd->c", g, g)
    A = _coefficients(s, data, mesh, eps_reg)
    local = (mesh.volumes * A)[:, None] * np.einsum("cad,cd->ca", mesh.grads, g)
    return np.bincount(mesh.cells.ravel(), weights=local.ravel(), minlength=mesh.n_vertices)


def operator_jacobian(u, data: ExponentData, mesh: Mesh, eps_reg: float = EPS_REG):
    """Sparse Jacobian of :func:`apply_operator` with respect to the nodal values."""
    _, g = eval_at_quadrature(u, mesh)
    s = np.einsum("cd,cd->c", g, g)
    A, dA = _coefficients(s, data, mesh, eps_reg, derivative=True)
    G = mesh.grads
    Gg = np.einsum("cad,cd->ca", G, g)
    local = (A[:, None, None] * np.einsum("cad,cbd->cab", G, G)
             + (2.0 * dA)[:, None, None] * Gg[:, :, None] * Gg[:, None, :])
    local *= mesh.volumes[:, None, None]
    return _scatter_matrix(mesh, local)


def stiffness_matrix(mesh: Mesh):
    """Standard P1 stiffness matrix, int grad phi_i . grad phi_j dx."""
    G = mesh.grads
    local = np.einsum("cad,cbd->cab", G, G) * mesh.volumes[:, None, None]
    return _scatter_matrix(mesh, local)


def weighted_mass(mesh: Mesh, weights):
    """Matrix of int w phi_i phi_j dx with w given at cell quadrature points."""
    B = mesh.qbary
    local = np.einsum("cq,q,qa,qb->cab", weights, mesh.qweights, B, B)
    local *= mesh.volumes[:, None, None]
    return _scatter_matrix(mesh, local)


def weighted_boundary_mass(mesh: Mesh, weights):
    B = mesh.fbary
    local = np.einsum("fq,q,qa,qb->fab", weights, mesh.fweights, B, B)
    local *= mesh.facet_measures[:, None, None]
    nloc = mesh.facets.shape[1]
    rows = np.repeat(mesh.facets, nloc, axis=1).ravel()
    cols = np.tile(mesh.facets, (1, nloc)).ravel()
    n = mesh.n_vertices
    return sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()


def to_triplets(matrix):
    """(row, col, value) arrays of a sparse matrix, sorted row-major."""
    m = sp.coo_matrix(matrix)
    order = np.lexsort((m.col, m.row))
    return m.row[order], m.col[order], m.data[order]


# --- truncation and penalty ---------------------------------------------------

def _check_order(lower, upper):
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        j = int(np.flatnonzero(lower > upper)[0])
        raise AssemblyError(f"lower bound exceeds upper bound at node {j}")
    return lower, upper


def truncate(u, lower, upper) -> np.ndarray:
    """Node-wise median of (lower, u, upper)."""
    lower, upper = _check_order(lower, upper)
    return np.minimum(np.maximum(np.asarray(u, dtype=float), lower), upper)


def truncation_mask(u, lower, upper) -> np.ndarray:
    """1.0 where the truncation passes u through (its nodal derivative), else 0.0."""
    u = np.asarray(u, dtype=float)
    return ((u >= lower) & (u <= upper)).astype(float)


def _gaps(u, lower, upper, mesh):
    uq, _ = eval_at_quadrature(u, mesh)
    lq, _ = eval_at_quadrature(lower, mesh)
    hq, _ = eval_at_quadrature(upper, mesh)
    return np.maximum(uq - hq, 0.0), np.maximum(lq - uq, 0.0)


def apply_penalty(u, lower, upper, data: ExponentData, mesh: Mesh) -> np.ndarray:
    """Load vector of b(x, u): (u - upper)^(q-1) above, -(lower - u)^(q-1) below, 0 inside."""
    lower, upper = _check_order(lower, upper)
    q = data.sample(mesh).q
    above, below = _gaps(u, lower, upper, mesh)
    b = above ** (q - 1) - below ** (q - 1)
    return mesh.load_vector(b)


def penalty_jacobian(u, lower, upper, data: ExponentData, mesh: Mesh, floor: float = 1e-8):
    """Jacobian of :func:`apply_penalty`.

    For q < 2 the derivative (q-1) d^(q-2) blows up as the gap d -> 0+; gaps
    below ``floor`` use the value at ``floor``.
    """
    lower, upper = _check_order(lower, upper)
    q = data.sample(mesh).q
    above, below = _gaps(u, lower, upper, mesh)
    d = above + below
    with np.errstate(divide="ignore"):
        w = np.where(d > 0, (q - 1) * np.maximum(d, floor) ** (q - 2), 0.0)
    return weighted_mass(mesh, w)


# --- reaction and boundary terms ----------------------------------------------

def _eval_nonlinearity(tree, name, env, points):
    try:
        out = _expr.evaluate(tree, env)
    except _expr.ExprEvalError as exc:
        flat_pts = points.reshape(-1, points.shape[-1])
        flat_env = {k: np.broadcast_to(v, points.shape[:-1]).ravel() for k, v in env.items()}
        for i in range(len(flat_pts)):
            args = {k: float(v[i]) for k, v in flat_env.items()}
            try:
                _expr.evaluate(tree, args)
            except _expr.ExprEvalError as inner:
                raise ExpressionFailure(name, flat_pts[i], args, inner) from None
        raise ExpressionFailure(name, flat_pts[0], {}, exc) from None
    out = np.broadcast_to(np.asarray(out, dtype=float), points.shape[:-1])
    if not np.all(np.isfinite(out)):
        i = int(np.flatnonzero(~np.isfinite(out.ravel()))[0])
        flat_env = {k: float(np.broadcast_to(v, points.shape[:-1]).ravel()[i]) for k, v in env.items()}
        raise ExpressionFailure(name, points.reshape(-1, points.shape[-1])[i], flat_env,
                                "non-finite value")
    return out


def _space_env(points):
    shape = points.shape[:-1]
    return {"x1": points[..., 0],
            "x2": points[..., 1] if points.shape[-1] > 1 else np.zeros(shape)}


def _reaction_env(spec, v1, v2, xi=None):
    mesh = spec.mesh
    s1, gr1 = eval_at_quadrature(v1, mesh)
    s2, gr2 = eval_at_quadrature(v2, mesh)
    if xi is None:
        xi = (np.linalg.norm(gr1, axis=1), np.linalg.norm(gr2, axis=1))
    env = _space_env(mesh.qpoints)
    env.update(s1=s1, s2=s2, g1=xi[0][:, None], g2=xi[1][:, None])
    return env


def gradient_magnitudes(spec, v1, v2):
    """Cell-wise |grad v1|, |grad v2| of P1 interpolants."""
    _, gr1 = eval_at_quadrature(v1, spec.mesh)
    _, gr2 = eval_at_quadrature(v2, spec.mesh)
    return np.linalg.norm(gr1, axis=1), np.linalg.norm(gr2, axis=1)


def reaction_vectors(spec: ProblemSpec, v1, v2, xi=None):
    """Load vectors of f_k(x, v1, v2, |grad v1|, |grad v2|), k = 1, 2.

    ``xi`` optionally replaces the gradient magnitudes with given cell-wise
    arrays (frozen convection).
    """
    env = _reaction_env(spec, v1, v2, xi)
    pts = spec.mesh.qpoints
    return tuple(spec.mesh.load_vector(_eval_nonlinearity(spec.f[k], f"f{k + 1}", env, pts))
                 for k in range(2))


def _boundary_env(spec, v1, v2):
    env = _space_env(spec.mesh.fpoints)
    env.update(s1=eval_on_boundary(v1, spec.mesh), s2=eval_on_boundary(v2, spec.mesh))
    return env


def boundary_vectors(spec: ProblemSpec, v1, v2):
    """Boundary load vectors of g_k(x, v1, v2), k = 1, 2."""
    if spec.dirichlet:
        raise AssemblyError("boundary terms are undefined for homogeneous Dirichlet problems")
    env = _boundary_env(spec, v1, v2)
    pts = spec.mesh.fpoints
    return tuple(spec.mesh.boundary_load_vector(_eval_nonlinearity(spec.g[k], f"g{k + 1}", env, pts))
                 for k in range(2))


def _truncated(state, region):
    return (truncate(state.u1, region.lower.u1, region.upper.u1),
            truncate(state.u2, region.lower.u2, region.upper.u2))


def apply_reaction(state: SystemState, spec: ProblemSpec, region, xi=None):
    """Reaction load vectors with both arguments truncated to the region.

    Gradients are those of the P1 interpolants of the truncated nodal fields.
    """
    t1, t2 = _truncated(state, region)
    return reaction_vectors(spec, t1, t2, xi)


def apply_boundary(state: SystemState, spec: ProblemSpec, region):
    t1, t2 = _truncated(state, region)
    return boundary_vectors(spec, t1, t2)


def reaction_derivatives(spec: ProblemSpec, v1, v2, xi, rel_step=1e-7):
    """Central-difference d f_k / d s_j at cell quadrature points.

    Returns a 2x2 nested tuple ``d[k][j]`` of (n_cells, n_q) arrays; gradients
    held at ``xi``.
    """
    env = _reaction_env(spec, v1, v2, xi)
    pts = spec.mesh.qpoints
    out = [[None, None], [None, None]]
    for j, key in enumerate(("s1", "s2")):
        base = env[key]
        h = rel_step * (1.0 + np.abs(base))
        plus, minus = dict(env), dict(env)
        plus[key], minus[key] = base + h, base - h
        for k in range(2):
            fp = _eval_nonlinearity(spec.f[k], f"f{k + 1}", plus, pts)
            fm = _eval_nonlinearity(spec.f[k], f"f{k + 1}", minus, pts)
            out[k][j] = (fp - fm) / (2 * h)
    return out


def boundary_derivatives(spec: ProblemSpec, v1, v2, rel_step=1e-7):
    """Central-difference d g_k / d s_j at facet quadrature points."""
    env = _boundary_env(spec, v1, v2)
    pts = spec.mesh.fpoints
    out = [[None, None], [None, None]]
    for j, key in enumerate(("s1", "s2")):
        base = env[key]
        h = rel_step * (1.0 + np.abs(base))
        plus, minus = dict(env), dict(env)
        plus[key], minus[key] = base + h, base - h
        for k in range(2):
            gp = _eval_nonlinearity(spec.g[k], f"g{k + 1}", plus, pts)
            gm = _eval_nonlinearity(spec.g[k], f"g{k + 1}", minus, pts)
            out[k][j] = (gp - gm) / (2 * h)
    return out


def weak_residual(state: SystemState, spec: ProblemSpec, eps_reg: float = EPS_REG):
    """Residuals of the untruncated, unpenalized weak formulation, one vector per component.

    Under Dirichlet data the boundary rows are zeroed (test functions vanish there).
    """
    F = reaction_vectors(spec, state.u1, state.u2)
    G = (0.0, 0.0) if spec.dirichlet else boundary_vectors(spec, state.u1, state.u2)
    out = []
    for k in range(2):
        r = apply_operator(state[k], spec.data[k], spec.mesh, eps_reg) - F[k] - G[k]
        if spec.dirichlet:
            r = r.copy()
            r[spec.mesh.boundary_nodes] = 0.0
        out.append(r)
    return tuple(out)


def check_growth(spec: ProblemSpec, states) -> list:
    """Diagnostic check of sampled |f_k| against phi_k + c_k (growth in |grad|).

    Uses the bound phi_1 + c_1 (g1^(p1-1) + g2^(p2/p1')) and its mirror for
    f_2; returns human-readable findings (empty when the samples respect the
    bound or no growth data was supplied).
    """
    if spec.phi is None or spec.c is None:
        return []
    mesh = spec.mesh
    findings = []
    p1 = spec.data[0].sample(mesh).p
    p2 = spec.data[1].sample(mesh).p
    for st in states:
        env = _reaction_env(spec, st.u1, st.u2)
        g1, g2 = env["g1"], env["g2"]
        bounds = (
            spec.phi[0].evaluate(mesh.qpoints) + spec.c[0] * (g1 ** (p1 - 1) + g2 ** (p2 * (p1 - 1) / p1)),
            spec.phi[1].evaluate(mesh.qpoints) + spec.c[1] * (g1 ** (p1 * (p2 - 1) / p2) + g2 ** (p2 - 1)),
        )
        for k in range(2):
            val = np.abs(_eval_nonlinearity(spec.f[k], f"f{k + 1}", env, mesh.qpoints))
            excess = val - bounds[k]
            if np.any(excess > 1e-12):
                i = np.unravel_index(np.argmax(excess), excess.shape)
                findings.append(f"|f{k + 1}| exceeds growth bound by {excess[i]:.3g} "
                                f"at {tuple(mesh.qpoints[i])}")
    if spec.psi is not None and not spec.dirichlet:
        for st in states:
            env = _boundary_env(spec, st.u1, st.u2)
            for k in range(2):
                val = np.abs(_eval_nonlinearity(spec.g[k], f"g{k + 1}", env, mesh.fpoints))
                excess = val - spec.psi[k].evaluate(mesh.fpoints)
                if np.any(excess > 1e-12):
                    findings.append(f"|g{k + 1}| exceeds psi{k + 1} by {excess.max():.3g}")
    return findings
