"""Solvers for the penalized truncated system and the monotone auxiliary problems.

The truncated problem is

    A(u) + lam B(u) - F(T u) - G(T u) = 0,

solved by an outer Picard loop that freezes the gradient magnitudes fed to
f_k at the previous iterate, and an inner damped Newton iteration on the
remaining monotone-plus-lower-order system. The state arguments of f_k and
g_k stay live inside Newton (their s-derivatives are taken by central
differences); freezing them too would leave the constant mode of a Neumann
problem undetermined.
"""
from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    SystemState, apply_operator, apply_penalty, boundary_derivatives, boundary_vectors,
    gradient_magnitudes, operator_jacobian, penalty_jacobian, reaction_derivatives,
    reaction_vectors, stiffness_matrix, truncate, truncation_mask, weak_residual, weighted_boundary_mass,
    weighted_mass,
)
from .fields import as_field
from .mesh import eval_at_quadrature
from .region import TrappingRegion

__all__ = [
    "SolveOptions", "SolveReport", "ComparisonStats", "LambdaChoice",
    "SolverError", "LinearSolveError", "NonConvergence", "LambdaScheduleExhausted",
    "solve_truncated", "select_lambda", "solve_monotone_rhs", "comparison_check",
    "write_residual_history",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class LinearSolveError(SolverError):
    pass


class NonConvergence(SolverError):
    pass


class LambdaScheduleExhausted(SolverError):
    def __init__(self, message, attempts, report=None, state=None):
        super().__init__(message)
        self.attempts = attempts
        self.report = report
        self.state = state


@dataclass
class SolveOptions:
    newton_tol: float = 1e-10
    max_newton: int = 100
    max_picard: int = 200
    picard_tol: float = 1e-10
    damping: float = 0.5
    max_backtracks: int = 30
    lambda_init: float = 1.0
    lambda_growth: float = 10.0
    lambda_max: float = 1e6
    epsilon_reg: float = 1e-10
    comparison_tol: float = 1e-8
    comparison_mesh_factor: float = 1e-4   # adds factor * h^2 to comparison_tol
    penalty_floor: float = 1e-8

    def __post_init__(self):
        for name in ("newton_tol", "picard_tol", "comparison_tol", "lambda_init", "lambda_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.damping < 1:
            raise ValueError("damping must lie in (0, 1)")
        if not self.lambda_growth > 1:
            raise ValueError("lambda_growth must exceed 1")
        if self.epsilon_reg < 0 or self.comparison_mesh_factor < 0:
            raise ValueError("epsilon_reg and comparison_mesh_factor must be nonnegative")
        if self.max_newton < 1 or self.max_picard < 1:
            raise ValueError("iteration limits must be positive")

    def comparison_tolerance(self, mesh):
        return self.comparison_tol + self.comparison_mesh_factor * mesh.h ** 2

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in (d or {}).items() if k in cls.__dataclass_fields__}
        unknown = set(d or {}) - set(known)
        if unknown:
            raise ValueError(f"unknown solver option(s): {sorted(unknown)}")
        return cls(**known)


@dataclass(frozen=True)
class ComparisonStats:
    overshoot: tuple            # max(u_k - upper_k)_+ per component
    undershoot: tuple           # max(lower_k - u_k)_+ per component
    overshoot_modular: tuple    # int (u_k - upper_k)_+^q_k dx
    undershoot_modular: tuple   # int (lower_k - u_k)_+^q_k dx

    @property
    def max_violation(self):
        return float(max(*self.overshoot, *self.undershoot))

    def as_dict(self):
        return {k: list(v) for k, v in asdict(self).items()} | {"max_violation": self.max_violation}


@dataclass
class SolveReport:
    converged: bool = False
    picard_iterations: int = 0
    newton_iterations_total: int = 0
    final_residual_norm: float = float("inf")
    full_residual_norm: float = float("inf")
    weak_residual_norm: float = float("inf")
    lambda_used: tuple = (0.0, 0.0)
    epsilon_reg: float = 0.0
    enclosure_violation: float = float("inf")
    comparison_tolerance: float = 0.0
    comparison: dict | None = None
    message: str = ""
    residual_history: list = field(default_factory=list)

    def as_dict(self):
        d = asdict(self)
        d["lambda_used"] = list(self.lambda_used)
        d["residual_history"] = [list(r) for r in self.residual_history]
        return d


def write_residual_history(path, report: SolveReport):
    """CSV with columns picard, newton, residual_norm, step."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["picard", "newton", "residual_norm", "step"])
        for row in report.residual_history:
            w.writerow([row[0], row[1], f"{row[2]:.17g}", f"{row[3]:.17g}"])


def comparison_check(state: SystemState, region: TrappingRegion, spec) -> ComparisonStats:
    """Node-wise over/undershoot of ``state`` against ``region`` and the penalty modulars."""
    mesh = spec.mesh
    over, under, over_m, under_m = [], [], [], []
    for k in range(2):
        u, lo, hi = state[k], region.lower[k], region.upper[k]
        over.append(float(np.max(np.maximum(u - hi, 0.0))))
        under.append(float(np.max(np.maximum(lo - u, 0.0))))
        q = spec.data[k].sample(mesh).q
        dq, _ = eval_at_quadrature(u - hi, mesh)
        over_m.append(mesh.integrate(np.maximum(dq, 0.0) ** q))
        dq, _ = eval_at_quadrature(lo - u, mesh)
        under_m.append(mesh.integrate(np.maximum(dq, 0.0) ** q))
    return ComparisonStats(tuple(over), tuple(under), tuple(over_m), tuple(under_m))


def _factorize_solve(J, rhs):
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            lu = spla.splu(sp.csc_matrix(J))
            x = lu.solve(rhs)
        except (RuntimeError, spla.MatrixRankWarning) as exc:
            raise LinearSolveError(f"singular Jacobian: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise LinearSolveError("linear solve produced non-finite values")
    return x


def _newton(residual, jacobian, x0, opts, history, picard_it):
    """Damped Newton with backtracking on the Euclidean residual norm.

    Returns (x, converged, iterations, final_norm, message).
    """
    x = x0.copy()
    r = residual(x)
    rn = float(np.linalg.norm(r))
    history.append((picard_it, 0, rn, 0.0))
    for it in range(1, opts.max_newton + 1):
        if rn <= opts.newton_tol:
            return x, True, it - 1, rn, ""
        dx = _factorize_solve(jacobian(x), -r)
        t = 1.0
        for _ in range(opts.max_backtracks + 1):
            x_try = x + t * dx
            r_try = residual(x_try)
            rn_try = float(np.linalg.norm(r_try))
            if np.isfinite(rn_try) and (rn_try <= (1 - 1e-4 * t) * rn or rn_try <= opts.newton_tol):
                break
            t *= opts.damping
        else:
            return x, False, it, rn, f"line search failed at residual {rn:.3e}"
        step = float(np.max(np.abs(x_try - x)))
        x, r, rn = x_try, r_try, rn_try
        history.append((picard_it, it, rn, step))
    if rn <= opts.newton_tol:
        return x, True, opts.max_newton, rn, ""
    return x, False, opts.max_newton, rn, f"Newton hit max_newton at residual {rn:.3e}"


class _TruncatedSystem:
    """Residual and Jacobian of the penalized truncated system on the free nodes."""

    def __init__(self, spec, region, lam, opts):
        self.spec, self.region, self.lam, self.opts = spec, region, lam, opts
        self.n = spec.mesh.n_vertices
        self.free = spec.free_nodes()
        self.xi = None

    def expand(self, z):
        n = self.n
        u = np.zeros(2 * n)
        u[self.free] = z[:len(self.free)]
        u[n + self.free] = z[len(self.free):]
        return u[:n], u[n:]

    def restrict(self, u1, u2):
        return np.concatenate([u1[self.free], u2[self.free]])

    def truncated(self, u1, u2):
        r = self.region
        return truncate(u1, r.lower.u1, r.upper.u1), truncate(u2, r.lower.u2, r.upper.u2)

    def freeze(self, u1, u2):
        self.xi = gradient_magnitudes(self.spec, *self.truncated(u1, u2))

    def full(self, u1, u2, xi):
        spec, r, eps = self.spec, self.region, self.opts.epsilon_reg
        t1, t2 = self.truncated(u1, u2)
        F = reaction_vectors(spec, t1, t2, xi)
        G = (0.0, 0.0) if spec.dirichlet else boundary_vectors(spec, t1, t2)
        out = []
        for k, u in enumerate((u1, u2)):
            rk = apply_operator(u, spec.data[k], spec.mesh, eps) - F[k] - G[k]
            if self.lam[k]:
                rk = rk + self.lam[k] * apply_penalty(u, r.lower[k], r.upper[k], spec.data[k], spec.mesh)
            out.append(rk)
        return self.restrict(*out)

    def residual(self, z):
        return self.full(*self.expand(z), self.xi)

    def jacobian(self, z):
        spec, r, eps, mesh = self.spec, self.region, self.opts.epsilon_reg, self.spec.mesh
        u1, u2 = self.expand(z)
        t1, t2 = self.truncated(u1, u2)
        masks = (sp.diags(truncation_mask(u1, r.lower.u1, r.upper.u1)),
                 sp.diags(truncation_mask(u2, r.lower.u2, r.upper.u2)))
        df = reaction_derivatives(spec, t1, t2, self.xi)
        dg = None if spec.dirichlet else boundary_derivatives(spec, t1, t2)
        blocks = [[None, None], [None, None]]
        for k, u in enumerate((u1, u2)):
            for j in range(2):
                M = weighted_mass(mesh, df[k][j])
                if dg is not None:
                    M = M + weighted_boundary_mass(mesh, dg[k][j])
                B = -(M @ masks[j])
                if j == k:
                    B = B + operator_jacobian(u, spec.data[k], mesh, eps)
                    if self.lam[k]:
                        B = B + self.lam[k] * penalty_jacobian(u, r.lower[k], r.upper[k],
                                                               spec.data[k], mesh,
                                                               self.opts.penalty_floor)
                blocks[k][j] = B
        J = sp.bmat(blocks, format="csr")
        idx = np.concatenate([self.free, self.n + self.free])
        return J[idx][:, idx]


def solve_truncated(spec, region: TrappingRegion, init: SystemState | None = None,
                    opts: SolveOptions | None = None, lam=None):
    """Solve the penalized truncated system inside ``region``.

    ``lam`` defaults to ``opts.lambda_init`` for both components. Returns
    ``(state, report)``; non-convergence is reported (``converged=False``),
    a singular Jacobian raises :class:`LinearSolveError`.
    """
    opts = opts or SolveOptions()
    if lam is None:
        lam = (opts.lambda_init, opts.lambda_init)
    lam = (float(lam[0]), float(lam[1]))
    mesh = spec.mesh
    if init is None:
        init = region.midpoint()
    if len(init.u1) != mesh.n_vertices or len(region.lower.u1) != mesh.n_vertices:
        raise ValueError("initial state and region must live on the problem mesh")

    system = _TruncatedSystem(spec, region, lam, opts)
    u1, u2 = np.array(init.u1), np.array(init.u2)
    if spec.dirichlet:
        u1[mesh.boundary_nodes] = 0.0
        u2[mesh.boundary_nodes] = 0.0
    z = system.restrict(u1, u2)

    report = SolveReport(lambda_used=lam, epsilon_reg=opts.epsilon_reg,
                         comparison_tolerance=opts.comparison_tolerance(mesh))
    newton_ok, rn = False, float("inf")
    for m in range(1, opts.max_picard + 1):
        system.freeze(*system.expand(z))
        z_new, newton_ok, nit, rn, msg = _newton(system.residual, system.jacobian, z, opts,
                                                report.residual_history, m)
        step = float(np.max(np.abs(z_new - z))) if len(z) else 0.0
        report.picard_iterations = m
        report.newton_iterations_total += nit
        report.residual_history.append((m, -1, rn, step))
        z = z_new
        if not newton_ok:
            report.message = msg
            break
        if step <= opts.picard_tol:
            report.converged = True
            break
    else:
        report.message = f"Picard loop hit max_picard with last step {step:.3e}"

    u1, u2 = system.expand(z)
    state = SystemState(u1, u2)
    report.final_residual_norm = rn
    report.full_residual_norm = float(np.linalg.norm(
        system.full(u1, u2, gradient_magnitudes(spec, *system.truncated(u1, u2)))))
    report.weak_residual_norm = float(np.linalg.norm(np.concatenate(weak_residual(state, spec, opts.epsilon_reg))))
    stats = comparison_check(state, region, spec)
    report.comparison = stats.as_dict()
    report.enclosure_violation = stats.max_violation
    if report.converged and rn > opts.newton_tol:
        report.converged = False
        report.message = "final residual above newton_tol"
    log.debug("solve_truncated lam=%s converged=%s picard=%d newton=%d residual=%.3e violation=%.3e",
              lam, report.converged, report.picard_iterations, report.newton_iterations_total,
              rn, report.enclosure_violation)
    return state, report


@dataclass
class LambdaChoice:
    lam: tuple
    state: SystemState
    report: SolveReport
    attempts: list

    def __iter__(self):
        # unpacks as (lam1, lam2)
        return iter(self.lam)


def select_lambda(spec, region: TrappingRegion, opts: SolveOptions | None = None,
                  init: SystemState | None = None) -> LambdaChoice:
    """Grow the penalty parameter until the truncated solve converges enclosed.

    Starts at ``opts.lambda_init`` and multiplies by ``opts.lambda_growth``
    while the solve fails or the comparison check reports an enclosure
    violation above the comparison tolerance, up to ``opts.lambda_max``.
    """
    opts = opts or SolveOptions()
    tol = opts.comparison_tolerance(spec.mesh)
    attempts = []
    lam = opts.lambda_init
    last = (None, None)
    while lam <= opts.lambda_max * (1 + 1e-12):
        try:
            state, report = solve_truncated(spec, region, init, opts, (lam, lam))
        except LinearSolveError as exc:
            attempts.append({"lambda": lam, "converged": False, "error": str(exc)})
            lam *= opts.lambda_growth
            continue
        attempts.append({"lambda": lam, "converged": report.converged,
                         "enclosure_violation": report.enclosure_violation})
        last = (state, report)
        if report.converged and report.enclosure_violation <= tol:
            return LambdaChoice((lam, lam), state, report, attempts)
        lam *= opts.lambda_growth
    raise LambdaScheduleExhausted(
        f"no enclosed solution up to lambda_max={opts.lambda_max:g}", attempts,
        report=last[1], state=last[0])


def _rhs_values(h, mesh):
    if isinstance(h, np.ndarray) and h.shape == (mesh.n_cells, len(mesh.qweights)):
        return h
    if callable(h) and not hasattr(h, "evaluate"):
        shape = (mesh.n_cells, len(mesh.qweights))
        return np.broadcast_to(np.asarray(h(mesh.qpoints), dtype=float), shape)
    return as_field(h).evaluate(mesh.qpoints)


def solve_monotone_rhs(spec, rhs, opts: SolveOptions | None = None,
                       history: list | None = None) -> SystemState:
    """Solve A_k(u_k) = h_k with u_k = 0 on the boundary, k = 1, 2.

    ``rhs`` is a pair of fields, numbers or callables of the spatial point.
    The start iterate is the Poisson solution for the same data.
    """
    if not spec.dirichlet:
        raise ValueError("solve_monotone_rhs needs a homogeneous Dirichlet problem")
    opts = opts or SolveOptions()
    mesh = spec.mesh
    free = spec.free_nodes()
    history = [] if history is None else history
    K = stiffness_matrix(mesh)[free][:, free]
    out = []
    for k in range(2):
        b = mesh.load_vector(_rhs_values(rhs[k], mesh))[free]
        data = spec.data[k]

        def expand(z):
            u = np.zeros(mesh.n_vertices)
            u[free] = z
            return u

        def residual(z):
            return apply_operator(expand(z), data, mesh, opts.epsilon_reg)[free] - b

        def jacobian(z):
            return operator_jacobian(expand(z), data, mesh, opts.epsilon_reg)[free][:, free]

        z0 = _factorize_solve(K, b) if len(free) else np.zeros(0)
        z, ok, _, rn, msg = _newton(residual, jacobian, z0, opts, history, k + 1)
        if not ok:
            raise NonConvergence(f"auxiliary problem {k + 1}: {msg}")
        out.append(expand(z))
    return SystemState(*out)
