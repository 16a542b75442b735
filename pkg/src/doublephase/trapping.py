"""Trapping regions: constant bands, band ladders, discrete sub/supersolution checks,
and the Dirichlet bracket built from two monotone auxiliary problems."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as _expr
from .assembly import SystemState, apply_operator, boundary_vectors, reaction_vectors
from .fields import as_field
from .region import RegionError, TrappingRegion
from .solver import (
    LambdaScheduleExhausted, SolveOptions, SolverError, select_lambda, solve_monotone_rhs,
)

__all__ = [
    "TrappingRegion", "RegionError", "SamplingPolicy", "VerificationReport", "BandLadder",
    "LadderError", "LadderSolution", "BracketError",
    "constant_region", "verify_pair", "enumerate_bands", "multi_solve", "dirichlet_bracket",
]

INCREASING, DECREASING = "increasing", "decreasing"


def constant_region(h, k, mesh, dirichlet: bool = False) -> TrappingRegion:
    """Region between the constant states h = (h1, h2) and k = (k1, k2)."""
    for i in range(2):
        if not h[i] <= k[i]:
            raise RegionError(f"component {i + 1}: h = {h[i]} exceeds k = {k[i]}")
    return TrappingRegion(SystemState.constant(mesh, *h), SystemState.constant(mesh, *k),
                          mesh.boundary_nodes if dirichlet else None)


# --- sub/supersolution verification -------------------------------------------

@dataclass(frozen=True)
class SamplingPolicy:
    """Intermediate states w: lower, upper, midpoint, plus ``n_random`` uniform samples."""

    n_random: int = 8
    seed: int = 0

    def states(self, region: TrappingRegion):
        lo, hi = region.lower, region.upper
        out = [("lower", lo), ("upper", hi), ("midpoint", SystemState(0.5 * (lo.u1 + hi.u1),
                                                                       0.5 * (lo.u2 + hi.u2)))]
        rng = np.random.default_rng(self.seed)
        for i in range(self.n_random):
            t1 = rng.random(len(lo.u1))
            t2 = rng.random(len(lo.u2))
            out.append((f"random{i}", SystemState(lo.u1 + t1 * (hi.u1 - lo.u1),
                                                  lo.u2 + t2 * (hi.u2 - lo.u2))))
        return out


@dataclass
class VerificationReport:
    passed: bool
    sub_max: float           # largest value of the sub inequality (should be <= 0)
    super_min: float         # smallest value of the super inequality (should be >= 0)
    tolerance: float
    violations: list = field(default_factory=list)
    n_test_functions: int = 0
    n_states: int = 0
    structure: str = "general"
    note: str = ("inequalities checked for every nodal hat test function and a finite "
                 "sample of intermediate states; the sample is a heuristic detector")

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _region_structure(region):
    const = all(np.ptp(s[k]) == 0 for s in (region.lower, region.upper) for k in range(2))
    return "constant-band" if const else "general"


def verify_pair(region: TrappingRegion, spec, sampling: SamplingPolicy | None = None,
                tol: float = 1e-9, eps_reg: float = 1e-10, max_listed: int = 20) -> VerificationReport:
    """Check the discrete sub- and supersolution inequalities of ``region``.

    For each component slot k, each nodal hat function phi_j (interior nodes
    only under Dirichlet data) and each sampled intermediate state w, the sub
    value is

        <A_k(lower_k), phi_j> - int f_k(.., lower_k, w_other, ..) phi_j
                               - int_bdry g_k(.., lower_k, w_other) phi_j

    and must be <= tol; the super value uses ``upper`` and must be >= -tol.
    """
    sampling = sampling or SamplingPolicy()
    mesh = spec.mesh
    rows = spec.free_nodes()
    lo, hi = region.lower, region.upper
    A_lo = [apply_operator(lo[k], spec.data[k], mesh, eps_reg) for k in range(2)]
    A_hi = [apply_operator(hi[k], spec.data[k], mesh, eps_reg) for k in range(2)]
    states = sampling.states(region)
    sub_max, super_min = -np.inf, np.inf
    found = []

    def slot_values(A, bound, w):
        # component 1 sees (bound_1, w_2), component 2 sees (w_1, bound_2)
        pairs = ((bound.u1, w.u2), (w.u1, bound.u2))
        vals = []
        for k in range(2):
            F = reaction_vectors(spec, *pairs[k])[k]
            G = 0.0 if spec.dirichlet else boundary_vectors(spec, *pairs[k])[k]
            vals.append((A[k] - F - G)[rows])
        return vals

    for label, w in states:
        for kind, A, bound in (("sub", A_lo, lo), ("super", A_hi, hi)):
            for k, v in enumerate(slot_values(A, bound, w)):
                if kind == "sub":
                    sub_max = max(sub_max, float(v.max()))
                    bad = np.flatnonzero(v > tol)
                else:
                    super_min = min(super_min, float(v.min()))
                    bad = np.flatnonzero(v < -tol)
                for j in bad:
                    found.append({"inequality": kind, "component": k + 1, "node": int(rows[j]),
                                  "point": [float(c) for c in mesh.vertices[rows[j]]],
                                  "w": label, "value": float(v[j])})
    found.sort(key=lambda d: -abs(d["value"]))
    return VerificationReport(
        passed=not found, sub_max=sub_max, super_min=super_min, tolerance=tol,
        violations=found[:max_listed], n_test_functions=2 * len(rows), n_states=len(states),
        structure=_region_structure(region))


# --- band ladders -------------------------------------------------------------

class LadderError(ValueError):
    pass


@dataclass(frozen=True)
class BandLadder:
    """Constant bands (h^(n), k^(n)) per component, n = 0..n_max."""

    bands: tuple            # of ((h1, h2), (k1, k2))
    directions: tuple       # per component, "increasing" or "decreasing"

    def __len__(self):
        return len(self.bands)

    def __iter__(self):
        return iter(self.bands)

    def separation(self, n, i):
        """Gap between bands n and n+1 in component i (positive for a valid ladder)."""
        (h0, k0), (h1, k1) = self.bands[n], self.bands[n + 1]
        if self.directions[i] == INCREASING:
            return h1[i] - k0[i]
        return h0[i] - k1[i]


def _ladder_values(entry, n_max, name):
    if isinstance(entry, (list, tuple, np.ndarray)):
        vals = [float(v) for v in entry]
        if len(vals) < n_max + 1:
            raise LadderError(f"{name}: {len(vals)} values given, {n_max + 1} needed")
        return vals[:n_max + 1]
    tree = _expr.parse(str(entry), {"n"})
    return [float(_expr.evaluate(tree, {"n": float(n)})) for n in range(n_max + 1)]


def enumerate_bands(ladder_spec: dict, n_max: int) -> BandLadder:
    """Build and validate a ladder from formulas in ``n`` or explicit lists.

    ``ladder_spec`` has keys h1, k1, h2, k2. Each band needs h <= k, and
    consecutive bands must be strictly separated in one consistent direction
    per component: k^(n) < h^(n+1) (increasing) or k^(n+1) < h^(n) (decreasing).
    """
    if n_max < 0:
        return BandLadder((), (INCREASING, INCREASING))
    missing = {"h1", "k1", "h2", "k2"} - set(ladder_spec)
    if missing:
        raise LadderError(f"ladder is missing {sorted(missing)}")
    v = {key: _ladder_values(ladder_spec[key], n_max, key) for key in ("h1", "k1", "h2", "k2")}
    bands = []
    for n in range(n_max + 1):
        h = (v["h1"][n], v["h2"][n])
        k = (v["k1"][n], v["k2"][n])
        for i in range(2):
            if not h[i] <= k[i]:
                raise LadderError(f"band {n}, component {i + 1}: h = {h[i]} > k = {k[i]}")
        bands.append((h, k))
    directions = []
    for i in range(2):
        dirs = set()
        for n in range(n_max):
            (h0, k0), (h1, k1) = bands[n], bands[n + 1]
            if k0[i] < h1[i]:
                dirs.add(INCREASING)
            elif k1[i] < h0[i]:
                dirs.add(DECREASING)
            else:
                raise LadderError(f"bands {n} and {n + 1} are not strictly separated "
                                  f"in component {i + 1}")
        if len(dirs) > 1:
            raise LadderError(f"component {i + 1}: ladder changes direction")
        directions.append(dirs.pop() if dirs else INCREASING)
    return BandLadder(tuple(bands), tuple(directions))


@dataclass
class LadderSolution:
    solutions: list = field(default_factory=list)      # (state, report) per solved band
    lambdas: list = field(default_factory=list)
    verifications: list = field(default_factory=list)
    ordering_ok: bool = True
    distinct_ok: bool = True
    gaps: list = field(default_factory=list)           # per consecutive pair and component
    failed_band: int | None = None
    error: str = ""

    @property
    def complete(self):
        return self.failed_band is None

    def __len__(self):
        return len(self.solutions)

    def __iter__(self):
        return iter(self.solutions)

    def __getitem__(self, i):
        return self.solutions[i]


def multi_solve(spec, ladder: BandLadder, opts: SolveOptions | None = None,
                sampling: SamplingPolicy | None = None, verify: bool = True) -> LadderSolution:
    """Solve once per band and check ordering and distinctness of the solutions.

    A failing verification or solve stops the sweep; the bands solved so far
    are kept in the result together with ``failed_band`` and ``error``.
    """
    opts = opts or SolveOptions()
    mesh = spec.mesh
    ctol = opts.comparison_tolerance(mesh)
    out = LadderSolution()
    for n, (h, k) in enumerate(ladder):
        region = constant_region(h, k, mesh, dirichlet=spec.dirichlet)
        if verify:
            rep = verify_pair(region, spec, sampling, eps_reg=opts.epsilon_reg)
            out.verifications.append(rep)
            if not rep.passed:
                out.failed_band, out.error = n, "band does not form a sub/supersolution pair"
                break
        try:
            choice = select_lambda(spec, region, opts)
        except (LambdaScheduleExhausted, SolverError) as exc:
            out.failed_band, out.error = n, str(exc)
            break
        out.solutions.append((choice.state, choice.report))
        out.lambdas.append(choice.lam)

    for n in range(len(out.solutions) - 1):
        a, b = out.solutions[n][0], out.solutions[n + 1][0]
        pair_gaps = []
        for i in range(2):
            if ladder.directions[i] == INCREASING:
                ordered = np.all(a[i] <= b[i] + ctol)
            else:
                ordered = np.all(b[i] <= a[i] + ctol)
            gap = float(np.max(np.abs(b[i] - a[i])))
            needed = ladder.separation(n, i) - 2 * ctol
            out.ordering_ok &= bool(ordered)
            out.distinct_ok &= gap >= needed
            pair_gaps.append(gap)
        out.gaps.append(pair_gaps)
    return out


# --- Dirichlet bracket ---------------------------------------------------------

class BracketError(RuntimeError):
    pass


def dirichlet_bracket(spec, phi_hat, psi_hat, opts: SolveOptions | None = None) -> TrappingRegion:
    """Region (lower, upper) from A_k(lower_k) = phi_hat_k and A_k(upper_k) = psi_hat_k.

    Requires 0 <= phi_hat_k <= psi_hat_k at the quadrature points and
    phi_hat_k not identically zero. The computed pair is checked for
    lower >= 0, lower != 0 and lower <= upper up to the comparison tolerance.
    """
    if not spec.dirichlet:
        raise ValueError("dirichlet_bracket needs a homogeneous Dirichlet problem")
    opts = opts or SolveOptions()
    mesh = spec.mesh
    phi = [as_field(v) for v in phi_hat]
    psi = [as_field(v) for v in psi_hat]
    for k in range(2):
        a, b = phi[k].evaluate(mesh.qpoints), psi[k].evaluate(mesh.qpoints)
        if np.any(a < 0):
            raise ValueError(f"phi_hat{k + 1} must be nonnegative")
        if np.any(a > b):
            raise ValueError(f"phi_hat{k + 1} must not exceed psi_hat{k + 1}")
        if not np.any(a > 0):
            raise ValueError(f"phi_hat{k + 1} must not vanish identically")
    lower = solve_monotone_rhs(spec, phi, opts)
    upper = solve_monotone_rhs(spec, psi, opts)
    ctol = opts.comparison_tolerance(mesh)
    lo, hi = [], []
    for k in range(2):
        if lower[k].min() < -ctol:
            raise BracketError(f"component {k + 1}: lower solution negative ({lower[k].min():.3e})")
        if not lower[k].max() > ctol:
            raise BracketError(f"component {k + 1}: lower solution vanishes")
        if np.any(lower[k] > upper[k] + ctol):
            raise BracketError(f"component {k + 1}: lower exceeds upper by "
                               f"{np.max(lower[k] - upper[k]):.3e}")
        lo.append(np.minimum(lower[k], upper[k]))
        hi.append(upper[k])
    return TrappingRegion(SystemState(*lo), SystemState(*hi), mesh.boundary_nodes)
