"""Run configuration: a YAML document with nested sections.

Example (unit square, constant band)::

    domain: {kind: rectangle, extents: [1.0, 1.0]}
    mesh: {nx: 16, ny: 16}
    boundary_kind: neumann_nonlinear
    exponents:
      u1: {p: 1.5, q: 1.8, mu: 1}
      u2: {p: "1.5 + 0.1*x1", q: 1.8, mu: 1}
    nonlinearity:
      f1: "sin(s1) + 0.5*cos(s2) + g1^0.5"
      f2: "cos(s2)"
      g1: "0.25"
      g2: "0.25"
    region:
      kind: constants          # constants | ladder | dirichlet_bracket
      lower: [1.5707963, 0]
      upper: [4.712389, 3.14159]
    solver: {newton_tol: 1.0e-10, lambda_max: 1.0e6}
    sampling: {n_random: 8}
    seed: 0
    output: {dir: out}

See the README for every key.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import yaml

from . import expr as _expr
from .assembly import DIRICHLET, NEUMANN, ProblemSpec
from .fields import ExponentData
from .mesh import Mesh, build_interval_mesh, build_rectangle_mesh
from .solver import SolveOptions
from .trapping import SamplingPolicy, constant_region, dirichlet_bracket, enumerate_bands

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

REGION_KINDS = ("constants", "ladder", "dirichlet_bracket")


class ConfigError(ValueError):
    pass


def _expression(value, name, variables):
    """Accept numbers or expression strings; check they parse."""
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{name}: expected a number or an expression")
    if isinstance(value, (int, float)):
        return repr(float(value))
    src = str(value)
    try:
        _expr.parse(src, variables)
    except _expr.ExprError as exc:
        raise ConfigError(f"{name}: {exc}") from None
    return src


def _section(d, key, required=True):
    v = d.get(key)
    if v is None:
        if required:
            raise ConfigError(f"missing section '{key}'")
        return {}
    if not isinstance(v, dict):
        raise ConfigError(f"section '{key}' must be a mapping")
    return v


def _pair(v, name):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ConfigError(f"{name}: expected a list of two entries")
    return list(v)


def _number(v, name):
    try:
        return float(_expr.evaluate(_expr.parse(str(v), set()), {}))
    except (_expr.ExprError, TypeError, ValueError):
        raise ConfigError(f"{name}: expected a constant") from None


@dataclass
class RunConfig:
    domain_kind: str
    bounds: tuple                 # (a, b) for intervals, (0, L1, 0, L2)-style extents for rectangles
    resolution: tuple             # (n,) or (nx, ny)
    boundary_kind: str
    exponents: tuple              # ((p, q, mu), (p, q, mu)) as expression strings
    f: tuple
    g: tuple
    region: dict
    solver: SolveOptions
    sampling: SamplingPolicy
    seed: int = 0
    output_dir: Path = Path("out")
    source: Path | None = None
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return 1 if self.domain_kind == "interval" else 2

    def build_mesh(self) -> Mesh:
        if self.domain_kind == "interval":
            return build_interval_mesh(*self.bounds, self.resolution[0])
        return build_rectangle_mesh(*self.bounds, *self.resolution)

    def exponent_data(self):
        return tuple(ExponentData(*e, dim=self.dim) for e in self.exponents)

    def problem(self, mesh: Mesh | None = None) -> ProblemSpec:
        mesh = mesh or self.build_mesh()
        return ProblemSpec(mesh, self.boundary_kind, self.exponent_data(), self.f, self.g)

    def ladder(self, n_max=None):
        if self.region["kind"] != "ladder":
            raise ConfigError("this command needs region.kind = ladder")
        n_max = self.region.get("n_max", 0) if n_max is None else n_max
        return enumerate_bands(self.region["formulas"], n_max)

    def build_region(self, spec: ProblemSpec):
        """Trapping region named by the config (ladder: band ``region.band``)."""
        kind = self.region["kind"]
        if kind == "constants":
            return constant_region(self.region["lower"], self.region["upper"], spec.mesh,
                                   dirichlet=spec.dirichlet)
        if kind == "ladder":
            band = self.region.get("band", 0)
            h, k = enumerate_bands(self.region["formulas"], band).bands[band]
            return constant_region(h, k, spec.mesh, dirichlet=spec.dirichlet)
        return dirichlet_bracket(spec, self.region["phi_hat"], self.region["psi_hat"], self.solver)


def _parse_region(d, boundary_kind):
    kind = d.get("kind")
    if kind not in REGION_KINDS:
        raise ConfigError(f"region.kind must be one of {REGION_KINDS}, got {kind!r}")
    out = {"kind": kind}
    if kind == "constants":
        lo = [_number(v, "region.lower") for v in _pair(d.get("lower"), "region.lower")]
        hi = [_number(v, "region.upper") for v in _pair(d.get("upper"), "region.upper")]
        for i in range(2):
            if lo[i] > hi[i]:
                raise ConfigError(f"region: component {i + 1} has lower > upper")
            if boundary_kind == DIRICHLET and not lo[i] <= 0 <= hi[i]:
                raise ConfigError(f"region: component {i + 1} needs lower <= 0 <= upper "
                                  "for dirichlet_zero")
        out.update(lower=tuple(lo), upper=tuple(hi))
    elif kind == "ladder":
        formulas = {}
        for key in ("h1", "k1", "h2", "k2"):
            v = d.get(key)
            if v is None:
                raise ConfigError(f"region.{key} is required for a ladder")
            if isinstance(v, list):
                formulas[key] = [_number(x, f"region.{key}") for x in v]
            else:
                formulas[key] = _expression(v, f"region.{key}", {"n"})
        out["formulas"] = formulas
        for key in ("band", "n_max"):
            v = d.get(key, 0)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"region.{key} must be a nonnegative integer")
            out[key] = v
        if boundary_kind == DIRICHLET:
            try:
                bands = enumerate_bands(formulas, max(out["band"], out["n_max"]))
            except ValueError as exc:
                raise ConfigError(f"region: {exc}") from None
            for n, (h, k) in enumerate(bands):
                if not all(h[i] <= 0 <= k[i] for i in range(2)):
                    raise ConfigError(f"region: band {n} violates lower <= 0 <= upper "
                                      "required by dirichlet_zero")
    else:
        if boundary_kind != DIRICHLET:
            raise ConfigError("region.kind = dirichlet_bracket requires dirichlet_zero")
        out["phi_hat"] = tuple(_expression(v, "region.phi_hat", _expr.SPACE_VARS)
                               for v in _pair(d.get("phi_hat"), "region.phi_hat"))
        out["psi_hat"] = tuple(_expression(v, "region.psi_hat", _expr.SPACE_VARS)
                               for v in _pair(d.get("psi_hat"), "region.psi_hat"))
    return out


def parse_config(d: dict, source: Path | None = None) -> RunConfig:
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping at top level")
    dom = _section(d, "domain")
    kind = dom.get("kind")
    msh = _section(d, "mesh")
    if kind == "interval":
        bounds = tuple(_number(v, "domain.bounds") for v in _pair(dom.get("bounds"), "domain.bounds"))
        if not bounds[0] < bounds[1]:
            raise ConfigError("domain.bounds must satisfy a < b")
        res = (msh.get("n"),)
    elif kind == "rectangle":
        bounds = tuple(_number(v, "domain.extents")
                       for v in _pair(dom.get("extents"), "domain.extents"))
        if min(bounds) <= 0:
            raise ConfigError("domain.extents must be positive")
        res = (msh.get("nx"), msh.get("ny"))
    else:
        raise ConfigError(f"domain.kind must be 'interval' or 'rectangle', got {kind!r}")
    for r in res:
        if isinstance(r, bool) or not isinstance(r, int) or r < 1:
            raise ConfigError("mesh resolution must be positive integers "
                              "(mesh.n for intervals, mesh.nx/mesh.ny for rectangles)")

    bk = d.get("boundary_kind")
    if bk not in (NEUMANN, DIRICHLET):
        raise ConfigError(f"boundary_kind must be '{NEUMANN}' or '{DIRICHLET}', got {bk!r}")

    ex = _section(d, "exponents")
    exps = []
    for comp in ("u1", "u2"):
        c = ex.get(comp)
        if not isinstance(c, dict):
            raise ConfigError(f"exponents.{comp} must be a mapping with p, q, mu")
        exps.append(tuple(_expression(c.get(key), f"exponents.{comp}.{key}", _expr.SPACE_VARS)
                          for key in ("p", "q", "mu")))

    nl = _section(d, "nonlinearity")
    f = tuple(_expression(nl.get(key), f"nonlinearity.{key}", _expr.STATE_VARS)
              for key in ("f1", "f2"))
    g = []
    for key in ("g1", "g2"):
        v = nl.get(key, 0)
        src = _expression(v, f"nonlinearity.{key}", _expr.SPACE_VARS | {"s1", "s2"})
        if bk == DIRICHLET and _expr.to_source(_expr.parse(src)) != "0.0":
            raise ConfigError(f"nonlinearity.{key} is not allowed with dirichlet_zero")
        g.append(src)

    region = _parse_region(_section(d, "region"), bk)

    try:
        solver = SolveOptions.from_dict(_section(d, "solver", required=False))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from None

    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    smp = _section(d, "sampling", required=False)
    n_random = smp.get("n_random", 8)
    if isinstance(n_random, bool) or not isinstance(n_random, int) or n_random < 0:
        raise ConfigError("sampling.n_random must be a nonnegative integer")

    out = _section(d, "output", required=False)
    out_dir = Path(str(out.get("dir", "out")))

    return RunConfig(kind, bounds, res, bk, tuple(exps), f, tuple(g), region, solver,
                     SamplingPolicy(n_random=n_random, seed=seed), seed, out_dir, source, d)


def load_config(path) -> RunConfig:
    """Read and cross-validate a YAML run config. I/O errors propagate as OSError."""
    path = Path(path)
    text = path.read_text()
    try:
        d = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return parse_config(d, path)
