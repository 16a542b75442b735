"""P1 finite element solver for coupled variable-exponent double phase systems
with convection terms, enclosed between sub- and supersolutions."""

__version__ = "0.1.0"

from .assembly import (
    DIRICHLET, EPS_REG, NEUMANN, ProblemSpec, SystemState, apply_operator, operator_jacobian,
    stiffness_matrix, weak_residual,
)
from .config import ConfigError, RunConfig, load_config
from .expr import ExprError, evaluate, parse
from .fields import ExponentData, ScalarField, as_field, compile_field, validate_h1
from .mesh import (
    Mesh, build_interval_mesh, build_rectangle_mesh, interpolate, read_nodal_csv, write_nodal_csv,
)
from .musielak import (
    boundary_modular, boundary_norm, check_norm_modular_relations, gradient_modular,
    gradient_norm, luxemburg_norm, modular, product_norm, sobolev_norm,
)
from .region import TrappingRegion
from .solver import (
    LambdaScheduleExhausted, SolveOptions, SolveReport, comparison_check, select_lambda,
    solve_monotone_rhs, solve_truncated,
)
from .trapping import (
    BandLadder, SamplingPolicy, constant_region, dirichlet_bracket, enumerate_bands,
    multi_solve, verify_pair,
)
