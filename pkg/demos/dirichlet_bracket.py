"""
A bracket from two monotone problems
====================================

With zero boundary values constants are no longer supersolutions. If the
reaction is squeezed between two fixed functions, 0.5 <= f <= 1.5, the
solutions of A(u) = 0.5 and A(u) = 1.5 bracket a solution instead.
"""

from doublephase import (
    ExponentData, ProblemSpec, build_interval_mesh, dirichlet_bracket, solve_truncated,
)

mesh = build_interval_mesh(0.0, 1.0, 128)
d = ExponentData(1.6, 2.0, 1.0, dim=1)
f = "min(max(1 + 0.25*sin(s1)*atan(g2), 0.5), 1.5)"
spec = ProblemSpec(mesh, "dirichlet_zero", (d, d), (f, f))

region = dirichlet_bracket(spec, phi_hat=(0.5, 0.5), psi_hat=(1.5, 1.5))
state, report = solve_truncated(spec, region)

mid = mesh.n_vertices // 2
print(f"at x = 0.5: lower {region.lower.u1[mid]:.5f} <= u {state.u1[mid]:.5f} "
      f"<= upper {region.upper.u1[mid]:.5f}")
print(f"converged {report.converged}, residual {report.final_residual_norm:.2e}, "
      f"enclosure violation {report.enclosure_violation:.1e}, eps_reg {report.epsilon_reg:g}")

# a coarse profile, printed as plot data
for j in range(0, mesh.n_vertices, 16):
    x = mesh.vertices[j, 0]
    print(f"{x:5.3f}  {region.lower.u1[j]:.5f}  {state.u1[j]:.5f}  {region.upper.u1[j]:.5f}")
