"""
Modulars and Luxemburg norms of nodal fields
============================================

The double phase modular of u is the integral of |u|^p(x) + mu(x) |u|^q(x).
Its Luxemburg norm is the scale lam with modular(u / lam) = 1.
"""

import numpy as np

from doublephase import (
    ExponentData, build_rectangle_mesh, check_norm_modular_relations, interpolate,
    luxemburg_norm, modular,
)

mesh = build_rectangle_mesh(1.0, 1.0, 16, 16)

# exponents that vary in space, and a weight that switches the q-phase off on the left edge
data = ExponentData(p="1.4 + 0.3*x1", q="2.2 + 0.2*x2", mu="x1", dim=2)
print(data, data.bounds(mesh))

u = interpolate(lambda P: np.sin(np.pi * P[:, 0]) * np.cos(np.pi * P[:, 1]), mesh)

# the norm is homogeneous, the modular is not
for t in (0.1, 1.0, 10.0):
    print(f"t = {t:5.1f}   rho(t u) = {modular(t * u, data, mesh):12.6g}"
          f"   ||t u|| = {luxemburg_norm(t * u, data, mesh).value:.6g}")

# between the norm and the modular sit the powers p- and q+
rep = check_norm_modular_relations(10.0 * u, data, mesh)
print(f"||u|| = {rep.norm:.6f}, rho(u) = {rep.modular:.6f}, "
      f"||u||^p- = {rep.norm ** rep.p_minus:.6f}, ||u||^q+ = {rep.norm ** rep.q_plus:.6f}")
print("relations hold:", rep.ok)
