"""
Infinitely many solutions, three at a time
==========================================

A coupled Neumann problem on the unit square whose reactions are periodic in
the state. Every band [pi/2, 3pi/2] x [0, pi] shifted by 2 pi n traps one
solution; the constants at the band edges are a sub- and a supersolution.
"""

import math

import numpy as np

from doublephase import (
    ExponentData, ProblemSpec, build_rectangle_mesh, constant_region, enumerate_bands,
    multi_solve, verify_pair, write_nodal_csv,
)

mesh = build_rectangle_mesh(1.0, 1.0, 16, 16)
d = ExponentData(1.5, 1.8, 1.0, dim=2)

# g1, g2 stand for |grad u1|, |grad u2|; the reactions grow like |grad u|^(p-1)
f = ("sin(s1) + 0.5*cos(s2) + g1^0.5 + atan(g2)/pi",
     "0.5*sin(s1) + cos(s2) + atan(g1)/pi + g2^0.5")
g = ("sin(s1) + 0.5*cos(s2) + 0.25", "0.5*sin(s1) + cos(s2) + 0.25")
spec = ProblemSpec(mesh, "neumann_nonlinear", (d, d), f, g)

ladder = enumerate_bands({"h1": "pi/2 + 2*pi*n", "k1": "3*pi/2 + 2*pi*n",
                          "h2": "2*pi*n", "k2": "pi + 2*pi*n"}, n_max=2)

# check the sub/supersolution inequalities of the first band on every hat function
h, k = ladder.bands[0]
rep = verify_pair(constant_region(h, k, mesh), spec)
print(f"band 0: sub max {rep.sub_max:.3e} <= 0, super min {rep.super_min:.3e} >= 0")

res = multi_solve(spec, ladder)
for n, (state, report) in enumerate(res):
    print(f"band {n}: u1 in [{state.u1.min():.4f}, {state.u1.max():.4f}], "
          f"u2 in [{state.u2.min():.4f}, {state.u2.max():.4f}], "
          f"{report.picard_iterations} Picard / {report.newton_iterations_total} Newton steps")
print("ordered:", res.ordering_ok, " distinct:", res.distinct_ok)

# the solutions are nearly constant: how far from the band centre do they sit?
for n, (state, _) in enumerate(res):
    c1 = math.pi + 2 * math.pi * n
    print(f"band {n}: mean(u1) - centre = {np.mean(state.u1) - c1:+.4f}")

write_nodal_csv("ladder_band0.csv", mesh, {"u1": res[0][0].u1, "u2": res[0][0].u2})
