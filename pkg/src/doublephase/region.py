"""Order intervals [lower, upper] of two-component nodal states."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import SystemState

__all__ = ["TrappingRegion", "RegionError"]


class RegionError(ValueError):
    pass


@dataclass(frozen=True)
class TrappingRegion:
    """Pair of nodal states with lower <= upper component-wise.

    For Dirichlet problems pass the mesh's ``boundary_nodes``: the region must
    then also satisfy lower <= 0 <= upper there (the sign condition is a
    trace condition; sub-solutions built from positive data are positive
    inside the domain).
    """

    lower: SystemState
    upper: SystemState
    boundary_nodes: np.ndarray | None = None

    def __post_init__(self):
        for k in range(2):
            lo, hi = self.lower[k], self.upper[k]
            if lo.shape != hi.shape:
                raise RegionError("lower and upper live on different meshes")
            if np.any(lo > hi):
                j = int(np.flatnonzero(lo > hi)[0])
                raise RegionError(f"component {k + 1}: lower > upper at node {j}")
            if self.boundary_nodes is not None:
                bn = self.boundary_nodes
                if np.any(lo[bn] > 0) or np.any(hi[bn] < 0):
                    raise RegionError(f"component {k + 1}: Dirichlet regions need "
                                      "lower <= 0 <= upper on the boundary")

    @property
    def dirichlet(self):
        return self.boundary_nodes is not None

    def midpoint(self) -> SystemState:
        mid = SystemState(0.5 * (self.lower.u1 + self.upper.u1),
                          0.5 * (self.lower.u2 + self.upper.u2))
        if self.dirichlet:
            a, b = np.array(mid.u1), np.array(mid.u2)
            a[self.boundary_nodes] = 0.0
            b[self.boundary_nodes] = 0.0
            mid = SystemState(a, b)
        return mid

    def contains(self, state: SystemState, tol: float = 0.0) -> bool:
        return all(np.all(state[k] >= self.lower[k] - tol) and np.all(state[k] <= self.upper[k] + tol)
                   for k in range(2))
