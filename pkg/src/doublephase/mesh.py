"""Structured P1 meshes on intervals and rectangles.

A :class:`Mesh` carries everything the integrators need: cell geometry, the
constant gradients of the nodal hat functions, fixed Gauss rules on cells and
boundary facets, and the boundary facets themselves. In 1D the boundary is the
two endpoints, each with unit (counting) measure.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

__all__ = [
    "Mesh", "MeshError", "build_interval_mesh", "build_rectangle_mesh",
    "interpolate", "eval_at_quadrature", "eval_on_boundary",
    "write_nodal_csv", "read_nodal_csv",
]


class MeshError(ValueError):
    pass


def _segment_rule():
    t, w = np.polynomial.legendre.leggauss(5)
    xi = 0.5 * (t + 1.0)
    return np.column_stack([1.0 - xi, xi]), 0.5 * w


def _triangle_rule():
    # 7-point symmetric rule, exact for degree 5
    r = np.sqrt(15.0)
    a1, b1 = (9 - 2 * r) / 21, (6 + r) / 21
    a2, b2 = (9 + 2 * r) / 21, (6 - r) / 21
    w1, w2 = (155 + r) / 1200, (155 - r) / 1200
    bary = np.array([
        [1 / 3, 1 / 3, 1 / 3],
        [a1, b1, b1], [b1, a1, b1], [b1, b1, a1],
        [a2, b2, b2], [b2, a2, b2], [b2, b2, a2],
    ])
    weights = np.array([0.225, w1, w1, w1, w2, w2, w2])
    return bary, weights


def _edge_rule():
    t, w = np.polynomial.legendre.leggauss(3)
    xi = 0.5 * (t + 1.0)
    return np.column_stack([1.0 - xi, xi]), 0.5 * w


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Simplicial mesh with P1 data.

    Cell quadrature weights ``qweights`` sum to one; multiply by
    ``volumes`` to integrate. Facet weights work the same way with
    ``facet_measures``.
    """

    def __init__(self, vertices, cells, facets, facet_normals, facet_measures):
        vertices = np.asarray(vertices, dtype=float)
        if vertices.ndim == 1:
            vertices = vertices[:, None]
        self.dim = vertices.shape[1]
        self.vertices = _frozen(vertices)
        self.cells = _frozen(np.asarray(cells, dtype=np.int64))
        self.facets = _frozen(np.asarray(facets, dtype=np.int64).reshape(len(facets), -1))
        self.facet_normals = _frozen(np.asarray(facet_normals, dtype=float))
        self.facet_measures = _frozen(np.asarray(facet_measures, dtype=float))

        coords = vertices[self.cells]                      # (nc, dim+1, dim)
        jac = np.transpose(coords[:, 1:, :] - coords[:, :1, :], (0, 2, 1))
        det = np.linalg.det(jac)
        if np.any(det <= 0):
            raise MeshError("cells must have positive orientation and volume")
        inv = np.linalg.inv(jac)                           # rows: grad of ref coords
        grads = np.concatenate([-inv.sum(axis=1, keepdims=True), inv], axis=1)
        fact = 1.0 if self.dim == 1 else 0.5
        self.volumes = _frozen(fact * det)
        self.grads = _frozen(grads)                        # (nc, dim+1, dim)

        if self.dim == 1:
            self.qbary, self.qweights = _segment_rule()
            self.fbary, self.fweights = np.ones((1, 1)), np.ones(1)
        elif self.dim == 2:
            self.qbary, self.qweights = _triangle_rule()
            self.fbary, self.fweights = _edge_rule()
        else:
            raise MeshError("only 1D and 2D meshes are supported")
        for name in ("qbary", "qweights", "fbary", "fweights"):
            setattr(self, name, _frozen(getattr(self, name)))

        self.qpoints = _frozen(np.einsum("qa,cad->cqd", self.qbary, coords))
        fcoords = vertices[self.facets]                     # (nf, dim, dim)
        self.fpoints = _frozen(np.einsum("qa,fad->fqd", self.fbary, fcoords))
        self.boundary_nodes = _frozen(np.unique(self.facets))

        edges = coords[:, :, None, :] - coords[:, None, :, :]
        self.h = float(np.sqrt((edges ** 2).sum(-1)).max())

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def measure(self):
        return float(self.volumes.sum())

    @property
    def boundary_measure(self):
        return float(self.facet_measures.sum())

    @property
    def interior_nodes(self):
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_nodes] = False
        return np.flatnonzero(mask)

    def sample_points(self):
        """Quadrature points of cells and facets plus vertices, stacked as (n, dim)."""
        return np.concatenate([
            self.qpoints.reshape(-1, self.dim),
            self.fpoints.reshape(-1, self.dim),
            self.vertices,
        ])

    def integrate(self, values):
        """Integrate per-quadrature-point values of shape (n_cells, n_q)."""
        return float(np.einsum("cq,q,c->", values, self.qweights, self.volumes))

    def integrate_boundary(self, values):
        """Integrate per-facet-point values of shape (n_facets, n_fq)."""
        return float(np.einsum("fq,q,f->", values, self.fweights, self.facet_measures))

    def load_vector(self, values):
        """Return b[j] = integral of values * phi_j, values given at cell quadrature points."""
        local = np.einsum("cq,q,qa,c->ca", values, self.qweights, self.qbary, self.volumes)
        return np.bincount(self.cells.ravel(), weights=local.ravel(),
                           minlength=self.n_vertices)

    def boundary_load_vector(self, values):
        """Return b[j] = boundary integral of values * phi_j, values at facet points."""
        local = np.einsum("fq,q,qa,f->fa", values, self.fweights, self.fbary,
                          self.facet_measures)
        return np.bincount(self.facets.ravel(), weights=local.ravel(),
                           minlength=self.n_vertices)

    def __repr__(self):
        return (f"Mesh(dim={self.dim}, vertices={self.n_vertices}, "
                f"cells={self.n_cells}, facets={len(self.facets)})")


def build_interval_mesh(a: float, b: float, n_cells: int) -> Mesh:
    if not (np.isfinite(a) and np.isfinite(b)) or not a < b:
        raise MeshError(f"invalid interval bounds ({a}, {b})")
    if int(n_cells) != n_cells or n_cells < 1:
        raise MeshError(f"n_cells must be a positive integer, got {n_cells}")
    n_cells = int(n_cells)
    x = np.linspace(a, b, n_cells + 1)
    cells = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
    facets = [[0], [n_cells]]
    normals = [[-1.0], [1.0]]
    return Mesh(x, cells, facets, normals, [1.0, 1.0])


def build_rectangle_mesh(x_extent: float, y_extent: float, nx: int, ny: int) -> Mesh:
    """Uniform triangulation of [0, x_extent] x [0, y_extent].

    Every grid square is split along its lower-left to upper-right diagonal,
    giving 2*nx*ny triangles; on a square domain with nx == ny the mesh is
    invariant under the reflection x1 <-> x2.
    """
    for name, v in (("x_extent", x_extent), ("y_extent", y_extent)):
        if not np.isfinite(v) or v <= 0:
            raise MeshError(f"{name} must be positive, got {v}")
    for name, v in (("nx", nx), ("ny", ny)):
        if int(v) != v or v < 1:
            raise MeshError(f"{name} must be a positive integer, got {v}")
    nx, ny = int(nx), int(ny)
    xs = np.linspace(0.0, x_extent, nx + 1)
    ys = np.linspace(0.0, y_extent, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    i, j = np.meshgrid(np.arange(nx), np.arange(ny))
    i, j = i.ravel(), j.ravel()
    v00, v10, v01, v11 = vid(i, j), vid(i + 1, j), vid(i, j + 1), vid(i + 1, j + 1)
    cells = np.empty((2 * nx * ny, 3), dtype=np.int64)
    cells[0::2] = np.column_stack([v00, v10, v11])
    cells[1::2] = np.column_stack([v00, v11, v01])

    facets, normals, measures = [], [], []
    hx, hy = x_extent / nx, y_extent / ny
    for a in range(nx):
        facets.append([vid(a, 0), vid(a + 1, 0)]); normals.append([0.0, -1.0]); measures.append(hx)
    for b in range(ny):
        facets.append([vid(nx, b), vid(nx, b + 1)]); normals.append([1.0, 0.0]); measures.append(hy)
    for a in range(nx, 0, -1):
        facets.append([vid(a, ny), vid(a - 1, ny)]); normals.append([0.0, 1.0]); measures.append(hx)
    for b in range(ny, 0, -1):
        facets.append([vid(0, b), vid(0, b - 1)]); normals.append([-1.0, 0.0]); measures.append(hy)
    return Mesh(vertices, cells, facets, normals, measures)


def _point_values(f, points):
    if hasattr(f, "evaluate"):
        return np.asarray(f.evaluate(points), dtype=float)
    if callable(f):
        return np.broadcast_to(np.asarray(f(points), dtype=float), points.shape[:-1]).copy()
    return np.full(points.shape[:-1], float(f))


def interpolate(f, mesh: Mesh) -> np.ndarray:
    """Nodal P1 interpolant of ``f``.

    ``f`` may be a field with an ``evaluate(points)`` method, a callable taking
    an (n, dim) point array, or a number.
    """
    values = _point_values(f, np.asarray(mesh.vertices))
    if not np.all(np.isfinite(values)):
        raise ValueError("interpolated values must be finite")
    return values


def eval_at_quadrature(u, mesh: Mesh):
    """Values of the P1 interpolant at cell quadrature points and its cell gradients.

    Returns ``(values, grads)`` with shapes (n_cells, n_q) and (n_cells, dim).
    """
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_vertices,):
        raise ValueError(f"nodal field has shape {u.shape}, expected ({mesh.n_vertices},)")
    local = u[mesh.cells]
    values = local @ mesh.qbary.T
    grads = np.einsum("ca,cad->cd", local, mesh.grads)
    return values, grads


def eval_on_boundary(u, mesh: Mesh):
    """Trace values of the P1 interpolant at facet quadrature points, shape (n_facets, n_fq)."""
    u = np.asarray(u, dtype=float)
    return u[mesh.facets] @ mesh.fbary.T


def _coord_names(dim):
    return [f"x{i + 1}" for i in range(dim)]


def write_nodal_csv(path, mesh: Mesh, columns: dict):
    """Write one row per vertex: index, coordinates, then the given nodal columns.

    Numbers are written with 17 significant digits so files round-trip exactly.
    """
    names = list(columns)
    data = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", *_coord_names(mesh.dim), *names])
        for idx in range(mesh.n_vertices):
            row = [str(idx)]
            row += [f"{c:.17g}" for c in mesh.vertices[idx]]
            row += [f"{col[idx]:.17g}" for col in data]
            w.writerow(row)


def read_nodal_csv(path, mesh: Mesh | None = None) -> dict:
    """Read a file written by :func:`write_nodal_csv` into a dict of arrays.

    If ``mesh`` is given, the coordinates are checked against its vertices.
    """
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if not header or header[0] != "index":
        raise ValueError(f"{path}: first column must be 'index'")
    table = np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))
    out = {name: table[:, k] for k, name in enumerate(header)}
    if mesh is not None:
        if len(body) != mesh.n_vertices:
            raise ValueError(f"{path}: {len(body)} rows, mesh has {mesh.n_vertices} vertices")
        coords = np.column_stack([out[c] for c in _coord_names(mesh.dim)])
        if not np.allclose(coords, mesh.vertices, rtol=0, atol=1e-12):
            raise ValueError(f"{path}: coordinates do not match the mesh")
    return out
