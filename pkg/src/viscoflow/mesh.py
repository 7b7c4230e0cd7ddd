"""Crossed-pattern triangulations of rectangles and contracted channels.

Every square block of a tensor grid is split into four triangles meeting at the
block barycenter.  Edges are oriented from the lower to the higher global
vertex index; the global unit normal of an edge is its tangent rotated
clockwise.
"""
from dataclasses import dataclass, field

import numpy as np

from viscoflow.errors import InvalidArgumentError

BOUNDARY_TAGS = ("left", "right", "bottom", "top", "wall", "inflow", "outflow")

# local edge i is opposite local vertex i
LOCAL_EDGES = ((1, 2), (0, 2), (0, 1))
# counterclockwise traversal (start, end) of local edge i
_CCW_EDGES = ((1, 2), (2, 0), (0, 1))


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray  # (V, 2)
    cells: np.ndarray  # (C, 3), counterclockwise
    edges: np.ndarray  # (E, 2), low -> high
    cell_edges: np.ndarray  # (C, 3), edge opposite each local vertex
    cell_edge_signs: np.ndarray  # (C, 3), +1 if global normal is outward
    edge_cells: np.ndarray  # (E, 2), second entry -1 on the boundary
    boundary_tags: dict
    h: float
    bounds: tuple = field(default=None)

    @property
    def num_vertices(self):
        return len(self.vertices)

    @property
    def num_cells(self):
        return len(self.cells)

    @property
    def num_edges(self):
        return len(self.edges)

    @property
    def cell_to_edges(self):
        """Per cell, the triple of (edge index, local sign) pairs."""
        return [list(zip(e.tolist(), s.tolist()))
                for e, s in zip(self.cell_edges, self.cell_edge_signs)]

    @property
    def boundary_edges(self):
        return np.flatnonzero(self.edge_cells[:, 1] < 0)

    def edges_with_tag(self, tag):
        return np.array(sorted(e for e, t in self.boundary_tags.items() if t == tag),
                        dtype=np.int64)

    def barycenters(self):
        return self.vertices[self.cells].mean(axis=1)

    def cell_areas(self):
        p = self.vertices[self.cells]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_normals(self):
        """Global unit normals, tangent (low -> high) rotated clockwise."""
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        n = np.column_stack([t[:, 1], -t[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def edge_lengths(self):
        t = self.vertices[self.edges[:, 1]] - self.vertices[self.edges[:, 0]]
        return np.linalg.norm(t, axis=1)


@dataclass(frozen=True)
class CellGeometry:
    jacobian: np.ndarray
    det: float
    inv_transpose: np.ndarray
    area: float
    edge_normals: np.ndarray  # (3, 2) outward, local edge order
    edge_lengths: np.ndarray  # (3,)
    vertices: np.ndarray  # (3, 2)


def cell_geometry(mesh, index):
    """Affine map data of cell `index` from the reference triangle."""
    if not 0 <= index < mesh.num_cells:
        raise InvalidArgumentError(f"cell index {index} out of range")
    p = mesh.vertices[mesh.cells[index]]
    jac = np.column_stack([p[1] - p[0], p[2] - p[0]])
    det = float(np.linalg.det(jac))
    if det <= 0.0:
        raise InvalidArgumentError(f"cell {index} is degenerate or clockwise")
    normals = np.empty((3, 2))
    lengths = np.empty(3)
    for i, (a, b) in enumerate(_CCW_EDGES):
        t = p[b] - p[a]
        lengths[i] = np.hypot(*t)
        normals[i] = (t[1] / lengths[i], -t[0] / lengths[i])
    return CellGeometry(jac, det, np.linalg.inv(jac).T, det / 2, normals, lengths, p)


def jacobians(mesh):
    """Vectorized affine maps: (C, 2, 2) Jacobians and (C,) determinants."""
    p = mesh.vertices[mesh.cells]
    jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    return jac, det


def _from_blocks(xs, ys, active, tagger, h, bounds):
    """Crossed triangulation of the active blocks of the grid xs × ys."""
    nx, ny = len(xs) - 1, len(ys) - 1
    node_id = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    for i, j in zip(*np.nonzero(active)):
        node_id[i:i + 2, j:j + 2] = 0
    used = node_id == 0
    # column-major over (j, i) gives bottom-to-top rows of vertices
    order = np.argwhere(used.T)[:, ::-1]
    node_id[order[:, 0], order[:, 1]] = np.arange(len(order))
    verts = [np.column_stack([xs[order[:, 0]], ys[order[:, 1]]])]
    nv = len(order)

    blocks = np.argwhere(active.T)[:, ::-1]
    centers = np.column_stack([0.5 * (xs[blocks[:, 0]] + xs[blocks[:, 0] + 1]),
                               0.5 * (ys[blocks[:, 1]] + ys[blocks[:, 1] + 1])])
    verts.append(centers)
    vertices = np.vstack(verts)

    bi, bj = blocks[:, 0], blocks[:, 1]
    sw = node_id[bi, bj]
    se = node_id[bi + 1, bj]
    ne = node_id[bi + 1, bj + 1]
    nw = node_id[bi, bj + 1]
    c = nv + np.arange(len(blocks))
    cells = np.stack([np.column_stack([sw, se, c]),
                      np.column_stack([se, ne, c]),
                      np.column_stack([ne, nw, c]),
                      np.column_stack([nw, sw, c])], axis=1).reshape(-1, 3)
    return _finish(vertices, cells, tagger, h, bounds)


def _finish(vertices, cells, tagger, h, bounds):
    local = np.stack([cells[:, list(e)] for e in LOCAL_EDGES], axis=1)  # (C,3,2)
    flat = np.sort(local.reshape(-1, 2), axis=1)
    edges, inverse = np.unique(flat, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    cell_edges = inverse.reshape(-1, 3)

    ccw = np.stack([cells[:, list(e)] for e in _CCW_EDGES], axis=1)
    signs = np.where(ccw[:, :, 0] < ccw[:, :, 1], 1, -1).astype(np.int64)

    owners = np.repeat(np.arange(len(cells)), 3)
    order = np.argsort(inverse, kind="stable")
    _, start, count = np.unique(inverse[order], return_index=True, return_counts=True)
    if count.max() > 2:
        raise InvalidArgumentError("non-manifold edge in triangulation")
    edge_cells = -np.ones((len(edges), 2), dtype=np.int64)
    edge_cells[:, 0] = owners[order[start]]
    shared = count == 2
    edge_cells[shared, 1] = owners[order[start[shared] + 1]]

    boundary = np.flatnonzero(edge_cells[:, 1] < 0)
    mids = 0.5 * (vertices[edges[boundary, 0]] + vertices[edges[boundary, 1]])
    tags = {int(e): tagger(m) for e, m in zip(boundary, mids)}
    return Mesh(vertices, cells.astype(np.int64), edges.astype(np.int64),
                cell_edges.astype(np.int64), signs, edge_cells, tags, h, bounds)


def build_crossed_rect(nx, ny, bounds=(0.0, 1.0, 0.0, 1.0)):
    """Crossed triangulation of [x0, x1] × [y0, y1] with nx × ny blocks."""
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise InvalidArgumentError("nx and ny must be positive integers")
    x0, x1, y0, y1 = map(float, bounds)
    if not (x1 > x0 and y1 > y0):
        raise InvalidArgumentError(f"degenerate rectangle {bounds}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    tol = 1e-9 * max(x1 - x0, y1 - y0)

    def tagger(m):
        if abs(m[0] - x0) < tol:
            return "left"
        if abs(m[0] - x1) < tol:
            return "right"
        if abs(m[1] - y0) < tol:
            return "bottom"
        return "top"

    return _from_blocks(xs, ys, np.ones((nx, ny), dtype=bool), tagger,
                        1.0 / nx, (x0, x1, y0, y1))


def build_channel(length=4.0, half_height=1.0, contraction_ratio=0.5, resolution=8):
    """Channel [0, length] × [-half_height, half_height] whose middle third is
    narrowed symmetrically to contraction_ratio * half_height.

    The contraction is snapped to the block grid (resolution blocks per unit).
    """
    if not 0.0 < contraction_ratio < 1.0:
        raise InvalidArgumentError("contraction_ratio must lie in (0, 1)")
    if resolution < 2 or int(resolution) != resolution:
        raise InvalidArgumentError("resolution must be an integer >= 2")
    if length <= 0 or half_height <= 0:
        raise InvalidArgumentError("length and half_height must be positive")
    nx = int(round(length * resolution))
    ny = int(round(2 * half_height * resolution))
    xs = np.linspace(0.0, length, nx + 1)
    ys = np.linspace(-half_height, half_height, ny + 1)
    cut = int(round((1.0 - contraction_ratio) * half_height * resolution))
    i0, i1 = int(round(nx / 3)), int(round(2 * nx / 3))
    active = np.ones((nx, ny), dtype=bool)
    if cut > 0:
        active[i0:i1, :cut] = False
        active[i0:i1, ny - cut:] = False
    tol = 1e-9 * length

    def tagger(m):
        if abs(m[0]) < tol:
            return "inflow"
        if abs(m[0] - length) < tol:
            return "outflow"
        return "wall"

    return _from_blocks(xs, ys, active, tagger, 1.0 / resolution,
                        (0.0, length, -half_height, half_height))


def domain_area(mesh):
    return float(mesh.cell_areas().sum())
