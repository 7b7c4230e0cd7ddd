"""Lowest-order elements for the seven-field system.

theta, q : discontinuous P1 2x2 tensors, basis lambda_i e_c (local index 4 i + c,
           c = 2 row + col)
sigma    : each tensor row a BDM1 field; dofs are the moments of the normal
           trace against the two endpoint hat functions of every edge
u, u_hat, phi : piecewise constants (u_hat stores s in [[0, s], [-s, 0]])
lambda   : one global scalar
"""
from dataclasses import dataclass
from itertools import permutations

import numpy as np

from viscoflow.errors import InvalidArgumentError
from viscoflow.mesh import LOCAL_EDGES

FIELDS = ("theta", "sigma", "u", "u_hat", "phi", "lambda", "q")

REF_VERTICES = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
REF_NORMALS = np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
REF_NORMALS[0] /= np.sqrt(2.0)
REF_EDGE_LENGTHS = np.array([np.sqrt(2.0), 1.0, 1.0])


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (n, 3) barycentric
    weights: np.ndarray  # (n,), sum 1/2
    degree: int

    @property
    def ref_points(self):
        """Cartesian reference coordinates (x, y) = (b1, b2)."""
        return self.points[:, 1:]


def _orbit(*bary):
    return sorted(set(permutations(bary)))


# (degree, [(weight on unit-area triangle, barycentric orbit generator)])
_RULES = {
    1: [(1.0, (1 / 3, 1 / 3, 1 / 3))],
    2: [(1 / 3, (2 / 3, 1 / 6, 1 / 6))],
    4: [(0.223381589678011, (0.108103018168070, 0.445948490915965, 0.445948490915965)),
        (0.109951743655322, (0.816847572980459, 0.091576213509771, 0.091576213509771))],
    5: [(0.225, (1 / 3, 1 / 3, 1 / 3)),
        (0.132394152788506, (0.059715871789770, 0.470142064105115, 0.470142064105115)),
        (0.125939180544827, (0.797426985353087, 0.101286507323456, 0.101286507323456))],
    6: [(0.116786275726379, (0.501426509658179, 0.249286745170910, 0.249286745170910)),
        (0.050844906370207, (0.873821971016996, 0.063089014491502, 0.063089014491502)),
        (0.082851075618374, (0.053145049844817, 0.310352451033784, 0.636502499121399))],
}
_RULES[3] = _RULES[4]


def quadrature(degree):
    """Symmetric rule with positive weights exact for polynomials of `degree`."""
    if degree not in range(1, 7):
        raise InvalidArgumentError(f"no quadrature rule of degree {degree}")
    pts, wts = [], []
    for w, gen in _RULES[degree]:
        orbit = _orbit(*gen)
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    pts = np.array(pts)
    pts /= pts.sum(axis=1, keepdims=True)
    wts = np.array(wts)
    wts *= 0.5 / wts.sum()
    return QuadratureRule(pts, wts, degree)


def barycentric(ref_point):
    x, y = np.asarray(ref_point, dtype=float)[..., 0], np.asarray(ref_point, dtype=float)[..., 1]
    return np.stack([1.0 - x - y, x, y], axis=-1)


def eval_p1disc_tensor_basis(ref_point):
    """The 12 basis tensors lambda_i e_c at one reference point, shape (12, 2, 2)."""
    lam = barycentric(ref_point)
    out = np.zeros((12, 2, 2))
    for i in range(3):
        for c in range(4):
            out[4 * i + c, c // 2, c % 2] = lam[i]
    return out


def _edge_gauss(n=3):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def _reference_bdm1():
    """Coefficients of the reference BDM1 basis in the monomials
    (1,0), (x,0), (y,0), (0,1), (0,x), (0,y); column m is basis function m."""
    s, w = _edge_gauss()
    dofs = np.zeros((6, 6))
    for i, (a, b) in enumerate(LOCAL_EDGES):
        xa, xb = REF_VERTICES[a], REF_VERTICES[b]
        pts = xa[None, :] + s[:, None] * (xb - xa)[None, :]
        hats = np.stack([1.0 - s, s])  # hat of a, hat of b along the edge
        x, y = pts[:, 0], pts[:, 1]
        one = np.ones_like(x)
        zero = np.zeros_like(x)
        monos = np.stack([np.stack([one, zero]), np.stack([x, zero]), np.stack([y, zero]),
                          np.stack([zero, one]), np.stack([zero, x]), np.stack([zero, y])])
        flux = np.einsum("jdq,d->jq", monos, REF_NORMALS[i])
        for slot in range(2):
            dofs[2 * i + slot] = REF_EDGE_LENGTHS[i] * (flux * hats[slot] * w).sum(axis=1)
    return np.linalg.inv(dofs)


BDM1_COEFFS = _reference_bdm1()
BDM1_DIV = BDM1_COEFFS[1] + BDM1_COEFFS[5]  # reference divergence of each basis field


def eval_bdm1_reference(ref_points):
    """Reference BDM1 values, shape (npts, 6, 2)."""
    p = np.atleast_2d(np.asarray(ref_points, dtype=float))
    x, y = p[:, 0], p[:, 1]
    c = BDM1_COEFFS
    vx = c[0][None, :] + x[:, None] * c[1][None, :] + y[:, None] * c[2][None, :]
    vy = c[3][None, :] + x[:, None] * c[4][None, :] + y[:, None] * c[5][None, :]
    return np.stack([vx, vy], axis=-1)


def eval_bdm1_row_basis(geometry, ref_point, edge_signs=None, endpoint_swap=None):
    """Piola-mapped BDM1 fields of one tensor row at a reference point, (6, 2).

    The 12 tensor basis fields of sigma are e_r ⊗ (these 6 fields), r = 0, 1.
    With `edge_signs` (3,) and `endpoint_swap` (3,) bool the fields are
    oriented and ordered by the global edge convention.
    """
    if not geometry.det > 0:
        raise InvalidArgumentError("degenerate cell")
    ref = eval_bdm1_reference(ref_point)[0]
    phys = ref @ geometry.jacobian.T / geometry.det
    if edge_signs is not None:
        phys = phys * np.repeat(np.asarray(edge_signs, dtype=float), 2)[:, None]
    if endpoint_swap is not None:
        perm = local_sigma_permutation(endpoint_swap)
        phys = phys[perm]
    return phys


def local_sigma_permutation(endpoint_swap):
    """Index map from global-ordered slots to reference slots for one cell."""
    perm = np.arange(6)
    for i, swap in enumerate(endpoint_swap):
        if swap:
            perm[2 * i], perm[2 * i + 1] = 2 * i + 1, 2 * i
    return perm


@dataclass(frozen=True, eq=False)
class DofLayout:
    counts: dict
    offsets: dict
    total_dofs: int
    theta_dofs: np.ndarray  # (C, 12)
    sigma_dofs: np.ndarray  # (C, 12) local 6 r + 2 i + slot (reference slot order)
    sigma_signs: np.ndarray  # (C, 12)
    u_dofs: np.ndarray  # (C, 2)
    u_hat_dofs: np.ndarray  # (C,)
    phi_dofs: np.ndarray  # (C,)
    lambda_dof: int
    q_dofs: np.ndarray  # (C, 12)

    def slice(self, name):
        return slice(self.offsets[name], self.offsets[name] + self.counts[name])

    @property
    def local_blocks(self):
        """(C, 24) theta and q dofs; they couple only within their cell."""
        return np.hstack([self.theta_dofs, self.q_dofs])


def build_dof_layout(mesh):
    """Enumerate dofs: field by field, cells before edges, lambda last but q."""
    C, E = mesh.num_cells, mesh.num_edges
    if C == 0 or E == 0:
        raise InvalidArgumentError("empty mesh")
    counts = {"theta": 12 * C, "sigma": 4 * E, "u": 2 * C, "u_hat": C,
              "phi": C, "lambda": 1, "q": 12 * C}
    offsets, run = {}, 0
    for name in FIELDS:
        offsets[name] = run
        run += counts[name]

    cells = np.arange(C)
    theta = offsets["theta"] + 12 * cells[:, None] + np.arange(12)[None, :]
    q = offsets["q"] + 12 * cells[:, None] + np.arange(12)[None, :]

    # reference slot s of local edge i sits on local vertex LOCAL_EDGES[i][s]
    ends = np.stack([mesh.cells[:, list(e)] for e in LOCAL_EDGES], axis=1)  # (C,3,2)
    swap = ends[:, :, 0] > ends[:, :, 1]
    sigma = np.empty((C, 12), dtype=np.int64)
    signs = np.empty((C, 12), dtype=np.int64)
    for r in range(2):
        for i in range(3):
            for s in range(2):
                gslot = np.where(swap[:, i], 1 - s, s)
                sigma[:, 6 * r + 2 * i + s] = (offsets["sigma"] + 4 * mesh.cell_edges[:, i]
                                               + 2 * r + gslot)
                signs[:, 6 * r + 2 * i + s] = mesh.cell_edge_signs[:, i]
    u = offsets["u"] + 2 * cells[:, None] + np.arange(2)[None, :]
    return DofLayout(counts, offsets, run, theta, sigma, signs, u,
                     offsets["u_hat"] + cells, offsets["phi"] + cells,
                     offsets["lambda"], q)
