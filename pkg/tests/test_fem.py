from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from viscoflow.errors import InvalidArgumentError
from viscoflow.fem import (
    BDM1_DIV, FIELDS, build_dof_layout, eval_bdm1_reference, eval_bdm1_row_basis,
    eval_p1disc_tensor_basis, quadrature)
from viscoflow.mesh import LOCAL_EDGES, build_crossed_rect, cell_geometry


def monomial_integral(a, b):
    """Exact integral of x^a y^b over the reference triangle."""
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


@pytest.mark.parametrize("degree", range(1, 7))
def test_quadrature_exactness(degree):
    rule = quadrature(degree)
    assert np.all(rule.weights > 0)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-15)
    x, y = rule.ref_points.T
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            assert np.dot(rule.weights, x ** a * y ** b) == pytest.approx(
                float(monomial_integral(a, b)), abs=1e-14)


def test_degree_four_x2y2():
    rule = quadrature(4)
    x, y = rule.ref_points.T
    assert monomial_integral(2, 2) == Fraction(1, 180)
    assert np.dot(rule.weights, x * x * y * y) == pytest.approx(1 / 180, abs=1e-15)


@pytest.mark.parametrize("degree", [0, 7])
def test_quadrature_rejects_degree(degree):
    with pytest.raises(InvalidArgumentError):
        quadrature(degree)


def test_p1_basis_at_vertex_and_unity():
    B = eval_p1disc_tensor_basis([0.0, 0.0])
    units = np.eye(4).reshape(4, 2, 2)
    assert np.array_equal(B[:4], units) and not B[4:].any()
    B = eval_p1disc_tensor_basis([0.2, 0.3])
    assert np.allclose(B.reshape(3, 4, 2, 2).sum(axis=0), units, atol=1e-15)


def test_p1_basis_interpolates_linear_tensor():
    rng = np.random.default_rng(0)
    A0, Ax, Ay = rng.normal(size=(3, 2, 2))
    field = lambda p: A0 + p[0] * Ax + p[1] * Ay
    verts = [np.zeros(2), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    coef = np.concatenate([field(v).ravel() for v in verts])
    p = rng.dirichlet([1, 1, 1])[1:]
    value = np.einsum("k,kij->ij", coef, eval_p1disc_tensor_basis(p))
    assert np.allclose(value, field(p), atol=1e-14)


def _edge_functionals(field, vertices, normals):
    """Apply the six normal-trace moments to a vector field on a triangle."""
    s, w = np.polynomial.legendre.leggauss(4)
    s, w = 0.5 * (s + 1), 0.5 * w
    out = []
    for i, (a, b) in enumerate(LOCAL_EDGES):
        xa, xb = vertices[a], vertices[b]
        L = np.hypot(*(xb - xa))
        flux = np.array([normals[i] @ field(xa + t * (xb - xa)) for t in s])  # (ng, ...)
        for hat in (1 - s, s):
            out.append(L * np.einsum("q,q...->...", w * hat, flux))
    return np.array(out)


def test_reference_duality():
    ref = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    normals = np.array([[1.0, 1.0] / np.sqrt(2), [-1.0, 0.0], [0.0, -1.0]])
    D = _edge_functionals(lambda p: eval_bdm1_reference(p)[0].T, ref, normals)
    assert np.allclose(D, np.eye(6), atol=1e-12)
    # edge 0 moment functions have no flux through edges 1 and 2
    assert np.allclose(D[2:, :2], 0.0, atol=1e-12)


def test_piola_preserves_duality():
    mesh = build_crossed_rect(2, 3, bounds=(0.0, 1.3, -0.4, 0.9))
    for c in (0, 5, 17):
        g = cell_geometry(mesh, c)
        Jinv = np.linalg.inv(g.jacobian)
        normals = np.empty((3, 2))
        centroid = g.vertices.mean(axis=0)
        for i, (a, b) in enumerate(LOCAL_EDGES):
            t = g.vertices[b] - g.vertices[a]
            n = np.array([t[1], -t[0]]) / np.hypot(*t)
            normals[i] = n if n @ (g.vertices[a] - centroid) > 0 else -n
        field = lambda x: eval_bdm1_row_basis(g, Jinv @ (x - g.vertices[0])).T
        D = _edge_functionals(field, g.vertices, normals)
        assert np.allclose(D, np.eye(6), atol=1e-12)


def test_divergence_matches_finite_difference():
    h = 1e-6
    p = np.array([0.3, 0.2])
    dx = (eval_bdm1_reference(p + [h, 0]) - eval_bdm1_reference(p - [h, 0]))[0, :, 0] / (2 * h)
    dy = (eval_bdm1_reference(p + [0, h]) - eval_bdm1_reference(p - [0, h]))[0, :, 1] / (2 * h)
    assert np.allclose(dx + dy, BDM1_DIV, atol=1e-8)
    g = cell_geometry(build_crossed_rect(2, 2, bounds=(0, 3, 0, 1)), 3)
    Jinv = np.linalg.inv(g.jacobian)
    x0 = g.vertices.mean(axis=0)
    f = lambda x: eval_bdm1_row_basis(g, Jinv @ (x - g.vertices[0]))
    div = ((f(x0 + [h, 0]) - f(x0 - [h, 0]))[:, 0] + (f(x0 + [0, h]) - f(x0 - [0, h]))[:, 1]) / (2 * h)
    assert np.allclose(div, BDM1_DIV / g.det, atol=1e-7)


def test_element_divergence_theorem():
    g = cell_geometry(build_crossed_rect(3, 2), 7)
    Jinv = np.linalg.inv(g.jacobian)
    s, w = np.polynomial.legendre.leggauss(3)
    s, w = 0.5 * (s + 1), 0.5 * w
    boundary = np.zeros(6)
    ccw = ((1, 2), (2, 0), (0, 1))
    for i, (a, b) in enumerate(ccw):
        xa, xb = g.vertices[a], g.vertices[b]
        for t, wt in zip(s, w):
            v = eval_bdm1_row_basis(g, Jinv @ (xa + t * (xb - xa) - g.vertices[0]))
            boundary += g.edge_lengths[i] * wt * (v @ g.edge_normals[i])
    assert np.allclose(g.area * BDM1_DIV / g.det, boundary, atol=1e-12)


def test_constant_row_reproduced():
    mesh = build_crossed_rect(2, 2)
    g = cell_geometry(mesh, 2)
    c = np.array([0.7, -1.9])
    # moments of a constant field: (c . n) |e| / 2 against each hat
    dofs = []
    centroid = g.vertices.mean(axis=0)
    for a, b in LOCAL_EDGES:
        t = g.vertices[b] - g.vertices[a]
        n = np.array([t[1], -t[0]])
        n = n if n @ (g.vertices[a] - centroid) > 0 else -n
        dofs += [0.5 * c @ n] * 2
    for p in quadrature(4).ref_points:
        assert np.allclose(np.array(dofs) @ eval_bdm1_row_basis(g, p), c, atol=1e-13)


def test_normal_trace_continuity_two_cells():
    mesh = build_crossed_rect(1, 1)
    layout = build_dof_layout(mesh)
    e = int(np.flatnonzero(mesh.edge_cells[:, 1] >= 0)[0])
    x0, x1 = mesh.vertices[mesh.edges[e]]
    n = np.array([(x1 - x0)[1], -(x1 - x0)[0]])
    traces = []
    for c in mesh.edge_cells[e]:
        g = cell_geometry(mesh, int(c))
        Jinv = np.linalg.inv(g.jacobian)
        vals = {}
        for t in (0.1, 0.5, 0.8):
            x = x0 + t * (x1 - x0)
            phys = eval_bdm1_row_basis(g, Jinv @ (x - g.vertices[0]))
            signs = layout.sigma_signs[c, :6]
            for m in range(6):
                vals.setdefault(int(layout.sigma_dofs[c, m]), []).append(signs[m] * phys[m] @ n)
        traces.append(vals)
    shared = set(traces[0]) & set(traces[1])
    assert len(shared) == 2
    for d in shared:
        assert np.allclose(traces[0][d], traces[1][d], atol=1e-13)
    for vals in traces:
        for d in set(vals) - shared:
            assert np.allclose(vals[d], 0.0, atol=1e-13)


def test_degenerate_cell_rejected():
    g = cell_geometry(build_crossed_rect(1, 1), 0)
    bad = type(g)(g.jacobian * 0, 0.0, g.inv_transpose, 0.0, g.edge_normals, g.edge_lengths,
                  g.vertices)
    with pytest.raises(InvalidArgumentError):
        eval_bdm1_row_basis(bad, [0.2, 0.2])


def test_layout_unit_square():
    L = build_dof_layout(build_crossed_rect(1, 1))
    assert L.total_dofs == 48 + 32 + 8 + 4 + 4 + 1 + 48 == 145
    assert [L.counts[f] for f in FIELDS] == [48, 32, 8, 4, 4, 1, 48]
    run = 0
    for f in FIELDS:
        assert L.offsets[f] == run
        run += L.counts[f]
    assert L.local_blocks.shape == (4, 24)


def test_layout_fine_resolution():
    mesh = build_crossed_rect(100, 100)
    C, E = mesh.num_cells, mesh.num_edges
    assert (C, E) == (40_000, 60_200)
    L = build_dof_layout(mesh)
    assert L.total_dofs == 12 * C + 4 * E + 2 * C + C + C + 1 + 12 * C
    every = np.concatenate([L.theta_dofs.ravel(), np.unique(L.sigma_dofs), L.u_dofs.ravel(),
                            L.u_hat_dofs, L.phi_dofs, [L.lambda_dof], L.q_dofs.ravel()])
    assert np.array_equal(np.sort(every), np.arange(L.total_dofs))


def test_layout_rejects_empty_mesh():
    mesh = build_crossed_rect(1, 1)
    object.__setattr__(mesh, "cells", np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(InvalidArgumentError):
        build_dof_layout(mesh)
