"""Residual and slant Jacobian of the seven-field discrete system.

Rows are grouped by test function and share the numbering of the unknown
they pair with: xi -> theta, tau -> sigma, v -> u, v_hat -> u_hat,
psi -> phi, eta -> lambda, w -> q.  The residual is LHS - RHS of

    -(theta, tau) - (psi, tr theta) - (u, div tau) - (u_hat, tau) + lambda (tr tau)
        + <tau n, u_D>                                               = 0
    (nu(|theta|) theta, xi) + (q, xi) - (sigma, xi) - (phi, tr xi)  = 0
    -(v, div sigma) - (v_hat, sigma) + eta (tr sigma) - (f, v)      = 0
    (gamma tau_s theta - |theta|_gamma q, w)                         = 0

The viscous term uses a degree-4 rule; every term involving q uses the
3-point degree-2 rule, so the multiplier identity is collocated at those
points and (q, xi) is integrated exactly.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from viscoflow import fem, kernels, rheology
from viscoflow.errors import InvalidArgumentError
from viscoflow.linalg import csr_from_triplets
from viscoflow.mesh import LOCAL_EDGES, jacobians

VISCOUS_RULE = 4
MULTIPLIER_RULE = 2
LOAD_RULE = 6
EDGE_POINTS = 5


@dataclass(frozen=True)
class ProblemData:
    """Body force and boundary data.

    `velocity` maps boundary tags to callables giving u_D at (N, 2) points;
    tags absent from it carry u_D = 0.  Tags in `stress_free` get sigma n = 0
    (the do-nothing outflow of the mixed form).
    """
    f: object = None
    velocity: dict = field(default_factory=dict)
    stress_free: frozenset = frozenset()
    name: str = "custom"

    def force(self, x):
        if self.f is None:
            return np.zeros_like(x)
        return np.asarray(self.f(x), dtype=float).reshape(x.shape)

    def boundary_velocity(self, tag, x):
        fn = self.velocity.get(tag)
        if fn is None:
            return np.zeros_like(x)
        return np.asarray(fn(x), dtype=float).reshape(x.shape)


class State:
    """Flat coefficient vector with per-field views."""

    def __init__(self, layout, vector=None):
        self.layout = layout
        if vector is None:
            vector = np.zeros(layout.total_dofs)
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (layout.total_dofs,):
            raise InvalidArgumentError(
                f"state has {vector.shape} entries, layout needs {layout.total_dofs}")
        self.vector = vector

    def _block(self, name):
        return self.vector[self.layout.slice(name)]

    @property
    def theta(self):
        return self._block("theta").reshape(-1, 3, 4)

    @property
    def sigma(self):
        return self._block("sigma")

    @property
    def u(self):
        return self._block("u").reshape(-1, 2)

    @property
    def u_hat(self):
        return self._block("u_hat")

    @property
    def phi(self):
        return self._block("phi")

    @property
    def lam(self):
        return float(self.vector[self.layout.lambda_dof])

    @property
    def q(self):
        return self._block("q").reshape(-1, 3, 4)

    def copy(self):
        return State(self.layout, self.vector.copy())


def _edge_rule():
    s, w = np.polynomial.legendre.leggauss(EDGE_POINTS)
    return 0.5 * (s + 1.0), 0.5 * w


class Discretization:
    """Mesh-, data- and layout-dependent operators, built once per problem."""

    def __init__(self, mesh, data=None, layout=None):
        self.mesh = mesh
        self.data = data if data is not None else ProblemData()
        self.layout = layout if layout is not None else fem.build_dof_layout(mesh)
        L = self.layout
        C = mesh.num_cells
        self.jac, self.det = jacobians(mesh)
        self.area = 0.5 * self.det
        if np.any(self.det <= 0):
            raise InvalidArgumentError("mesh has non-positive cell orientation")

        r4 = fem.quadrature(VISCOUS_RULE)
        r2 = fem.quadrature(MULTIPLIER_RULE)
        self.lam4, self.W4 = r4.points, r4.weights[None, :] * self.det[:, None]
        self.lam2, self.W2 = r2.points, r2.weights[None, :] * self.det[:, None]
        self.collocation = np.linalg.inv(r2.points)  # point values -> vertex coefficients

        self._check_tags()
        self.constrained = self._constrained_dofs()
        self.K = self._linear_operator()
        self.load = self._load_vector()
        K_coo = self.K.tocoo()
        self._K_trip = (K_coo.row.astype(np.int64), K_coo.col.astype(np.int64), K_coo.data)
        self._rows_tt = np.broadcast_to(L.theta_dofs[:, :, None], (C, 12, 12)).ravel()
        self._cols_tt = np.broadcast_to(L.theta_dofs[:, None, :], (C, 12, 12)).ravel()
        self._rows_qt = np.broadcast_to(L.q_dofs[:, :, None], (C, 12, 12)).ravel()
        self._cols_qq = np.broadcast_to(L.q_dofs[:, None, :], (C, 12, 12)).ravel()

    # ---------------------------------------------------------------- setup
    def _check_tags(self):
        tags = set(self.mesh.boundary_tags.values())
        unknown = (set(self.data.velocity) | set(self.data.stress_free)) - tags
        if unknown:
            raise InvalidArgumentError(f"boundary tags {sorted(unknown)} not on mesh")
        if not self.data.stress_free:
            flux = boundary_flux(self.mesh, self.data)
            scale = max(1.0, boundary_speed(self.mesh, self.data))
            if abs(flux) > 1e-10 * scale:
                raise InvalidArgumentError(
                    f"Dirichlet data violates compatibility: net flux {flux:.3e}")

    def _constrained_dofs(self):
        L = self.layout
        mask = np.zeros(L.total_dofs, dtype=bool)
        edges = [e for e, t in self.mesh.boundary_tags.items() if t in self.data.stress_free]
        for e in edges:
            mask[L.offsets["sigma"] + 4 * e: L.offsets["sigma"] + 4 * e + 4] = True
        if edges:
            # sigma n = 0 somewhere fixes the constant-shift mode; lambda is idle
            mask[L.lambda_dof] = True
        return mask

    def sigma_fields(self, ref_points):
        """Signed Piola-mapped BDM1 values (C, npts, 6, 2) and divergences (C, 6)."""
        ref = fem.eval_bdm1_reference(ref_points)
        signs = self.layout.sigma_signs[:, :6].astype(float)
        psi = np.einsum("cde,kme->ckmd", self.jac, ref) / self.det[:, None, None, None]
        psi *= signs[:, None, :, None]
        div = fem.BDM1_DIV[None, :] / self.det[:, None] * signs
        return psi, div

    def physical_points(self, bary):
        v = self.mesh.vertices[self.mesh.cells]
        return np.einsum("ki,cid->ckd", bary, v)

    def _linear_operator(self):
        L, C = self.layout, self.mesh.num_cells
        psi, div = self.sigma_fields(fem.quadrature(VISCOUS_RULE).ref_points)
        W = self.W4
        rows, cols, vals = [], [], []

        def add(r, c, v):
            r, c, v = np.broadcast_arrays(r, c, v)
            rows.append(r.ravel())
            cols.append(c.ravel())
            vals.append(v.ravel())

        # -(theta, tau):  tau = e_r ⊗ psi_m,  theta basis lambda_i e_{2r+j}
        G = np.einsum("ck,ckmj,ki->cmji", W, psi, self.lam4)
        for r in range(2):
            for j in range(2):
                srow = L.sigma_dofs[:, 6 * r:6 * r + 6][:, :, None]
                tcol = L.theta_dofs[:, [4 * i + 2 * r + j for i in range(3)]][:, None, :]
                add(srow, tcol, -G[:, :, j, :])
                add(tcol.transpose(0, 2, 1), srow.transpose(0, 2, 1), -G[:, :, j, :].transpose(0, 2, 1))

        Ipsi = np.einsum("ck,ckmd->cmd", W, psi)
        for r in range(2):
            srow = L.sigma_dofs[:, 6 * r:6 * r + 6]
            # -(u, div tau)
            v = -div * self.area[:, None]
            add(srow, L.u_dofs[:, r:r + 1], v)
            add(L.u_dofs[:, r:r + 1], srow, v)
            # -(u_hat, tau) with u_hat = s [[0, 1], [-1, 0]]
            v = -Ipsi[:, :, 1] if r == 0 else Ipsi[:, :, 0]
            add(srow, L.u_hat_dofs[:, None], v)
            add(L.u_hat_dofs[:, None], srow, v)
            # lambda (tr tau)
            v = Ipsi[:, :, r]
            add(srow, L.lambda_dof, v)
            add(L.lambda_dof, srow, v)

        # -(psi, tr theta)
        tr_cols = L.theta_dofs[:, [0, 3, 4, 7, 8, 11]]
        v = np.repeat(-self.area[:, None] / 3.0, 6, axis=1)
        add(L.phi_dofs[:, None], tr_cols, v)
        add(tr_cols, L.phi_dofs[:, None], v)

        # (q, xi)
        mass = self.p1_mass()
        for a in range(4):
            idx = [4 * i + a for i in range(3)]
            add(L.theta_dofs[:, idx][:, :, None], L.q_dofs[:, idx][:, None, :], mass)

        n = L.total_dofs
        K = csr_from_triplets(n, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))
        return self._constrain(K)

    def p1_mass(self):
        """Exact local P1 mass matrices (C, 3, 3)."""
        return self.area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))[None]

    def _constrain(self, A):
        if not self.constrained.any():
            return A
        keep = sp.diags((~self.constrained).astype(float))
        return (keep @ A @ keep + sp.diags(self.constrained.astype(float))).tocsr()

    def _load_vector(self):
        L, mesh = self.layout, self.mesh
        F = np.zeros(L.total_dofs)
        rule = fem.quadrature(LOAD_RULE)
        x = self.physical_points(rule.points)
        f = self.data.force(x.reshape(-1, 2)).reshape(x.shape)
        Fu = np.einsum("ck,ckd->cd", rule.weights[None, :] * self.det[:, None], f)
        np.add.at(F, L.u_dofs, Fu)

        s, w = _edge_rule()
        for e, tag in mesh.boundary_tags.items():
            if tag in self.data.stress_free:
                continue
            c = mesh.edge_cells[e, 0]
            i = int(np.flatnonzero(mesh.cell_edges[c] == e)[0])
            a, b = LOCAL_EDGES[i]
            ref = fem.REF_VERTICES[a][None, :] + s[:, None] * (fem.REF_VERTICES[b] - fem.REF_VERTICES[a])[None, :]
            verts = mesh.vertices[mesh.cells[c]]
            pts = verts[0][None, :] + ref @ self.jac[c].T
            uD = self.data.boundary_velocity(tag, pts)
            if not np.any(uD):
                continue
            length = np.linalg.norm(verts[b] - verts[a])
            # outward unit normal of local edge i
            ccw = {0: (1, 2), 1: (2, 0), 2: (0, 1)}[i]
            t = verts[ccw[1]] - verts[ccw[0]]
            n_out = np.array([t[1], -t[0]]) / np.hypot(*t)
            psi = fem.eval_bdm1_reference(ref) @ self.jac[c].T / self.det[c]
            psi *= L.sigma_signs[c, :6][None, :, None]
            flux = psi @ n_out  # (npts, 6)
            for r in range(2):
                F[L.sigma_dofs[c, 6 * r:6 * r + 6]] -= length * np.einsum("k,km,k->m", w, flux, uD[:, r])
        F[self.constrained] = 0.0
        return F

    # ------------------------------------------------------------ operators
    def residual(self, params, state, parts=False):
        """Galerkin residual at `state` (vector of length total_dofs)."""
        vec = state.vector if isinstance(state, State) else np.asarray(state, dtype=float)
        if not np.all(np.isfinite(vec)):
            raise InvalidArgumentError("state has non-finite entries")
        return self.K @ vec - self.load + self.nonlinear_residual(params, vec)

    def nonlinear_residual(self, params, vec):
        """State-dependent part of the residual: viscous and q-identity rows."""
        L = self.layout
        theta = vec[L.slice("theta")].reshape(-1, 3, 4)
        q = vec[L.slice("q")].reshape(-1, 3, 4)
        rt, _ = kernels.theta_kernel(theta, self.lam4, self.W4, params, want_jac=False)
        if params.tau_s == 0.0:
            rq = self._q_mass(q)
        else:
            rq, _, _ = kernels.q_kernel(theta, q, self.lam2, self.W2, params, want_jac=False)
        R = np.zeros(L.total_dofs)
        R[L.slice("theta")] = rt.ravel()
        R[L.slice("q")] = rq.ravel()
        return R

    def jacobian(self, params, state, use_projection=True):
        """Slant Jacobian; q is projected onto |q| <= tau_s in the chi-term only."""
        vec = state.vector if isinstance(state, State) else np.asarray(state, dtype=float)
        if not np.all(np.isfinite(vec)):
            raise InvalidArgumentError("state has non-finite entries")
        L = self.layout
        theta = vec[L.slice("theta")].reshape(-1, 3, 4)
        q = vec[L.slice("q")].reshape(-1, 3, 4)
        _, jt = kernels.theta_kernel(theta, self.lam4, self.W4, params)
        if params.tau_s == 0.0:
            jqq = -self._q_mass_blocks()
            jqt = np.zeros_like(jqq)
        else:
            _, jqt, jqq = kernels.q_kernel(theta, q, self.lam2, self.W2, params,
                                           use_projection=use_projection)
        kr, kc, kv = self._K_trip
        rows = np.concatenate([kr, self._rows_tt, self._rows_qt, self._rows_qt])
        cols = np.concatenate([kc, self._cols_tt, self._cols_tt, self._cols_qq])
        vals = np.concatenate([kv, jt.ravel(), jqt.ravel(), jqq.ravel()])
        return csr_from_triplets(L.total_dofs, rows, cols, vals)

    def _q_mass_blocks(self):
        """(C, 12, 12) mass of the q space under the collocation rule."""
        m = np.einsum("ck,ki,kj->cij", self.W2, self.lam2, self.lam2)
        return np.einsum("cij,ab->ciajb", m, np.eye(4)).reshape(-1, 12, 12)

    def _q_mass(self, q):
        """-(q, w); replaces the q-identity rows when tau_s = 0, where the
        identity reduces to q = 0."""
        return -np.einsum("cmn,cn->cm", self._q_mass_blocks(), q.reshape(-1, 12))

    def stokes_system(self, params):
        """Linear system with nu = mu and all q terms removed (q rows: mass, q = 0)."""
        L, C = self.layout, self.mesh.num_cells
        mass = self.p1_mass()
        rows, cols, vals = [], [], []
        for a in range(4):
            idx = [4 * i + a for i in range(3)]
            for dofs, coef in ((L.theta_dofs, params.mu), (L.q_dofs, 1.0)):
                r = np.broadcast_to(dofs[:, idx][:, :, None], (C, 3, 3))
                c = np.broadcast_to(dofs[:, idx][:, None, :], (C, 3, 3))
                rows.append(r.ravel())
                cols.append(c.ravel())
                vals.append((coef * mass).ravel())
        kr, kc, kv = self._K_trip
        # drop the (q, xi) coupling from the cached operator
        q0 = L.offsets["q"]
        keep = ~((kc >= q0) & (kr < q0))
        A = csr_from_triplets(L.total_dofs,
                              np.concatenate([kr[keep]] + rows),
                              np.concatenate([kc[keep]] + cols),
                              np.concatenate([kv[keep]] + vals))
        return A, self.load.copy()

    # -------------------------------------------------------------- queries
    def multiplier_points(self, state):
        """theta and q at the collocation points, each (C, 3, 4)."""
        return (np.einsum("ki,cia->cka", self.lam2, state.theta),
                np.einsum("ki,cia->cka", self.lam2, state.q))

    def collocate_q(self, params, theta):
        """Vertex coefficients of q with q = gamma tau_s theta / |theta|_gamma at
        the collocation points."""
        th = np.einsum("ki,cia->cka", self.lam2, theta)
        qp = rheology.multiplier(params, th)
        return np.einsum("ik,cka->cia", self.collocation, qp)

    def block_slices(self):
        return {name: self.layout.slice(name) for name in fem.FIELDS}


def boundary_flux(mesh, data):
    """Net outward flux of the Dirichlet data, integral of u_D . n over the boundary."""
    s, w = _edge_rule()
    normals = mesh.edge_normals()
    total = 0.0
    for e, tag in mesh.boundary_tags.items():
        if tag not in data.velocity:
            continue
        a, b = mesh.vertices[mesh.edges[e]]
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        uD = data.boundary_velocity(tag, pts)
        c = mesh.edge_cells[e, 0]
        i = int(np.flatnonzero(mesh.cell_edges[c] == e)[0])
        n = normals[e] * mesh.cell_edge_signs[c, i]
        total += np.linalg.norm(b - a) * np.dot(w, uD @ n)
    return total


def boundary_speed(mesh, data):
    s, _ = _edge_rule()
    peak = 0.0
    for e, tag in mesh.boundary_tags.items():
        if tag in data.velocity:
            a, b = mesh.vertices[mesh.edges[e]]
            pts = a[None, :] + s[:, None] * (b - a)[None, :]
            peak = max(peak, float(np.abs(data.boundary_velocity(tag, pts)).max()))
    return peak


# Standalone entry points; they rebuild the discretization on every call.

def assemble_residual(mesh, layout, params, data, state):
    return Discretization(mesh, data, layout).residual(params, state)


def assemble_jacobian(mesh, layout, params, data, state, use_projection=True):
    return Discretization(mesh, data, layout).jacobian(params, state, use_projection)


def assemble_stokes_system(mesh, layout, params, data):
    return Discretization(mesh, data, layout).stokes_system(params)
