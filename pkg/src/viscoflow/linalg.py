"""Sparse storage and the direct solver for the nonsymmetric Newton systems.

CSR storage is scipy's; the factorization is SuperLU with a COLAMD
fill-reducing column ordering and partial pivoting.
"""
import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from viscoflow.errors import InvalidArgumentError, SingularMatrixError

RESIDUAL_TOL = 1e-10
PIVOT_TOL = 1e-14


def csr_from_triplets(n, rows, cols=None, vals=None):
    """Square CSR matrix from (row, col, value) triplets; duplicates are summed,
    explicit zeros kept.

    Accepts either three parallel arrays or a single sequence of triples.
    """
    if cols is None:
        trip = np.asarray(list(rows), dtype=float).reshape(-1, 3)
        rows, cols, vals = trip[:, 0].astype(np.int64), trip[:, 1].astype(np.int64), trip[:, 2]
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    vals = np.asarray(vals, dtype=float)
    if n < 1:
        raise InvalidArgumentError("matrix dimension must be >= 1")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= n or cols.max() >= n):
        raise InvalidArgumentError("triplet index out of range")
    mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    mat.sum_duplicates()
    mat.sort_indices()
    return mat


def _relres(A, x, b):
    return np.linalg.norm(A @ x - b) / max(np.linalg.norm(b), 1e-30)


def factorize(A):
    """LU factors of A; raises SingularMatrixError on a tiny pivot."""
    A = sp.csc_matrix(A)
    if A.shape[0] != A.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SingularMatrixError(str(exc)) from exc
    scale = abs(A).max() if A.nnz else 0.0
    pivots = np.abs(lu.U.diagonal())
    if scale == 0.0 or pivots.min() < PIVOT_TOL * scale:
        raise SingularMatrixError(
            f"pivot {pivots.min():.3e} below {PIVOT_TOL:g} * max|A| = {PIVOT_TOL * scale:.3e}")
    return lu


def direct_solve(A, b, refine=True):
    """Solve A x = b by sparse LU; one refinement pass if the residual misses
    the 1e-10 relative bound."""
    b = np.asarray(b, dtype=float)
    lu = factorize(A)
    x = lu.solve(b)
    if refine and _relres(A, x, b) > RESIDUAL_TOL:
        x = x + lu.solve(b - A @ x)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution")
    return x


def _block_diagonal(A_LL, nb, bs):
    coo = A_LL.tocoo()
    cell = coo.row // bs
    if np.any(coo.col // bs != cell):
        raise InvalidArgumentError("local dofs couple across blocks")
    blocks = np.zeros((nb, bs, bs))
    np.add.at(blocks, (cell, coo.row % bs, coo.col % bs), coo.data)
    return blocks


def condensed_solve(A, b, local_blocks, refine=True):
    """Solve A x = b after eliminating dofs that only couple within small blocks.

    `local_blocks` is an (nb, bs) index array; each row lists dofs whose
    mutual coupling is confined to that block. The dense blocks are inverted
    in batch and the Schur complement on the remaining dofs goes to sparse LU.
    Falls back to `direct_solve` when a block is singular.
    """
    A = sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    nb, bs = local_blocks.shape
    L = local_blocks.ravel()
    mask = np.ones(n, dtype=bool)
    mask[L] = False
    G = np.flatnonzero(mask)
    A_L = A[L]
    blocks = _block_diagonal(A_L[:, L], nb, bs)
    try:
        inv = np.linalg.inv(blocks)
        # a near-singular block shows up as a poor inverse
        err = np.abs(np.matmul(blocks, inv) - np.eye(bs)).max()
        if not np.isfinite(err) or err > 1e-6:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        return direct_solve(A, b, refine)
    Binv = sp.bsr_matrix((inv, np.arange(nb), np.arange(nb + 1)), shape=(L.size, L.size)).tocsr()
    A_G = A[G]
    A_GG, A_GL, A_LG = A_G[:, G], A_G[:, L], A_L[:, G]
    S = (A_GG - A_GL @ (Binv @ A_LG)).tocsc()
    lu = factorize(S)

    def solve(rhs):
        y_L = Binv @ rhs[L]
        x = np.empty(n)
        x[G] = lu.solve(rhs[G] - A_GL @ y_L)
        x[L] = y_L - Binv @ (A_LG @ x[G])
        return x

    x = solve(b)
    if refine and _relres(A, x, b) > RESIDUAL_TOL:
        x = x + solve(b - A @ x)
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("non-finite solution")
    return x


def dump_matrix_market(A, path):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A))
