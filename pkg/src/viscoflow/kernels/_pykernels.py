"""Vectorized numpy versions of the nonlinear element kernels.

Shapes: theta, q (C, 3, 4) vertex coefficients; lam (K, 3) barycentric values
at the quadrature points; W (C, K) physical weights.  Local index 4 i + a.
"""
import numpy as np

from viscoflow import rheology


def _at_points(coef, lam):
    return np.einsum("ki,cia->cka", lam, coef)


def theta_kernel(theta, lam, W, params, eps=rheology.EPS, want_jac=True):
    """Element residual  sum_k W nu(|th|) th : xi  and its Jacobian."""
    C = theta.shape[0]
    th = _at_points(theta, lam)
    t = np.sqrt(np.einsum("cka,cka->ck", th, th))
    nu = rheology.nu(params, t)
    res = np.einsum("ck,ki,cka->cia", W * nu, lam, th).reshape(C, 12)
    if not want_jac:
        return res, None
    big = t >= eps
    dnu_t = np.zeros_like(t)
    dnu_t[big] = rheology.nu_prime(params, t[big]) / t[big]
    M = nu[..., None, None] * np.eye(4) + dnu_t[..., None, None] * th[..., :, None] * th[..., None, :]
    jac = np.einsum("ck,ki,kj,ckab->ciajb", W, lam, lam, M).reshape(C, 12, 12)
    return res, jac


def q_kernel(theta, q, lam, W, params, use_projection=True, want_jac=True):
    """Element residual of  (gamma tau_s th - |th|_gamma q) : w  and its two
    Jacobian blocks (d/dtheta, d/dq)."""
    C = theta.shape[0]
    gt = params.gamma * params.tau_s
    th = _at_points(theta, lam)
    qv = _at_points(q, lam)
    t = np.sqrt(np.einsum("cka,cka->ck", th, th))
    hub = rheology.huber_abs(params, t)
    integrand = gt * th - hub[..., None] * qv
    res = np.einsum("ck,ki,cka->cia", W, lam, integrand).reshape(C, 12)
    if not want_jac:
        return res, None, None
    qh = rheology.project_q(params, qv) if use_projection else qv
    chi = rheology.chi_active(params, t).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ct = np.where(t > 0, params.gamma * chi / np.where(t > 0, t, 1.0), 0.0)
    Mt = gt * np.eye(4) - ct[..., None, None] * qh[..., :, None] * th[..., None, :]
    jac_t = np.einsum("ck,ki,kj,ckab->ciajb", W, lam, lam, Mt).reshape(C, 12, 12)
    mass = np.einsum("ck,ki,kj->cij", W * hub, lam, lam)
    jac_q = -np.einsum("cij,ab->ciajb", mass, np.eye(4)).reshape(C, 12, 12)
    return res, jac_t, jac_q
