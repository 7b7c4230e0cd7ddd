# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled element kernels; same contract as the numpy fallback."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fmax
from libc.float cimport DBL_EPSILON

cnp.import_array()

# law codes: 0 Herschel-Bulkley, 1 Carreau with yield, 2 Casson


cdef inline double _nu(int law, double p, double mu, double tau_s, double eps, double t) noexcept nogil:
    if law == 0:
        if p == 2.0:
            return mu
        return mu * pow(fmax(t, eps), p - 2.0)
    if law == 1:
        return mu * pow(1.0 + t * t, (p - 2.0) / 2.0)
    return mu + 2.0 * sqrt(tau_s / fmax(t, eps))


cdef inline double _nu_prime(int law, double p, double mu, double tau_s, double eps, double t) noexcept nogil:
    if law == 0:
        if p == 2.0:
            return 0.0
        return mu * (p - 2.0) * pow(fmax(t, eps), p - 3.0)
    if law == 1:
        return mu * (p - 2.0) * t * pow(1.0 + t * t, (p - 4.0) / 2.0)
    return -sqrt(tau_s) * pow(fmax(t, eps), -1.5)


cdef void _theta_loop(const double[:, :, ::1] theta, const double[:, ::1] lam,
                      const double[:, ::1] W, int law, double p, double mu,
                      double tau_s, double eps, bint want_jac,
                      double[:, ::1] res, double[:, :, ::1] jac,
                      Py_ssize_t c0, Py_ssize_t c1) noexcept nogil:
    cdef Py_ssize_t c, k, i, j, a, b
    cdef Py_ssize_t K = lam.shape[0]
    cdef double th[4]
    cdef double M[4][4]
    cdef double t, nu, dnu_t, w, wi, wij
    for c in range(c0, c1):
        for k in range(K):
            for a in range(4):
                th[a] = lam[k, 0] * theta[c, 0, a] + lam[k, 1] * theta[c, 1, a] + lam[k, 2] * theta[c, 2, a]
            t = sqrt(th[0] * th[0] + th[1] * th[1] + th[2] * th[2] + th[3] * th[3])
            nu = _nu(law, p, mu, tau_s, eps, t)
            w = W[c, k]
            for i in range(3):
                wi = w * lam[k, i] * nu
                for a in range(4):
                    res[c, 4 * i + a] += wi * th[a]
            if not want_jac:
                continue
            if t >= eps:
                dnu_t = _nu_prime(law, p, mu, tau_s, eps, t) / t
            else:
                dnu_t = 0.0
            for a in range(4):
                for b in range(4):
                    M[a][b] = dnu_t * th[a] * th[b]
                M[a][a] += nu
            for i in range(3):
                for j in range(3):
                    wij = w * lam[k, i] * lam[k, j]
                    for a in range(4):
                        for b in range(4):
                            jac[c, 4 * i + a, 4 * j + b] += wij * M[a][b]


cdef void _q_loop(const double[:, :, ::1] theta, const double[:, :, ::1] q,
                  const double[:, ::1] lam, const double[:, ::1] W,
                  double tau_s, double gamma, bint use_projection, bint want_jac,
                  double[:, ::1] res, double[:, :, ::1] jac_t, double[:, :, ::1] jac_q,
                  Py_ssize_t c0, Py_ssize_t c1) noexcept nogil:
    cdef Py_ssize_t c, k, i, j, a, b
    cdef Py_ssize_t K = lam.shape[0]
    cdef double th[4]
    cdef double qv[4]
    cdef double qh[4]
    cdef double M[4][4]
    cdef double t, qn, hub, ct, scale, w, wi, wij
    cdef double gt = gamma * tau_s
    for c in range(c0, c1):
        for k in range(K):
            for a in range(4):
                th[a] = lam[k, 0] * theta[c, 0, a] + lam[k, 1] * theta[c, 1, a] + lam[k, 2] * theta[c, 2, a]
                qv[a] = lam[k, 0] * q[c, 0, a] + lam[k, 1] * q[c, 1, a] + lam[k, 2] * q[c, 2, a]
            t = sqrt(th[0] * th[0] + th[1] * th[1] + th[2] * th[2] + th[3] * th[3])
            hub = fmax(tau_s, gamma * t)
            w = W[c, k]
            for i in range(3):
                wi = w * lam[k, i]
                for a in range(4):
                    res[c, 4 * i + a] += wi * (gt * th[a] - hub * qv[a])
            if not want_jac:
                continue
            if use_projection:
                qn = sqrt(qv[0] * qv[0] + qv[1] * qv[1] + qv[2] * qv[2] + qv[3] * qv[3])
                scale = tau_s / qn if qn > tau_s * (1.0 + 8.0 * DBL_EPSILON) else 1.0
            else:
                scale = 1.0
            for a in range(4):
                qh[a] = scale * qv[a]
            if t > 0.0 and gamma * t >= tau_s:
                ct = gamma / t
            else:
                ct = 0.0
            for a in range(4):
                for b in range(4):
                    M[a][b] = -ct * qh[a] * th[b]
                M[a][a] += gt
            for i in range(3):
                for j in range(3):
                    wij = w * lam[k, i] * lam[k, j]
                    for a in range(4):
                        jac_q[c, 4 * i + a, 4 * j + a] -= wij * hub
                        for b in range(4):
                            jac_t[c, 4 * i + a, 4 * j + b] += wij * M[a][b]


def theta_kernel(theta, lam, W, params, double eps=1e-10, bint want_jac=True,
                 Py_ssize_t c0=0, c1=None, out=None):
    cdef double[:, :, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[:, ::1] lm = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[:, ::1] ww = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t C = th.shape[0]
    cdef Py_ssize_t end = C if c1 is None else c1
    if out is None:
        res = np.zeros((C, 12))
        jac = np.zeros((C if want_jac else 1, 12, 12))
    else:
        res, jac = out
    cdef double[:, ::1] r = res
    cdef double[:, :, ::1] jv = jac
    cdef int law = params.law.code
    cdef double p = params.p, mu = params.mu, tau_s = params.tau_s
    with nogil:
        _theta_loop(th, lm, ww, law, p, mu, tau_s, eps, want_jac, r, jv, c0, end)
    return res, (jac if want_jac else None)


def q_kernel(theta, q, lam, W, params, bint use_projection=True, bint want_jac=True,
             Py_ssize_t c0=0, c1=None, out=None):
    cdef double[:, :, ::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef double[:, :, ::1] qq = np.ascontiguousarray(q, dtype=np.float64)
    cdef double[:, ::1] lm = np.ascontiguousarray(lam, dtype=np.float64)
    cdef double[:, ::1] ww = np.ascontiguousarray(W, dtype=np.float64)
    cdef Py_ssize_t C = th.shape[0]
    cdef Py_ssize_t end = C if c1 is None else c1
    if out is None:
        n = C if want_jac else 1
        res = np.zeros((C, 12))
        jt = np.zeros((n, 12, 12))
        jq = np.zeros((n, 12, 12))
    else:
        res, jt, jq = out
    cdef double[:, ::1] r = res
    cdef double[:, :, ::1] jtv = jt
    cdef double[:, :, ::1] jqv = jq
    cdef double tau_s = params.tau_s, gamma = params.gamma
    with nogil:
        _q_loop(th, qq, lm, ww, tau_s, gamma, use_projection, want_jac, r, jtv, jqv, c0, end)
    if want_jac:
        return res, jt, jq
    return res, None, None
