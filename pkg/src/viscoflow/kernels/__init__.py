"""Nonlinear element kernels: compiled when the extension is built, numpy otherwise.

Set VISCOFLOW_KERNELS=python to force the fallback, VISCOFLOW_THREADS=n to
cap the number of worker threads used over cell chunks.
"""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from viscoflow.kernels import _pykernels as python_backend

try:
    if os.environ.get("VISCOFLOW_KERNELS", "").lower() == "python":
        raise ImportError("compiled kernels disabled by VISCOFLOW_KERNELS")
    from viscoflow.kernels import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

BACKEND = "cython" if compiled_backend is not None else "python"
_impl = compiled_backend if compiled_backend is not None else python_backend

# below this many cells a single chunk is cheaper than dispatch
_MIN_CHUNK = 2048


def num_threads():
    env = os.environ.get("VISCOFLOW_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _chunks(C):
    n = min(num_threads(), max(1, C // _MIN_CHUNK))
    bounds = np.linspace(0, C, n + 1).astype(int)
    return list(zip(bounds[:-1], bounds[1:]))


def theta_kernel(theta, lam, W, params, want_jac=True, backend=None):
    impl = backend or _impl
    chunks = _chunks(theta.shape[0])
    if impl is python_backend or len(chunks) == 1:
        if impl is python_backend and len(chunks) > 1:
            parts = [impl.theta_kernel(theta[a:b], lam, W[a:b], params, want_jac=want_jac)
                     for a, b in chunks]
            res = np.concatenate([r for r, _ in parts])
            jac = np.concatenate([j for _, j in parts]) if want_jac else None
            return res, jac
        return impl.theta_kernel(theta, lam, W, params, want_jac=want_jac)
    C = theta.shape[0]
    res = np.zeros((C, 12))
    jac = np.zeros((C if want_jac else 1, 12, 12))
    theta = np.ascontiguousarray(theta)
    W = np.ascontiguousarray(W)
    lam = np.ascontiguousarray(lam)
    with ThreadPoolExecutor(len(chunks)) as pool:
        list(pool.map(lambda ab: impl.theta_kernel(theta, lam, W, params, want_jac=want_jac,
                                                   c0=ab[0], c1=ab[1], out=(res, jac)), chunks))
    return res, (jac if want_jac else None)


def q_kernel(theta, q, lam, W, params, use_projection=True, want_jac=True, backend=None):
    impl = backend or _impl
    chunks = _chunks(theta.shape[0])
    if impl is python_backend or len(chunks) == 1:
        return impl.q_kernel(theta, q, lam, W, params, use_projection=use_projection,
                             want_jac=want_jac)
    C = theta.shape[0]
    n = C if want_jac else 1
    out = (np.zeros((C, 12)), np.zeros((n, 12, 12)), np.zeros((n, 12, 12)))
    theta, q = np.ascontiguousarray(theta), np.ascontiguousarray(q)
    W, lam = np.ascontiguousarray(W), np.ascontiguousarray(lam)
    with ThreadPoolExecutor(len(chunks)) as pool:
        list(pool.map(lambda ab: impl.q_kernel(theta, q, lam, W, params,
                                               use_projection=use_projection,
                                               want_jac=want_jac, c0=ab[0], c1=ab[1],
                                               out=out), chunks))
    if want_jac:
        return out
    return out[0], None, None
