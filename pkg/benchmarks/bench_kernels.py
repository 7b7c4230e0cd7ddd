"""Compiled vs numpy element kernels, plus end-to-end residual/Jacobian assembly.

    python benchmarks/bench_kernels.py [--nx 64] [--repeat 5]
"""
import argparse
import time

import numpy as np

from viscoflow import kernels, problems
from viscoflow.assembly import Discretization
from viscoflow.rheology import ModelParams
from viscoflow.solver import SSNConfig, initialize


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    mesh, data = problems.reservoir(args.nx)
    disc = Discretization(mesh, data)
    P = ModelParams("hb", 1.75, 1.0, 10.0, 1e3)
    state = initialize(disc, P, SSNConfig())
    lay = disc.layout
    theta = state.theta.reshape(-1, 3, 4)
    q = state.q.reshape(-1, 3, 4)

    backends = {"python": kernels.python_backend}
    if kernels.compiled_backend is not None:
        backends["cython"] = kernels.compiled_backend
    print(f"cells={mesh.num_cells} dofs={lay.total_dofs} default backend={kernels.BACKEND} "
          f"threads={kernels.num_threads()}")
    ref = None
    for name, impl in backends.items():
        t_theta = best_of(lambda: kernels.theta_kernel(theta, disc.lam4, disc.W4, P,
                                                       backend=impl), args.repeat)
        t_q = best_of(lambda: kernels.q_kernel(theta, q, disc.lam2, disc.W2, P,
                                               backend=impl), args.repeat)
        out = kernels.theta_kernel(theta, disc.lam4, disc.W4, P, backend=impl)
        gap = 0.0 if ref is None else np.abs(out[1] - ref[1]).max() / np.abs(ref[1]).max()
        ref = ref or out
        print(f"{name:7s} theta_kernel {t_theta * 1e3:8.2f} ms  q_kernel {t_q * 1e3:8.2f} ms  "
              f"rel. gap to python {gap:.1e}")
    t_res = best_of(lambda: disc.residual(P, state), args.repeat)
    t_jac = best_of(lambda: disc.jacobian(P, state), args.repeat)
    print(f"assembly ({kernels.BACKEND}): residual {t_res * 1e3:.1f} ms  jacobian {t_jac * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
