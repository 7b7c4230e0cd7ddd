"""Benchmark problems: reservoir, lid-driven cavity, contracted channel, and a
manufactured Stokes solution."""
import numpy as np
from numpy.polynomial import Polynomial

from viscoflow.assembly import ProblemData
from viscoflow.mesh import build_channel, build_crossed_rect


def reservoir_force(x):
    return 300.0 * np.stack([x[..., 1] - 0.5, 0.5 - x[..., 0]], axis=-1)


def reservoir(nx=32):
    """Unit square, homogeneous Dirichlet, rotational body force."""
    return build_crossed_rect(nx, nx), ProblemData(f=reservoir_force, name="reservoir")


def _lid(x):
    return np.column_stack([np.ones(len(x)), np.zeros(len(x))])


def cavity(nx=32):
    """Unit square driven by u = (1, 0) on the open top edge, f = 0."""
    return build_crossed_rect(nx, nx), ProblemData(velocity={"top": _lid}, name="cavity")


def _parabolic_inflow(x):
    return np.column_stack([1.0 - x[:, 1] ** 2, np.zeros(len(x))])


def channel(resolution=8, length=4.0, half_height=1.0, contraction_ratio=0.5):
    """Contracted channel: parabolic inflow, no-slip walls, stress-free outflow."""
    mesh = build_channel(length, half_height, contraction_ratio, resolution)
    data = ProblemData(velocity={"inflow": _parabolic_inflow},
                       stress_free=frozenset({"outflow"}), name="channel")
    return mesh, data


class StokesMMS:
    """u = curl psi with psi = x^2 (1-x)^2 y^2 (1-y)^2, phi = x^3 - 1/4.

    With sigma = mu E(u) - phi I the body force is f = -mu/2 Δu + grad phi.
    """

    def __init__(self, mu=1.0):
        self.mu = mu
        b = Polynomial([0, 0, 1]) * Polynomial([1, -1]) ** 2
        self.B = [b.deriv(k) if k else b for k in range(5)]

    def _b(self, k, s):
        return self.B[k](s)

    def velocity(self, x):
        X, Y = x[..., 0], x[..., 1]
        b = self._b
        return np.stack([b(0, X) * b(1, Y), -b(1, X) * b(0, Y)], axis=-1)

    def pressure(self, x):
        return x[..., 0] ** 3 - 0.25

    def force(self, x):
        X, Y = x[..., 0], x[..., 1]
        b = self._b
        lap1 = b(2, X) * b(1, Y) + b(0, X) * b(3, Y)
        lap2 = -(b(3, X) * b(0, Y) + b(1, X) * b(2, Y))
        return np.stack([-0.5 * self.mu * lap1 + 3.0 * X ** 2, -0.5 * self.mu * lap2], axis=-1)

    def problem(self, nx):
        # u vanishes on the boundary, so the Dirichlet term is zero
        return build_crossed_rect(nx, nx), ProblemData(f=self.force, name="stokes-mms")


PRESETS = {"reservoir": reservoir, "cavity": cavity, "channel": channel}
