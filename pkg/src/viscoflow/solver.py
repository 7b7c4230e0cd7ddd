"""Semismooth Newton iteration for the regularized viscoplastic system."""
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from viscoflow import rheology
from viscoflow.assembly import Discretization, State
from viscoflow.errors import InvalidArgumentError, SingularMatrixError, StepFailure
from viscoflow.linalg import condensed_solve

log = logging.getLogger(__name__)

# residual norms below max(ABSOLUTE_FLOOR, DATA_FLOOR * ||res(0)||) are round-off
ABSOLUTE_FLOOR = 1e-14
DATA_FLOOR = 1e-12


@dataclass(frozen=True)
class SSNConfig:
    tol: float = 1e-5
    max_iters: int = 50
    use_projection: bool = True
    init: str = "stokes"  # stokes | zero | given

    def __post_init__(self):
        if not 0 < self.tol < 1:
            raise InvalidArgumentError("tol must lie in (0, 1)")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be >= 1")
        if self.init not in ("stokes", "zero", "given"):
            raise InvalidArgumentError(f"unknown init {self.init!r}")


@dataclass
class SolveReport:
    iterations: int = 0
    residuals: list = field(default_factory=list)
    relative_residuals: list = field(default_factory=list)
    converged: bool = False
    active_cells: int = 0
    active_fraction: float = 0.0
    qhat_max: list = field(default_factory=list)  # max |q_hat| per Jacobian
    num_cells: int = 0
    parameters: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


def active_set_stats(state, mesh, params):
    """Cells with gamma |theta(barycenter)| >= tau_s."""
    bary = np.einsum("i,cia->ca", np.full(3, 1.0 / 3.0), state.theta)
    active = rheology.chi_active(params, rheology.frobenius(bary))
    n = int(active.sum())
    return n, n / mesh.num_cells


def active_indicator(state, params):
    bary = state.theta.mean(axis=1)
    return rheology.chi_active(params, rheology.frobenius(bary))


def initialize(disc, params, config, state=None):
    """Starting iterate: Stokes solution with collocated q, zeros, or `state`."""
    if config.init == "given":
        if state is None:
            raise InvalidArgumentError("init='given' needs a state")
        return state.copy()
    if config.init == "zero":
        return State(disc.layout)
    A, b = disc.stokes_system(params)
    start = State(disc.layout, condensed_solve(A, b, disc.layout.local_blocks))
    start.q[:] = disc.collocate_q(params, start.theta)
    return start


def _qhat_max(disc, params, state, use_projection):
    _, qp = disc.multiplier_points(state)
    if use_projection:
        qp = rheology.project_q(params, qp)
    return float(rheology.frobenius(qp).max())


def ssn_step(disc, params, state, config, iteration=0, residual=None):
    """Newton increment and the residual norm at `state`."""
    if residual is None:
        residual = disc.residual(params, state)
    J = disc.jacobian(params, state, config.use_projection)
    try:
        delta = condensed_solve(J, -residual, disc.layout.local_blocks)
    except SingularMatrixError as exc:
        raise StepFailure(iteration, str(exc)) from exc
    return delta, float(np.linalg.norm(residual))


def ssn_solve(mesh, params, data, config=SSNConfig(), state=None, disc=None, callback=None):
    """Full-step semismooth Newton until ||res^n|| / ||res^0|| <= tol."""
    disc = disc or Discretization(mesh, data)
    state = initialize(disc, params, config, state)
    report = SolveReport(num_cells=mesh.num_cells,
                         parameters={**params.as_dict(), "tol": config.tol,
                                     "max_iters": config.max_iters,
                                     "use_projection": config.use_projection,
                                     "init": config.init})
    res = disc.residual(params, state)
    r0 = float(np.linalg.norm(res))
    report.residuals.append(r0)
    report.relative_residuals.append(1.0)
    if callback:
        callback(0, r0, 1.0)
    floor = max(ABSOLUTE_FLOOR, DATA_FLOOR * float(np.linalg.norm(disc.load)))
    converged = r0 < floor
    n = 0
    while not converged and n < config.max_iters:
        report.qhat_max.append(_qhat_max(disc, params, state, config.use_projection))
        delta, _ = ssn_step(disc, params, state, config, iteration=n + 1, residual=res)
        state.vector += delta
        n += 1
        res = disc.residual(params, state)
        rn = float(np.linalg.norm(res))
        report.residuals.append(rn)
        report.relative_residuals.append(rn / r0)
        log.info("SSN %3d  |res| = %.3e  rel = %.3e", n, rn, rn / r0)
        if callback:
            callback(n, rn, rn / r0)
        converged = rn / r0 <= config.tol or rn < floor
    report.iterations = n
    report.converged = bool(converged)
    report.active_cells, report.active_fraction = active_set_stats(state, mesh, params)
    return state, report


def multiplier_identity_residual(disc, params, state):
    """max |gamma tau_s theta - |theta|_gamma q| over the collocation points,
    relative to gamma tau_s max|theta| + tau_s."""
    th, qp = disc.multiplier_points(state)
    t = rheology.frobenius(th)
    gap = params.gamma * params.tau_s * th - rheology.huber_abs(params, t)[..., None] * qp
    scale = params.gamma * params.tau_s * t.max() + params.tau_s
    return float(rheology.frobenius(gap).max() / scale)
