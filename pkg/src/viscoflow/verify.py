"""Oracle and property suites behind `viscoflow verify`.

Each suite carries a mutation check showing it can catch a seeded bug.
"""
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from viscoflow import fem, kernels, problems, rheology
from viscoflow.assembly import Discretization, State
from viscoflow.errors import SeedFailure
from viscoflow.linalg import condensed_solve
from viscoflow.mesh import build_crossed_rect
from viscoflow.rheology import ModelParams


@dataclass
class SuiteResult:
    name: str
    passed: bool
    value: float
    detail: str = ""
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)


# ------------------------------------------------------------------ Huber
def _huber_case(params, a, b):
    """0: both active, 1: a active b inactive, 2: a inactive b active, 3: both inactive."""
    act_a = params.gamma * a >= params.tau_s
    act_b = params.gamma * b >= params.tau_s
    return np.where(act_a, np.where(act_b, 0, 1), np.where(act_b, 2, 3))


def huber_property_suite(samples=100_000, gammas=(1.0, 1e3, 1e6), tau_s=1.0, seed=0,
                         slack=1e-12, huber=None):
    """|A|_g - |B|_g <= g |A - B| on random 2x2 pairs, with the four-set split.

    Magnitudes are drawn log-uniformly around the kink tau_s/gamma; a third of
    the pairs sit within 1e-9 relative of it.  `huber` swaps in another
    regularized magnitude (mutation hook).
    """
    rng = np.random.default_rng(seed)
    huber = huber or rheology.huber_abs
    worst, counts, violations, example = -np.inf, np.zeros(4, dtype=int), 0, None
    for g in gammas:
        params = ModelParams(tau_s=tau_s, gamma=g)
        kink = tau_s / g
        A = rng.standard_normal((samples, 4))
        B = rng.standard_normal((samples, 4))
        sa = kink * 10.0 ** rng.uniform(-1, 1, samples)
        sb = kink * 10.0 ** rng.uniform(-1, 1, samples)
        near = rng.random(samples) < 1 / 3
        sa[near] = kink * (1 + 1e-9 * rng.standard_normal(near.sum()))
        A *= (sa / rheology.frobenius(A))[:, None]
        # half of the pairs are close, so the right-hand side is small
        close = rng.random(samples) < 0.5
        B[close] = A[close] + 1e-3 * kink * rng.standard_normal((close.sum(), 4))
        B[~close] *= (sb[~close] / rheology.frobenius(B[~close]))[:, None]
        # collinear pairs make the triangle inequality tight
        par = rng.random(samples) < 0.1
        B[par] = A[par] * (sb[par] / sa[par])[:, None]
        a, b = rheology.frobenius(A), rheology.frobenius(B)
        lhs = huber(params, a) - huber(params, b)
        rhs = g * rheology.frobenius(A - B)
        gap = lhs - rhs
        bad = gap > slack
        violations += int(bad.sum())
        if bad.any() and example is None:
            k = int(np.argmax(gap))
            example = dict(gamma=g, A=A[k].tolist(), B=B[k].tolist(), gap=float(gap[k]))
        worst = max(worst, float(gap.max()))
        case = _huber_case(params, a, b)
        counts += np.bincount(case, minlength=4)
        # case-wise bounds for each active/inactive combination
        ii = case == 3
        ia = case == 2
        violations += int((np.abs(lhs[ii]) > slack).sum() + (lhs[ia] > slack).sum())
    covered = bool(np.all(counts > 0))
    detail = (f"violations={violations} worst gap={worst:.3e} sets(AA,AI,IA,II)="
              f"{counts.tolist()}")
    if example:
        detail += f" counterexample={example}"
    return SuiteResult("huber inequality", violations == 0 and covered, worst, detail,
                       extra=dict(counts=counts.tolist(), violations=violations,
                                  counterexample=example))


# ------------------------------------------------------------ monotonicity
def a_gamma(disc, params, theta):
    """theta-rows of the residual restricted to the viscous and Huber terms,
    (C, 12) for theta of shape (C, 3, 4)."""
    rt, _ = kernels.theta_kernel(theta, disc.lam4, disc.W4, params, want_jac=False)
    th = np.einsum("ki,cia->cka", disc.lam2, theta)
    qp = rheology.multiplier(params, th)
    rt = rt + np.einsum("ck,ki,cka->cia", disc.W2, disc.lam2, qp).reshape(-1, 12)
    return rt


def monotonicity_suite(nx=8, p_values=(1.6, 1.75, 2.0, 4.0), samples=1000, seed=0,
                       law="hb", tau_s=1.0, gamma=10.0, operator=None):
    """min over random pairs of <A(t1) - A(t2), t1 - t2>; pass iff >= -1e-12."""
    rng = np.random.default_rng(seed)
    disc = Discretization(build_crossed_rect(nx, nx))
    op = operator or a_gamma
    C = disc.mesh.num_cells
    lowest = np.inf
    for p in p_values:
        params = ModelParams(law, p, 1.0, tau_s, gamma)
        for _ in range(samples):
            s1, s2 = (tau_s / gamma) * 10.0 ** rng.uniform(-1, 1, 2)
            t1 = s1 * rng.standard_normal((C, 3, 4))
            t2 = s2 * rng.standard_normal((C, 3, 4))
            if rng.random() < 0.25:
                t2 = t1 + 1e-3 * s1 * rng.standard_normal((C, 3, 4))
            pair = float(np.dot((op(disc, params, t1) - op(disc, params, t2)).ravel(),
                                (t1 - t2).ravel()))
            lowest = min(lowest, pair)
    return SuiteResult("operator monotonicity", lowest >= -1e-12, lowest,
                       f"min pairing {lowest:.3e} over {samples * len(p_values)} pairs")


# ------------------------------------------------------------ FD Jacobian
def random_smooth_state(disc, params, rng, margin=1e-3, max_draws=100, q_radius=0.9):
    """Random state with |theta| >= 1e-3 everywhere it is sampled and every
    collocation point at least margin * tau_s / gamma away from the kink.
    q lies inside the ball |q| <= q_radius * tau_s at the collocation points."""
    L = disc.layout
    C = disc.mesh.num_cells
    kink = params.tau_s / params.gamma if params.tau_s > 0 else 0.0
    scale = kink if kink > 0 else 1.0
    for _ in range(max_draws):
        state = State(L, rng.standard_normal(L.total_dofs))
        state.vector[L.slice("theta")] *= scale
        th4 = np.einsum("ki,cia->cka", disc.lam4, state.theta)
        th2 = np.einsum("ki,cia->cka", disc.lam2, state.theta)
        t4, t2 = rheology.frobenius(th4), rheology.frobenius(th2)
        if t4.min() < 1e-3 or t2.min() < 1e-3:
            continue
        if kink > 0 and np.min(np.abs(t2 - kink)) < margin * kink:
            continue
        qp = rng.standard_normal((C, 3, 4))
        r = q_radius * params.tau_s * rng.random((C, 3, 1)) ** 0.5
        qp *= r / rheology.frobenius(qp)[..., None]
        state.vector[L.slice("q")] = np.einsum("ik,cka->cia", disc.collocation, qp).ravel()
        return state
    raise SeedFailure(f"no kink-free state in {max_draws} draws")


def fd_jacobian(disc, params, state, rel_step=1e-6):
    """Central differences of the residual, step rel_step * (1 + |x_j|).

    The affine part K x - b is differenced as K (x+ - x-), which is the same
    quotient without the cancellation that would otherwise swamp entries
    near the 1e-8 cutoff.
    """
    x = state.vector
    n = x.size
    J = np.empty((n, n))
    for j in range(n):
        h = rel_step * (1.0 + abs(x[j]))
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (disc.K @ (xp - xm) + disc.nonlinear_residual(params, xp)
                   - disc.nonlinear_residual(params, xm)) / (2 * h)
    return J


def jacobian_error(J, J_fd, floor=1e-8, by_column=False):
    """Largest relative gap between J and J_fd.

    Entrywise (default): |J - Jfd| / max(|J|, |Jfd|) over entries above `floor`.
    by_column: the gap in each column relative to that column's largest entry,
    which is immune to round-off in near-cancelling small entries.
    """
    J = np.asarray(J.todense()) if hasattr(J, "todense") else np.asarray(J)
    big = np.maximum(np.abs(J), np.abs(J_fd))
    gap = np.abs(J - J_fd)
    if by_column:
        big, gap = big.max(axis=0), gap.max(axis=0)
    mask = big > floor
    if not mask.any():
        return 0.0
    return float(np.max(gap[mask] / big[mask]))


def fd_jacobian_check(nx=4, params=None, seed=0, use_projection=True, mutate=None,
                      state=None, data=None, by_column=False):
    """Largest relative gap between the assembled slant Jacobian and central
    differences of the residual at a random kink-free state."""
    params = params or ModelParams("hb", 1.75, 1.0, 1.5, 1.0)
    disc = Discretization(build_crossed_rect(nx, nx), data)
    rng = np.random.default_rng(seed)
    if state is None:
        state = random_smooth_state(disc, params, rng)
    J = disc.jacobian(params, state, use_projection).toarray()
    if mutate is not None:
        J = mutate(disc, J)
    return jacobian_error(J, fd_jacobian(disc, params, state), by_column=by_column)


def corrupt_theta_block(disc, J, factor=1.01):
    """Mutation: scale the theta-theta block."""
    J = J.copy()
    t = disc.layout.slice("theta")
    J[t, t] *= factor
    return J


# ------------------------------------------------------------------- MMS
def mms_errors(nx, mu=1.0):
    mms = problems.StokesMMS(mu)
    mesh, data = mms.problem(nx)
    disc = Discretization(mesh, data)
    params = ModelParams("hb", 2.0, mu, 0.0, 1.0)
    A, b = disc.stokes_system(params)
    s = State(disc.layout, condensed_solve(A, b, disc.layout.local_blocks))
    rule = fem.quadrature(6)
    x = disc.physical_points(rule.points)
    W = rule.weights[None, :] * disc.det[:, None]
    eu = np.sqrt(np.sum(W * np.sum((mms.velocity(x) - s.u[:, None, :]) ** 2, axis=-1)))
    ep = np.sqrt(np.sum(W * (mms.pressure(x) - s.phi[:, None]) ** 2))
    return eu, ep


def stokes_mms_convergence(levels=(8, 16, 32)):
    """Observed L2 rates for velocity and pressure; pass iff every velocity
    rate >= 0.9 and errors decrease."""
    errs = np.array([mms_errors(n) for n in levels])
    ratio = np.log(np.asarray(levels[1:]) / np.asarray(levels[:-1]))
    rates = np.log(errs[:-1] / errs[1:]) / ratio[:, None]
    ok = bool(np.all(rates[:, 0] >= 0.9) and np.all(np.diff(errs[:, 0]) < 0))
    return SuiteResult("stokes manufactured convergence", ok, float(rates[:, 0].min()),
                       f"velocity rates {np.round(rates[:, 0], 3).tolist()} "
                       f"pressure rates {np.round(rates[:, 1], 3).tolist()}",
                       extra=dict(errors=errs.tolist(), rates=rates.tolist()))


# ------------------------------------------------------------------ driver
def _timed(fn, *args, **kw):
    t = time.perf_counter()
    res = fn(*args, **kw)
    res.seconds = time.perf_counter() - t
    return res


FD_TOL = 1e-5


def _fd_suite(p_values=(1.75, 2.0, 4.0), seed=0):
    worst = 0.0
    for p in p_values:
        worst = max(worst, fd_jacobian_check(4, ModelParams("hb", p, 1.0, 1.5, 1.0), seed))
    return SuiteResult("slant Jacobian vs finite differences", worst <= FD_TOL, worst,
                       f"max relative error {worst:.3e} for p in {list(p_values)}")


def _fd_mutation(seed=0):
    err = fd_jacobian_check(4, ModelParams("hb", 1.75, 1.0, 1.5, 1.0), seed,
                            mutate=corrupt_theta_block)
    return SuiteResult("mutation: corrupted Jacobian block detected", err > FD_TOL, err,
                       f"error with scaled theta block {err:.3e}")


def _huber_mutation(seed=0):
    def wrong(params, t):
        return np.maximum(params.tau_s, 2.0 * params.gamma * t)
    res = huber_property_suite(20_000, seed=seed, huber=wrong)
    return SuiteResult("mutation: broken Huber magnitude detected", not res.passed,
                       res.value, res.detail.split(" counterexample")[0])


def _monotonicity_mutation(seed=0):
    def flipped(disc, params, theta):
        return -a_gamma(disc, params, theta)
    res = monotonicity_suite(4, (1.75,), 20, seed, operator=flipped)
    return SuiteResult("mutation: non-monotone operator detected", not res.passed,
                       res.value, res.detail)


def run_all(seed=0, quick=False):
    n_huber = 20_000 if quick else 100_000
    n_mono = 100 if quick else 1000
    levels = (4, 8, 16) if quick else (8, 16, 32)
    return [
        _timed(huber_property_suite, n_huber, seed=seed),
        _timed(_huber_mutation, seed),
        _timed(monotonicity_suite, 8, samples=n_mono // 4, seed=seed),
        _timed(_monotonicity_mutation, seed),
        _timed(_fd_suite, seed=seed),
        _timed(_fd_mutation, seed),
        _timed(stokes_mms_convergence, levels),
    ]


def print_tap(results, stream=sys.stdout):
    """TAP listing; returns 0 when every suite passed."""
    print(f"1..{len(results)}", file=stream)
    for k, r in enumerate(results, 1):
        tag = "ok" if r.passed else "not ok"
        print(f"{tag} {k} - {r.name} # {r.detail} ({r.seconds:.1f}s)", file=stream)
    return 0 if all(r.passed for r in results) else 1
