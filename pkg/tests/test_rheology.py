import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscoflow.errors import InvalidArgumentError
from viscoflow.rheology import (
    ModelParams, chi_active, frobenius, huber_abs, multiplier, nu, nu_prime, project_q)

HB175 = ModelParams("hb", 1.75, 1.0, 1.0, 1e3)


def test_nu_examples():
    assert nu(HB175, 1.0) == 1.0
    bingham = ModelParams("hb", 2.0, 3.0, 1.0, 1.0)
    assert np.all(nu(bingham, np.array([1e-3, 1.0, 7.0])) == 3.0)
    assert nu(ModelParams("carreau", 2.0, 1.0, 1.0, 1.0), 3.0) == 1.0
    assert nu(ModelParams("casson", 2.0, 1.0, 2.5, 1.0), 2.5) == pytest.approx(3.0, rel=1e-15)


def test_casson_fixes_p():
    assert ModelParams("casson", 1.5).p == 2.0


def test_nu_prime_examples():
    assert np.all(nu_prime(ModelParams("hb", 2.0), np.array([0.0, 1.0, 5.0])) == 0.0)
    assert nu_prime(ModelParams("carreau", 1.5), 0.0) == 0.0
    # frozen from a central difference of nu with step 1e-6
    assert nu_prime(HB175, 1.0) == pytest.approx(-0.25, rel=1e-9)


@pytest.mark.parametrize("params", [
    HB175, ModelParams("hb", 4.0), ModelParams("carreau", 1.6), ModelParams("carreau", 4.0),
    ModelParams("casson", 2.0, 1.0, 2.5)])
def test_nu_prime_matches_central_difference(params):
    t = np.geomspace(1e-3, 1e2, 40)
    # Carreau's derivative vanishes linearly at 0, so its step must not shrink with t
    h = 1e-5 * (np.maximum(t, 1.0) if params.law.value == "carreau" else t)
    fd = (nu(params, t + h) - nu(params, t - h)) / (2 * h)
    assert np.allclose(nu_prime(params, t), fd, rtol=1e-6, atol=0)


def test_singular_laws_stay_finite_at_zero():
    for params in (ModelParams("hb", 1.3), ModelParams("casson", 2.0)):
        assert np.isfinite(nu(params, 0.0)) and np.isfinite(nu_prime(params, 0.0))


def test_negative_magnitude_rejected():
    for fn in (nu, nu_prime, huber_abs, chi_active):
        with pytest.raises(InvalidArgumentError):
            fn(HB175, -1e-3)


@pytest.mark.parametrize("kw", [dict(p=1.0), dict(mu=0.0), dict(tau_s=-1.0), dict(gamma=0.0)])
def test_params_validation(kw):
    with pytest.raises(InvalidArgumentError):
        ModelParams("hb", **{"p": 2.0, **kw})


def test_huber_examples():
    P = ModelParams("hb", 2.0, 1.0, 10.0, 1000.0)
    assert huber_abs(P, 0.001) == 10.0
    assert huber_abs(P, 1.0) == 1000.0
    assert huber_abs(P, 10.0 / 1000.0) == 10.0


def test_chi_examples():
    P = ModelParams("hb", 2.0, 1.0, 2.0, 4.0)
    assert chi_active(P, 1.0) == 1
    assert chi_active(P, 0.25) == 0
    assert chi_active(P, 0.5) == 1  # tie at the kink is active


def test_project_examples():
    P = ModelParams("hb", 2.0, 1.0, 3.0, 1.0)
    q = np.array([[1.0, 0.5], [0.0, -0.2]]) * 1.5 / frobenius(np.array([[1.0, 0.5], [0.0, -0.2]]))
    assert np.array_equal(project_q(P, q), q)
    assert np.allclose(project_q(P, np.diag([6.0, 0.0])), np.diag([3.0, 0.0]), rtol=0, atol=0)
    rng = np.random.default_rng(5)
    big = rng.normal(size=(200, 2, 2)) * 10 + 5
    big = big[frobenius(big) > 3.0]
    assert np.allclose(frobenius(project_q(P, big)), 3.0, rtol=0, atol=1e-14)


def test_project_with_zero_yield_stress():
    P = ModelParams("hb", 2.0, 1.0, 0.0, 1.0)
    out = project_q(P, np.array([[0.0, 0.0], [0.0, 0.0]]))
    assert np.array_equal(out, np.zeros((2, 2)))


tensors = st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=4, max_size=4).map(
    lambda v: np.array(v).reshape(2, 2))


@settings(max_examples=300, deadline=None)
@given(tensors, st.floats(0.0, 50.0))
def test_project_idempotent(q, tau_s):
    P = ModelParams("hb", 2.0, 1.0, tau_s, 1.0)
    once = project_q(P, q)
    assert np.array_equal(project_q(P, once), once)
    assert frobenius(once) <= tau_s * (1 + 1e-14) or frobenius(q) <= tau_s


@settings(max_examples=300, deadline=None)
@given(tensors, st.sampled_from([1.0, 1e3, 1e6]), st.floats(1e-3, 10.0))
def test_huber_quotient_bound(theta, gamma, tau_s):
    P = ModelParams("hb", 2.0, 1.0, tau_s, gamma)
    t = frobenius(theta)
    assert t / huber_abs(P, t) <= 1 / gamma * (1 + 1e-15)


@settings(max_examples=300, deadline=None)
@given(tensors, tensors, st.sampled_from([1.0, 1e3, 1e6]))
def test_huber_lipschitz(a, b, gamma):
    P = ModelParams("hb", 2.0, 1.0, 1.0, gamma)
    lhs = huber_abs(P, frobenius(a)) - huber_abs(P, frobenius(b))
    assert lhs <= gamma * frobenius(a - b) * (1 + 1e-15) + 1e-12


def test_multiplier_closed_form():
    P = ModelParams("hb", 2.0, 1.0, 2.0, 10.0)
    theta = np.array([[1.0, 0.0], [0.0, -1.0]])
    q = multiplier(P, theta)
    # active branch: q = tau_s theta / |theta|
    assert np.allclose(q, 2.0 * theta / np.sqrt(2.0), rtol=1e-15)
    small = 1e-3 * theta
    assert np.allclose(multiplier(P, small), 10.0 * small, rtol=1e-15)
