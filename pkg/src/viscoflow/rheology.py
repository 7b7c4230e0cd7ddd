"""Viscosity laws with yield stress and the Huber-regularized plastic term.

All functions are vectorized over numpy arrays of strain-rate magnitudes.
"""
import enum
from dataclasses import dataclass

import numpy as np

from viscoflow.errors import InvalidArgumentError

# floor for |theta| in the singular laws; nu(t) * t -> 0 analytically
EPS = 1e-10
# rounding allowance in project_q
PROJECT_ULPS = 8


class Law(str, enum.Enum):
    HERSCHEL_BULKLEY = "hb"
    CARREAU_YIELD = "carreau"
    CASSON = "casson"

    @property
    def code(self):
        return {"hb": 0, "carreau": 1, "casson": 2}[self.value]


@dataclass(frozen=True)
class ModelParams:
    law: Law = Law.HERSCHEL_BULKLEY
    p: float = 2.0
    mu: float = 1.0
    tau_s: float = 1.0
    gamma: float = 1e3

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))
        if self.law is Law.CASSON:
            object.__setattr__(self, "p", 2.0)
        if not self.p > 1:
            raise InvalidArgumentError(f"flow index p must exceed 1, got {self.p}")
        if not self.mu > 0:
            raise InvalidArgumentError(f"mu must be positive, got {self.mu}")
        if not self.tau_s >= 0:
            raise InvalidArgumentError(f"tau_s must be nonnegative, got {self.tau_s}")
        if not self.gamma > 0:
            raise InvalidArgumentError(f"gamma must be positive, got {self.gamma}")

    def as_dict(self):
        return {"law": self.law.value, "p": self.p, "mu": self.mu,
                "tau_s": self.tau_s, "gamma": self.gamma}


def _check(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise InvalidArgumentError("strain-rate magnitude must be nonnegative")
    return t


def nu(params, t):
    """Viscosity factor nu(t) so that the viscous stress is nu(|T|) T."""
    t = _check(t)
    law, p, mu = params.law, params.p, params.mu
    if law is Law.HERSCHEL_BULKLEY:
        if p == 2.0:
            return np.full_like(t, mu)
        return mu * np.maximum(t, EPS) ** (p - 2.0)
    if law is Law.CARREAU_YIELD:
        return mu * (1.0 + t * t) ** ((p - 2.0) / 2.0)
    return mu + 2.0 * np.sqrt(params.tau_s / np.maximum(t, EPS))


def nu_prime(params, t):
    """Derivative of nu with the same floor as `nu`."""
    t = _check(t)
    law, p, mu = params.law, params.p, params.mu
    if law is Law.HERSCHEL_BULKLEY:
        if p == 2.0:
            return np.zeros_like(t)
        return mu * (p - 2.0) * np.maximum(t, EPS) ** (p - 3.0)
    if law is Law.CARREAU_YIELD:
        return mu * (p - 2.0) * t * (1.0 + t * t) ** ((p - 4.0) / 2.0)
    return -np.sqrt(params.tau_s) * np.maximum(t, EPS) ** -1.5


def huber_abs(params, t):
    """Regularized magnitude max(tau_s, gamma t)."""
    t = _check(t)
    return np.maximum(params.tau_s, params.gamma * t)


def chi_active(params, t):
    """1 where gamma t >= tau_s (ties count as active), else 0."""
    t = _check(t)
    return (params.gamma * t >= params.tau_s).astype(np.int64)


def frobenius(a):
    """Frobenius norm over the trailing (2, 2) or (4,) axes."""
    a = np.asarray(a, dtype=float)
    if a.shape[-2:] == (2, 2):
        return np.sqrt(np.einsum("...ij,...ij->...", a, a))
    return np.sqrt(np.einsum("...i,...i->...", a, a))


def project_q(params, q):
    """Scale q back onto the ball |q| <= tau_s; identity inside it.

    Norms within a few ulps of tau_s count as inside so that the map is
    exactly idempotent under rounding.
    """
    q = np.asarray(q, dtype=float)
    norm = frobenius(q)
    outside = norm > params.tau_s * (1.0 + PROJECT_ULPS * np.finfo(float).eps)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(outside, params.tau_s / np.where(norm > 0, norm, 1.0), 1.0)
    if q.shape[-2:] == (2, 2):
        return q * scale[..., None, None]
    return q * scale[..., None]


def multiplier(params, theta):
    """Closed form q = gamma tau_s theta / |theta|_gamma of the q-identity."""
    theta = np.asarray(theta, dtype=float)
    t = frobenius(theta)
    denom = huber_abs(params, t)
    with np.errstate(invalid="ignore", divide="ignore"):
        factor = np.where(denom > 0, params.gamma * params.tau_s / np.where(denom > 0, denom, 1.0), 0.0)
    if theta.shape[-2:] == (2, 2):
        return theta * factor[..., None, None]
    return theta * factor[..., None]
