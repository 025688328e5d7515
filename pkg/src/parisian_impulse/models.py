"""Model and problem definitions for spectrally negative Levy surplus processes.

Two driving models are supported:

* linear Brownian motion, ``X_t = mu*t + sigma*B_t``;
* the Cramer-Lundberg process with exponential claims,
  ``X_t = p*t - sum_{i<=N_t} U_i`` where ``N`` is a Poisson process of rate
  ``lam`` and the ``U_i`` are exponential with rate ``mu_claim``.

A :class:`ProblemSpec` bundles a model with the refraction rate ``delta``
(dividend stream drained while the surplus is positive), the discount rate
``q``, the Parisian delay ``r``, and the fixed transaction cost ``beta``.

For either model the scale function restricted to ``x >= 0`` is a difference
of two exponentials.  :func:`compute_coefficients` produces that
representation for both the original surplus process and the refracted
(drift-reduced) one; everything downstream works off these coefficients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

from .errors import ConfigError, DomainError, InvalidRefractionError


@dataclass(frozen=True)
class BrownianMotion:
    """Linear Brownian motion with drift ``mu`` and volatility ``sigma > 0``."""

    mu: float
    sigma: float

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class CramerLundberg:
    """Compound Poisson surplus with premium rate ``p`` and exponential claims.

    Claims arrive at rate ``lam`` and have mean ``1 / mu_claim``.
    """

    p: float
    lam: float
    mu_claim: float

    def __post_init__(self) -> None:
        if not self.p > 0:
            raise ConfigError(f"premium rate p must be positive, got {self.p}")
        if not self.lam > 0:
            raise ConfigError(f"claim rate lam must be positive, got {self.lam}")
        if not self.mu_claim > 0:
            raise ConfigError(
                f"claim size rate mu_claim must be positive, got {self.mu_claim}"
            )


Model = Union[BrownianMotion, CramerLundberg]


@dataclass(frozen=True)
class ProblemSpec:
    """A model plus the control problem parameters.

    Parameters
    ----------
    model:
        The driving surplus process.
    delta:
        Refraction rate: the linear dividend rate paid while the controlled
        surplus is above 0.  Must be positive; for Cramer-Lundberg it must
        also satisfy ``p - delta > 0`` so the refracted process still drifts
        upward between claims.
    q:
        Discount rate, positive.
    r:
        Parisian delay: ruin is declared once an excursion below 0 lasts at
        least ``r``.  Must be positive.
    beta:
        Fixed transaction cost per dividend lump, positive.
    """

    model: Model
    delta: float
    q: float
    r: float
    beta: float

    def __post_init__(self) -> None:
        if not self.delta > 0:
            raise ConfigError(f"delta must be positive, got {self.delta}")
        if not self.q > 0:
            raise ConfigError(f"q must be positive, got {self.q}")
        if not self.r > 0:
            raise ConfigError(f"r must be positive, got {self.r}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if isinstance(self.model, CramerLundberg) and not self.model.p - self.delta > 0:
            raise InvalidRefractionError(
                f"need p - delta > 0, got p={self.model.p} delta={self.delta}"
            )


def laplace_exponent(model: Model, theta: float) -> float:
    """Laplace exponent ``psi(theta) = log E[exp(theta * X_1)]``.

    Defined for ``theta >= 0`` (and, for Cramer-Lundberg, any
    ``theta > -mu_claim``).
    """
    if isinstance(model, BrownianMotion):
        return model.mu * theta + 0.5 * model.sigma**2 * theta**2
    if theta == -model.mu_claim:
        raise DomainError("laplace exponent has a pole at theta = -mu_claim")
    return model.p * theta - model.lam * theta / (model.mu_claim + theta)


def drift_adjusted(spec: ProblemSpec) -> Model:
    """The refracted process: same model with drift reduced by ``delta``."""
    m = spec.model
    if isinstance(m, BrownianMotion):
        return BrownianMotion(m.mu - spec.delta, m.sigma)
    # ProblemSpec already guarantees p - delta > 0
    return CramerLundberg(m.p - spec.delta, m.lam, m.mu_claim)


def right_inverse(model: Model, q: float) -> float:
    """Largest root of ``psi(theta) = q`` (the right inverse of psi at q)."""
    if q < 0:
        raise DomainError(f"right inverse defined for q >= 0, got {q}")
    if isinstance(model, BrownianMotion):
        mu, s2 = model.mu, model.sigma**2
        return (math.sqrt(mu * mu + 2.0 * q * s2) - mu) / s2
    p, lam, mu = model.p, model.lam, model.mu_claim
    b = q + lam - mu * p
    return (b + math.sqrt(b * b + 4.0 * p * q * mu)) / (2.0 * p)


@dataclass(frozen=True)
class ScaleCoefficients:
    """Two-exponential representation of a q-scale function on ``x >= 0``:

    ``W(x) = weight_plus * exp(rate_plus * x) - weight_minus * exp(rate_minus * x)``

    with ``rate_plus > 0 > rate_minus`` the two roots of ``psi = q`` and
    positive weights.  ``W(0+) = weight_plus - weight_minus`` (zero for
    Brownian motion, ``1/p`` for Cramer-Lundberg).
    """

    rate_plus: float
    rate_minus: float
    weight_plus: float
    weight_minus: float

    @property
    def mass_at_zero(self) -> float:
        return self.weight_plus - self.weight_minus


def _coefficients(model: Model, q: float) -> ScaleCoefficients:
    if isinstance(model, BrownianMotion):
        mu, s2 = model.mu, model.sigma**2
        disc = math.sqrt(mu * mu + 2.0 * q * s2)
        rho1 = (disc + mu) / s2  # W(x) ~ exp(-rho1 x) part
        rho2 = (disc - mu) / s2  # dominant growth rate, = right inverse at q
        weight = 2.0 / (s2 * (rho1 + rho2))
        return ScaleCoefficients(rho2, -rho1, weight, weight)
    p, lam, mu = model.p, model.lam, model.mu_claim
    b = q + lam - mu * p
    disc = math.sqrt(b * b + 4.0 * p * q * mu)
    q_plus = (b + disc) / (2.0 * p)
    q_minus = (b - disc) / (2.0 * p)
    # weights (mu + root) / (q_plus - q_minus) / p; their difference is 1/p
    span = q_plus - q_minus
    return ScaleCoefficients(
        q_plus, q_minus, (mu + q_plus) / (span * p), (mu + q_minus) / (span * p)
    )


@dataclass(frozen=True)
class CoefficientSet:
    """Scale coefficients for the surplus process and its refracted twin."""

    spec: ProblemSpec
    surplus: ScaleCoefficients
    refracted: ScaleCoefficients

    @property
    def is_bounded_variation(self) -> bool:
        return isinstance(self.spec.model, CramerLundberg)


@lru_cache(maxsize=None)
def compute_coefficients(spec: ProblemSpec) -> CoefficientSet:
    """Coefficients of the two q-scale functions attached to ``spec``.

    Cached: specs are frozen, so each distinct problem is solved once.
    """
    return CoefficientSet(
        spec=spec,
        surplus=_coefficients(spec.model, spec.q),
        refracted=_coefficients(drift_adjusted(spec), spec.q),
    )
