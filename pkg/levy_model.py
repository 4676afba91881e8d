"""
Spectrally negative Levy processes with finite-activity, phase-type downward jumps.

The Laplace exponent is
    psi(theta) = gamma*theta + sigma^2*theta^2/2 + beta*(E[exp(-theta*C)] - 1),
with C the claim (jump) size. Every supported claim law is a mixture of Erlang
phases, so psi is a rational function of theta.
"""
from __future__ import annotations

import logging
import math
from functools import lru_cache
from typing import Annotated, Any, Literal, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from scipy import optimize, special

import settings
from errors import ConvergenceError, DomainError

logger = logging.getLogger(__name__)

# (weight, shape, rate) of one Erlang phase
Phase = Tuple[float, int, float]


# Claim laws
class _PhaseTypeClaim(BaseModel):
    model_config = ConfigDict(extra = "forbid", frozen = True, allow_inf_nan = False)

    @property
    def phases(self) -> Tuple[Phase, ...]:
        raise NotImplementedError

    @property
    def mean(self) -> float:
        return math.fsum(p * k / mu for p, k, mu in self.phases)

    @property
    def second_moment(self) -> float:
        return math.fsum(p * k * (k + 1) / mu ** 2 for p, k, mu in self.phases)

    @property
    def third_moment(self) -> float:
        return math.fsum(p * k * (k + 1) * (k + 2) / mu ** 3 for p, k, mu in self.phases)

    def transform(self, theta: Any) -> Any:
        # E[exp(-theta*C)]; plain arithmetic so complex and mpmath arguments work too
        total = 0
        for p, k, mu in self.phases:
            total = total + p * (mu / (mu + theta)) ** k
        return total

    def transform_minus_one(self, theta: float) -> float:
        # E[exp(-theta*C)] - 1 without cancellation for small real theta
        return math.fsum(p * math.expm1(-k * math.log1p(theta / mu)) for p, k, mu in self.phases)

    def transform_prime(self, theta: Any) -> Any:
        total = 0
        for p, k, mu in self.phases:
            total = total - p * k / (mu + theta) * (mu / (mu + theta)) ** k
        return total

    def survival(self, y):
        y = np.asarray(y, dtype = float)
        out = sum(p * special.gammaincc(k, mu * np.maximum(y, 0.0)) for p, k, mu in self.phases)
        return np.where(y < 0, 1.0, out)

    def density(self, y):
        y = np.asarray(y, dtype = float)
        yy = np.maximum(y, 0.0)
        out = sum(
            p * np.exp(k * math.log(mu) + special.xlogy(k - 1, yy) - mu * yy - special.gammaln(k))
            for p, k, mu in self.phases
        )
        return np.where(y < 0, 0.0, out)

    def stop_loss(self, b: float) -> float:
        """E[(C - b)^+] for b >= 0."""
        b = max(float(b), 0.0)
        return math.fsum(
            p * (k / mu * special.gammaincc(k + 1, mu * b) - b * special.gammaincc(k, mu * b))
            for p, k, mu in self.phases
        )

    def quantile_bound(self, tail: float) -> float:
        # Largest phase quantile bounds the mixture's: sum p_i S_i(y) <= max_i S_i(y)
        return max(float(special.gammainccinv(k, tail)) / mu for _, k, mu in self.phases)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        phases = self.phases
        if len(phases) == 1:
            _, k, mu = phases[0]
            if k == 1:
                return rng.exponential(scale = 1.0 / mu, size = n)
            return rng.gamma(shape = k, scale = 1.0 / mu, size = n)
        weights = np.array([p for p, _, _ in phases])
        shapes = np.array([k for _, k, _ in phases], dtype = float)
        rates = np.array([mu for _, _, mu in phases])
        pick = rng.choice(len(phases), size = n, p = weights / weights.sum())
        return rng.gamma(shape = shapes[pick], scale = 1.0 / rates[pick])


class ExponentialClaim(_PhaseTypeClaim):
    type: Literal["exp"] = "exp"
    rate: float = Field(..., gt = 0, description = "Exponential rate mu")

    @property
    def phases(self) -> Tuple[Phase, ...]:
        return ((1.0, 1, self.rate),)


class HyperExponentialClaim(_PhaseTypeClaim):
    type: Literal["hyperexp"] = "hyperexp"
    weights: Tuple[float, ...] = Field(..., min_length = 1, description = "Mixture weights p_i")
    rates: Tuple[float, ...] = Field(..., min_length = 1, description = "Distinct phase rates mu_i")

    @field_validator("weights", "rates")
    @classmethod
    def _strictly_positive(cls, v):
        if any(not x > 0 for x in v):
            raise ValueError("weights and rates must be strictly positive")
        return v

    @model_validator(mode = "after")
    def _check_mixture(self):
        if len(self.weights) != len(self.rates):
            raise ValueError("weights and rates must have the same length")
        if abs(math.fsum(self.weights) - 1.0) > 1e-12:
            raise ValueError(f"weights must sum to 1 (got {math.fsum(self.weights)!r})")
        if len(set(self.rates)) != len(self.rates):
            raise ValueError("hyperexponential rates must be pairwise distinct")
        return self

    @property
    def phases(self) -> Tuple[Phase, ...]:
        return tuple((p, 1, mu) for p, mu in zip(self.weights, self.rates))


class ErlangClaim(_PhaseTypeClaim):
    type: Literal["erlang"] = "erlang"
    shape: int = Field(..., ge = 1, description = "Number of exponential stages k")
    rate: float = Field(..., gt = 0, description = "Stage rate mu")

    @property
    def phases(self) -> Tuple[Phase, ...]:
        return ((1.0, self.shape, self.rate),)


ClaimDistribution = Annotated[
    Union[ExponentialClaim, HyperExponentialClaim, ErlangClaim],
    Field(discriminator = "type"),
]


class JumpSpec(BaseModel):
    model_config = ConfigDict(extra = "forbid", frozen = True, allow_inf_nan = False)

    rate: float = Field(..., gt = 0, description = "Poisson arrival rate beta of claims")
    claim: ClaimDistribution


class PathRegularity(BaseModel):
    model_config = ConfigDict(frozen = True)

    bounded_variation: bool
    drift_d: float


# Process
class LevyModel(BaseModel):
    """Triplet (gamma, sigma, Pi) with Pi = beta * law(-C) on (-inf, 0)."""
    model_config = ConfigDict(extra = "forbid", frozen = True, allow_inf_nan = False)

    gamma: float = Field(..., description = "Linear coefficient of psi (drift)")
    sigma: float = Field(0.0, ge = 0, description = "Gaussian coefficient")
    jumps: Optional[JumpSpec] = None

    @model_validator(mode = "after")
    def _non_monotone(self):
        if self.sigma == 0 and self.gamma <= 0:
            raise ValueError("sigma = 0 with gamma <= 0 gives monotone decreasing paths")
        return self

    # Derived quantities
    @property
    def is_pure_drift(self) -> bool:
        return self.sigma == 0 and self.jumps is None

    @property
    def jump_rate(self) -> float:
        return self.jumps.rate if self.jumps is not None else 0.0

    @property
    def psi_prime_at_zero(self) -> float:
        if self.jumps is None:
            return self.gamma
        return self.gamma - self.jumps.rate * self.jumps.claim.mean

    @property
    def psi_second_at_zero(self) -> float:
        """psi''(0+) = sigma^2 + beta E[C^2], an upper bound for psi'' on [0, inf)."""
        value = self.sigma ** 2
        if self.jumps is not None:
            value += self.jumps.rate * self.jumps.claim.second_moment
        return value

    @property
    def regularity(self) -> PathRegularity:
        return PathRegularity(bounded_variation = self.sigma == 0, drift_d = self.gamma)

    @property
    def label(self) -> str:
        parts = [f"gamma={self.gamma:g}", f"sigma={self.sigma:g}"]
        if self.jumps is not None:
            parts.append(f"beta={self.jumps.rate:g}")
            parts.append(f"claim={self.jumps.claim.type}")
        return ",".join(parts)

    # Laplace exponent
    def _psi(self, theta: Any) -> Any:
        value = self.gamma * theta + 0.5 * self.sigma ** 2 * theta * theta
        if self.jumps is not None:
            value = value + self.jumps.rate * (self.jumps.claim.transform(theta) - 1)
        return value

    def _psi_real(self, theta: float) -> float:
        value = self.gamma * theta + 0.5 * self.sigma ** 2 * theta * theta
        if self.jumps is not None:
            value += self.jumps.rate * self.jumps.claim.transform_minus_one(theta)
        return value

    def _psi_prime(self, theta: Any) -> Any:
        value = self.gamma + self.sigma ** 2 * theta
        if self.jumps is not None:
            value = value + self.jumps.rate * self.jumps.claim.transform_prime(theta)
        return value

    def psi(self, theta: float) -> float:
        theta = _non_negative(theta, "theta")
        if theta == 0.0:
            return 0.0
        return self._psi_real(theta)

    def psi_prime(self, theta: float) -> float:
        theta = _non_negative(theta, "theta")
        if theta == 0.0:
            return self.psi_prime_at_zero
        return float(self._psi_prime(theta))

    def phi(self, q: float) -> float:
        """Right-inverse of psi: the largest root of psi(xi) = q."""
        q = _non_negative(q, "q")
        return _phi(self, q)

    # Levy measure
    def levy_tail(self, x: float) -> float:
        """nu(x) = Pi(-inf, x) for x < 0."""
        x = float(x)
        if not x < 0:
            raise DomainError(f"levy_tail requires x < 0 (got {x!r})")
        if self.jumps is None:
            return 0.0
        return float(self.jumps.rate * self.jumps.claim.survival(-x))

    def levy_density(self, x: float) -> float:
        x = float(x)
        if not x < 0:
            raise DomainError(f"levy_density requires x < 0 (got {x!r})")
        if self.jumps is None:
            return 0.0
        return float(self.jumps.rate * self.jumps.claim.density(-x))

    def integrated_tail(self, x: float) -> float:
        """Integral of nu over (-inf, x] for x <= 0; equals beta*E[C] at x = 0."""
        x = float(x)
        if x > 0:
            raise DomainError(f"integrated_tail requires x <= 0 (got {x!r})")
        if self.jumps is None:
            return 0.0
        return self.jumps.rate * self.jumps.claim.stop_loss(-x)

    def tail_cutoff(self, tol: Optional[float] = None) -> float:
        """A point x_min < 0 with nu(x_min) <= tol."""
        tol = settings.TAIL_CUTOFF if tol is None else tol
        if self.jumps is None:
            return -1.0
        return -self.jumps.claim.quantile_bound(min(tol / self.jumps.rate, 0.5))

    # Rational structure
    def rational_form(self, q: float) -> Tuple[Polynomial, Polynomial]:
        """Polynomials (P, Q) with psi(theta) - q = P(theta) / Q(theta)."""
        base = Polynomial([-q, self.gamma, 0.5 * self.sigma ** 2])
        if self.jumps is None:
            return base, Polynomial([1.0])

        beta = self.jumps.rate
        factors = [Polynomial([mu, 1.0]) ** k for _, k, mu in self.jumps.claim.phases]
        denom = Polynomial([1.0])
        for f in factors:
            denom = denom * f

        numer = (base - beta) * denom
        for i, (p, k, mu) in enumerate(self.jumps.claim.phases):
            others = Polynomial([1.0])
            for j, f in enumerate(factors):
                if j != i:
                    others = others * f
            numer = numer + beta * p * mu ** k * others
        return numer, denom


def _non_negative(value: float, name: str) -> float:
    value = float(value)
    if not value >= 0:
        raise DomainError(f"{name} must be >= 0 (got {value!r})")
    return value


def _psi_argmin(model: LevyModel) -> float:
    if model.psi_prime_at_zero >= 0:
        return 0.0
    hi = 1.0
    while model._psi_prime(hi) <= 0:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError("could not bracket the minimum of psi")
    return optimize.brentq(model._psi_prime, 0.0, hi, xtol = 1e-15, rtol = 4 * np.finfo(float).eps)


@lru_cache(maxsize = 4096)
def _phi(model: LevyModel, q: float) -> float:
    # psi is convex and increasing on [lo, inf); Newton steps are kept inside the bracket [lo, hi]
    lo = _psi_argmin(model)
    if q == 0.0 and lo == 0.0:
        return 0.0

    hi = max(1.0, 2.0 * lo)
    while model._psi_real(hi) <= q:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError(f"could not bracket Phi({q!r})")

    eps = np.finfo(float).eps
    theta = hi
    if lo == 0.0:
        # psi(t) <= psi'(0) t + psi''(0) t^2 / 2 on [0, inf): start from the root of the upper bound.
        # psi(t) >= psi'(0) t and psi'' >= psi''(0) - beta E[C^3] t bound how far below Phi(q) it sits.
        d1, d2 = model.psi_prime_at_zero, model.psi_second_at_zero
        d3 = model.jump_rate * model.jumps.claim.third_moment if model.jumps is not None else 0.0
        theta = 2.0 * q / (d1 + math.sqrt(d1 * d1 + 2.0 * d2 * q))
        if (d1 > 0 and d2 * q <= eps * d1 * d1) or d3 * theta <= settings.PHI_RTOL * d2:
            logger.debug("Phi(%s) = %.17g from the quadratic bound [%s]", q, theta, model.label)
            return float(theta)
    for it in range(settings.PHI_MAXITER):
        f = model._psi_real(theta) - q
        target = q if q > 0 else abs(model.gamma * theta) + 0.5 * model.sigma ** 2 * theta ** 2
        if abs(f) <= settings.PHI_RTOL * target:
            logger.debug("Phi(%s) = %.17g after %d iterations [%s]", q, theta, it, model.label)
            return float(theta)
        if f > 0:
            hi = theta
        else:
            lo = theta
        slope = model._psi_prime(theta)
        step = theta - f / slope if slope > 0 else math.nan
        if not lo < step < hi:
            step = math.sqrt(lo * hi) if lo > 0 and hi > 4.0 * lo else 0.5 * (lo + hi)
        # residual at rounding level: the iterate no longer moves
        if abs(step - theta) <= 2 * eps * theta or hi - lo <= 2 * eps * hi:
            logger.debug("Phi(%s) = %.17g stalled at residual %.2e [%s]", q, step, f, model.label)
            return float(step)
        theta = step

    raise ConvergenceError(f"Phi({q!r}) did not converge in {settings.PHI_MAXITER} iterations [{model.label}]")
