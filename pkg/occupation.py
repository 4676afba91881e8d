"""
Laplace transforms of the time spent below 0.

  occupation_total_lt          E[exp(-lam * int_0^inf 1{X_s <= 0} ds)]      started at 0
  occupation_total_lt_from     the same quantity started at x >= 0
  occupation_until_passage_lt  the occupation time up to the first passage below -b
  parisian_ruin                ruin with independent Exp(d) grace periods per excursion below 0
"""
from __future__ import annotations

import logging
import math
from typing import NamedTuple

from errors import ConvergenceError, DomainError, require_net_profit
from fluctuation import as_probability, ruin_probability
from levy_model import LevyModel
from quadrature import integrate_checked
from scale_fn import make_evaluator

logger = logging.getLogger(__name__)

# Above this the finite form multiplies exp(Phi x) into a cancelled difference
_FINITE_FORM_MAX_EXPONENT = 10.0
_FORM_AGREEMENT = 1e-9


class OccupationForms(NamedTuple):
    infinite: float
    finite: float


def _check_lambda(lam: float) -> float:
    lam = float(lam)
    if not lam >= 0:
        raise DomainError(f"lambda must be >= 0 (got {lam!r})")
    return lam


def occupation_total_lt(model: LevyModel, lam: float) -> float:
    """psi'(0+) Phi(lam) / lam, with the value 1 at lam = 0."""
    mean = require_net_profit(model)
    lam = _check_lambda(lam)
    if lam == 0:
        return 1.0
    return as_probability(mean * model.phi(lam) / lam, "occupation_total_lt")


def occupation_forms(model: LevyModel, lam: float, x: float) -> OccupationForms:
    """
    The transform started at x in its two equivalent forms:
      infinite  psi'(0+) Phi int_0^inf exp(-Phi z) W(x + z) dz
      finite    psi'(0+) Phi/lam exp(Phi x) (1 - lam int_0^x exp(-Phi z) W(z) dz)
    """
    mean = require_net_profit(model)
    lam = _check_lambda(lam)
    if lam == 0:
        raise DomainError("lambda must be > 0 here; the lambda = 0 limit is 1")
    if not x >= 0:
        raise DomainError(f"starting point x must be >= 0 (got {x!r})")

    ev = make_evaluator(model, 0.0)
    phi = model.phi(lam)
    infinite = mean * phi * ev.laplace_shifted(phi, x)
    finite = mean * phi / lam * math.exp(phi * x) * (1.0 - lam * ev.laplace_partial(phi, x))
    return OccupationForms(infinite, finite)


def occupation_total_lt_from(model: LevyModel, lam: float, x: float) -> float:
    forms = occupation_forms(model, lam, x)
    gap = abs(forms.infinite - forms.finite)
    if gap > _FORM_AGREEMENT and model.phi(lam) * x <= _FINITE_FORM_MAX_EXPONENT:
        raise ConvergenceError(
            f"occupation transform forms disagree at lam={lam!r}, x={x!r}: "
            f"{forms.infinite:.17g} vs {forms.finite:.17g} [{model.label}]"
        )
    return as_probability(forms.infinite, "occupation_total_lt_from")


def occupation_until_passage_lt(model: LevyModel, lam: float, b: float) -> float:
    """
    E[exp(-lam * int_0^{tau_{-b}-} 1{X_s <= 0} ds)] as the ratio

        psi'(0+) + sigma^2/2 A1(b)/W(b) + int A2(y) nu(y) dy
        ----------------------------------------------------
        psi'(0+) + sigma^2/2 W'(b)/W(b) + int A3(y) nu(y) dy

    with A1 = Z W' - lam W^2 at b, A2(y) = Z(y+b) - Z(b)W(y+b)/W(b), A3(y) = 1 - W(y+b)/W(b),
    all scale functions at q = lam. A2 = A3 = 1 for y < -b.
    """
    mean = require_net_profit(model, strict = False)
    lam = _check_lambda(lam)
    if not b > 0:
        raise DomainError(f"barrier depth b must be > 0 (got {b!r})")
    if lam == 0:
        return 1.0

    ev = make_evaluator(model, lam)
    half_var = 0.5 * model.sigma ** 2
    numer = mean
    denom = mean
    if half_var > 0:
        numer += half_var * ev.wronskian_ratio(b)
        denom += half_var * ev.w_prime_ratio(b)

    if model.jumps is not None:
        far = model.integrated_tail(-b)
        tail = lambda y: model.levy_tail(y) if y < 0 else model.jump_rate
        near2 = integrate_checked(lambda y: ev.exit_down_ratio(y + b, b) * tail(y), -b, 0.0, label = "A2 integral")
        near3 = integrate_checked(lambda y: (1.0 - ev.w_ratio(y + b, b)) * tail(y), -b, 0.0, label = "A3 integral")
        numer += far + near2
        denom += far + near3

    logger.debug("passage transform lam=%s b=%s: %.17g / %.17g [%s]", lam, b, numer, denom, model.label)
    return as_probability(numer / denom, "occupation_until_passage_lt")


def bm_reference_occupation(b: float, lam: float, m: float, sigma: float) -> float:
    """Closed form of the passage transform for X_t = m t + sigma B_t, m >= 0."""
    if not m >= 0:
        raise DomainError(f"drift m must be >= 0 (got {m!r})")
    if not sigma > 0:
        raise DomainError(f"sigma must be > 0 (got {sigma!r})")
    if not b > 0:
        raise DomainError(f"barrier depth b must be > 0 (got {b!r})")
    lam = _check_lambda(lam)
    if lam == 0:
        return 1.0

    s2 = sigma * sigma
    delta = math.sqrt(m * m + 2.0 * lam * s2)
    a, c = m / s2, delta / s2
    # common factor exp((c - a) b) / delta cancels between numerator and denominator
    fade = math.exp(-2.0 * c * b)
    w = -math.expm1(-2.0 * c * b)
    w_prime = c * (1.0 + fade) - a * w
    a1 = 2.0 * delta / s2 * math.exp(-(a + c) * b)
    return (m * w + 0.5 * s2 * a1) / (m * w + 0.5 * s2 * w_prime)


def parisian_ruin(model: LevyModel, d: float, x: float = 0.0) -> float:
    """Probability that some excursion below 0 outlasts its Exp(d) grace period."""
    require_net_profit(model)
    if not d > 0:
        raise DomainError(f"grace-period rate d must be > 0 (got {d!r})")
    if not x >= 0:
        raise DomainError(f"initial capital x must be >= 0 (got {x!r})")
    survival = occupation_total_lt(model, d) if x == 0 else occupation_total_lt_from(model, d, x)
    return as_probability(1.0 - survival, "parisian_ruin")


def parisian_ruin_limit(model: LevyModel, x: float = 0.0) -> float:
    """Limit of parisian_ruin as d -> inf: the classical ruin probability."""
    require_net_profit(model)
    return ruin_probability(model, x)
