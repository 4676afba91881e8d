"""
Exit identities, ruin probability and the law of the deficit at ruin.

Everything here is evaluated at q = 0 or at a user-supplied q through the scale
functions of scale_fn; hypotheses on psi'(0+) are checked up front.
"""
from __future__ import annotations

import logging
import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from errors import ConvergenceError, DomainError, require_net_profit
from levy_model import LevyModel
from quadrature import integrate_checked
from scale_fn import ScaleEvaluator, make_evaluator

logger = logging.getLogger(__name__)

_PROBABILITY_SLACK = 1e-9


def as_probability(value: float, label: str) -> float:
    """Clip rounding noise into [0, 1]; anything further out is a numerical failure."""
    if not -_PROBABILITY_SLACK <= value <= 1.0 + _PROBABILITY_SLACK:
        raise ConvergenceError(f"{label} evaluated to {value!r}, outside [0, 1]")
    return min(max(value, 0.0), 1.0)


def _check_interval(x: float, a: float) -> None:
    if not a > 0:
        raise DomainError(f"upper level a must be > 0 (got {a!r})")
    if not 0 <= x <= a:
        raise DomainError(f"starting point x must lie in [0, a] = [0, {a!r}] (got {x!r})")


def exit_up(model: LevyModel, q: float, x: float, a: float) -> float:
    """E_x[exp(-q tau_a+); tau_a+ < tau_0-] = W(x)/W(a)."""
    _check_interval(x, a)
    ev = make_evaluator(model, q)
    return as_probability(ev.w_ratio(x, a), "exit_up")


def exit_down(model: LevyModel, q: float, x: float, a: float) -> float:
    """E_x[exp(-q tau_0-); tau_0- < tau_a+] = Z(x) - Z(a) W(x)/W(a)."""
    _check_interval(x, a)
    ev = make_evaluator(model, q)
    return as_probability(ev.exit_down_ratio(x, a), "exit_down")


def one_sided_up(model: LevyModel, q: float, x: float, a: float) -> float:
    require_net_profit(model, strict = False)
    if not x <= a:
        raise DomainError(f"one-sided passage needs x <= a (got x={x!r}, a={a!r})")
    return math.exp(-model.phi(q) * (a - x))


def ruin_probability(model: LevyModel, x: float) -> float:
    """P_x(tau_0- < inf) = 1 - psi'(0+) W(x)."""
    mean = require_net_profit(model, strict = False)
    if not x >= 0:
        raise DomainError(f"initial capital x must be >= 0 (got {x!r})")
    if mean == 0:
        return 1.0
    ev = make_evaluator(model, 0.0)
    return as_probability(1.0 - mean * ev.w(x), "ruin_probability")


class DeficitLaw(BaseModel):
    """
    Law of X at tau_0- under P_x on {tau_0- < inf}, completed by the defect mass of {tau_0- = inf}:
    an atom at 0 (creeping), a density on (-inf, 0) and the defect.
    """
    model_config = ConfigDict(frozen = True, arbitrary_types_allowed = True)

    model: LevyModel
    x: float = Field(..., ge = 0)
    atom_at_zero: float = Field(..., ge = 0)
    defect: float = Field(..., ge = 0)
    evaluator: ScaleEvaluator

    def density(self, z: float) -> float:
        """W(x) nu(z) - int_0^x pi(z - y) W(x - y) dy for z < 0."""
        if not z < 0:
            raise DomainError(f"deficit density is supported on z < 0 (got {z!r})")
        if self.model.jumps is None:
            return 0.0
        ev, x = self.evaluator, self.x
        value = ev.w(x) * self.model.levy_tail(z)
        if x > 0:
            value -= integrate_checked(lambda y: self.model.levy_density(z - y) * ev.w(x - y), 0.0, x,
                                       label = "deficit density")
        return max(value, 0.0)

    @property
    def jump_mass(self) -> float:
        """Integral of the density over (-inf, 0)."""
        return _jump_term(self.model, self.evaluator, self.x)

    def total_mass(self) -> float:
        return self.atom_at_zero + self.jump_mass + self.defect

    def laplace(self, r: float) -> float:
        return deficit_laplace(self.model, r, self.x)


def _jump_term(model: LevyModel, ev: ScaleEvaluator, x: float) -> float:
    # int nu(z) dz W(x) - int_0^x nu(-y) W(x - y) dy
    if model.jumps is None:
        return 0.0
    value = ev.w(x) * model.integrated_tail(0.0)
    if x > 0:
        value -= integrate_checked(lambda y: _tail_at(model, -y) * ev.w(x - y), 0.0, x, label = "jump term")
    return value


def _tail_at(model: LevyModel, x: float) -> float:
    # nu(x) with its left limit beta at x = 0
    return model.levy_tail(x) if x < 0 else model.jump_rate


def deficit_law(model: LevyModel, x: float) -> DeficitLaw:
    mean = require_net_profit(model, strict = False)
    if not x >= 0:
        raise DomainError(f"initial capital x must be >= 0 (got {x!r})")
    ev = make_evaluator(model, 0.0)
    atom = 0.5 * model.sigma ** 2 * ev.w_prime(x) if model.sigma > 0 else 0.0
    return DeficitLaw(model = model, x = x, atom_at_zero = atom, defect = mean * ev.w(x), evaluator = ev)


def deficit_laplace(model: LevyModel, r: float, x: float) -> float:
    """
    E_x[exp(r X_{tau_0-}); tau_0- < inf] for r > 0.

    Evaluated as psi(r)/r * int_0^inf exp(-r u) W'(x + u) du, which avoids the exp(r x)
    blow-up of the direct expression and stays finite as r grows.
    """
    require_net_profit(model, strict = False)
    if not r > 0:
        raise DomainError(f"r must be > 0 (got {r!r})")
    if not x >= 0:
        raise DomainError(f"initial capital x must be >= 0 (got {x!r})")
    ev = make_evaluator(model, 0.0)
    value = model.psi(r) / r * ev.laplace_tail_derivative(r, x)
    return as_probability(value, "deficit_laplace")


def check_identity_trick(model: LevyModel, x: float, evaluator: Optional[ScaleEvaluator] = None) -> float:
    """|1 - psi'(0+) W(x) - sigma^2/2 W'(x) - jump term|; zero up to numerical error."""
    mean = require_net_profit(model, strict = False)
    if not x >= 0:
        raise DomainError(f"x must be >= 0 (got {x!r})")
    ev = evaluator if evaluator is not None else make_evaluator(model, 0.0)
    rhs = mean * ev.w(x) + 0.5 * model.sigma ** 2 * ev.w_prime(x) + _jump_term(model, ev, x)
    residual = abs(1.0 - rhs)
    logger.debug("identity residual at x=%s: %.3e [%s]", x, residual, model.label)
    return residual
