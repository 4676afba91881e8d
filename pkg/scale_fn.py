"""
q-scale functions W^(q), W^(q)', Wbar^(q) and Z^(q) = 1 + q Wbar^(q).

W^(q) is the function vanishing on (-inf, 0) whose Laplace transform is 1/(psi(theta) - q)
for theta > Phi(q). Three backends produce it:

  closed_form_brownian  no jumps: W(x) = 2/delta * exp(-m x/s^2) * sinh(x delta/s^2)
  partial_fraction      rational psi with simple roots zeta_j of psi = q:
                        W(x) = sum_j exp(zeta_j x) / psi'(zeta_j)
  numerical_inversion   Euler inversion of the damped transform 1/(psi(s + Phi(q)) - q)
"""
from __future__ import annotations

import logging
import math
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np

import settings
from errors import ConvergenceError, DomainError, HypothesisError
from inversion import EulerInverter, gaver_stehfest
from levy_model import LevyModel
from quadrature import integrate_checked

logger = logging.getLogger(__name__)

# Beyond this many e-folds the tail of a damped integral is below double precision
_TAIL_EFOLDS = 40.0


class Backend(str, Enum):
    CLOSED_FORM_BROWNIAN = "closed_form_brownian"
    PARTIAL_FRACTION = "partial_fraction"
    NUMERICAL_INVERSION = "numerical_inversion"


class DegenerateRootsError(ConvergenceError):
    """psi(theta) = q has a (numerically) repeated root; partial fractions do not apply."""


class ScaleEvaluator:
    """
    Evaluator of the scale functions of a fixed (model, q).

    Instances are never mutated after construction; all evaluation methods are pure.
    Subclasses provide _w, _w_prime and _w_bar on x > 0 and may override the
    identity helpers with closed forms.
    """
    backend: Backend

    def __init__(self, model: LevyModel, q: float):
        self.model = model
        self.q = float(q)
        self.phi_q = model.phi(self.q)

    def __repr__(self) -> str:
        return f"{type(self).__name__}(q={self.q!r}, backend={self.backend.value}, model={self.model.label})"

    # Initial values
    def w_at_zero(self) -> float:
        if self.model.sigma > 0:
            return 0.0
        return 1.0 / self.model.regularity.drift_d

    def w_prime_at_zero(self) -> float:
        if self.model.sigma > 0:
            return 2.0 / self.model.sigma ** 2
        d = self.model.regularity.drift_d
        return (self.model.jump_rate + self.q) / d ** 2

    # Scale functions
    def w(self, x: float) -> float:
        x = float(x)
        if x < 0:
            return 0.0
        if x == 0:
            return self.w_at_zero()
        return self._w(x)

    def w_prime(self, x: float) -> float:
        x = float(x)
        if x < 0:
            raise DomainError(f"w_prime requires x >= 0 (got {x!r})")
        if x == 0:
            return self.w_prime_at_zero()
        return self._w_prime(x)

    def w_bar(self, x: float) -> float:
        x = float(x)
        if x <= 0:
            return 0.0
        return self._w_bar(x)

    def z(self, x: float) -> float:
        if self.q == 0:
            return 1.0
        return 1.0 + self.q * self.w_bar(x)

    def laplace_transform(self, theta: float) -> float:
        """The defining transform 1/(psi(theta) - q), theta > Phi(q)."""
        if not theta > self.phi_q:
            raise DomainError(f"Laplace transform of W^(q) needs theta > Phi(q) = {self.phi_q!r}")
        return 1.0 / (self.model.psi(theta) - self.q)

    # Identity helpers (generic versions)
    def w_ratio(self, y: float, a: float) -> float:
        """W(y) / W(a)."""
        return self.w(y) / self.w(a)

    def w_prime_ratio(self, a: float) -> float:
        return self.w_prime(a) / self.w(a)

    def wronskian(self, a: float) -> float:
        """Z(a) W'(a) - q W(a)^2."""
        return self.z(a) * self.w_prime(a) - self.q * self.w(a) ** 2

    def wronskian_ratio(self, a: float) -> float:
        return self.wronskian(a) / self.w(a)

    def exit_down_ratio(self, y: float, a: float) -> float:
        """Z(y) - Z(a) W(y) / W(a)."""
        if y < 0:
            return 1.0
        return self.z(y) - self.z(a) * self.w_ratio(y, a)

    def laplace_partial(self, s: float, x: float) -> float:
        """Integral of exp(-s z) W(z) over [0, x]."""
        if x <= 0:
            return 0.0
        return integrate_checked(lambda z: math.exp(-s * z) * self.w(z), 0.0, x, label = "laplace_partial")

    def laplace_shifted(self, s: float, x: float) -> float:
        """Integral of exp(-s z) W(x + z) over [0, inf), s > Phi(q)."""
        gap = self._damping_gap(s)
        upper = self._tail_length(gap, x)
        return integrate_checked(lambda z: math.exp(-s * z) * self.w(x + z), 0.0, upper, label = "laplace_shifted")

    def laplace_tail_derivative(self, r: float, x: float) -> float:
        """Integral of exp(-r u) W'(x + u) over [0, inf), r > Phi(q)."""
        gap = self._damping_gap(r)
        upper = self._tail_length(gap, x)
        return integrate_checked(lambda u: math.exp(-r * u) * self.w_prime(x + u), 0.0, upper,
                                 label = "laplace_tail_derivative")

    def _damping_gap(self, s: float) -> float:
        gap = s - self.phi_q
        if not gap > 0:
            raise DomainError(f"damping rate must exceed Phi(q) = {self.phi_q!r} (got {s!r})")
        return gap

    def _tail_length(self, gap: float, x: float) -> float:
        # exp(-Phi z) W(z) is nondecreasing and bounded by 1/psi'(Phi(q)) when psi'(Phi(q)) > 0
        slope = self.model.psi_prime(self.phi_q) if self.phi_q > 0 else self.model.psi_prime_at_zero
        tol = settings.QUAD_EPSABS * 1e-2
        if slope > 0:
            envelope = math.exp(self.phi_q * x) / (gap * slope)
            return max(1.0, math.log(max(envelope / tol, 1.0)) / gap)
        return (_TAIL_EFOLDS + math.log1p(x)) / gap

    # Backend hooks
    def _w(self, x: float) -> float:
        raise NotImplementedError

    def _w_prime(self, x: float) -> float:
        raise NotImplementedError

    def _w_bar(self, x: float) -> float:
        raise NotImplementedError


class BrownianScale(ScaleEvaluator):
    """
    X_t = m t + sigma B_t.

    With roots Phi(q) >= 0 >= rho of psi = q and delta = sqrt(m^2 + 2 q sigma^2),
    W(x) = (exp(Phi x) - exp(rho x)) / delta; helpers work with exp(-Phi x) W(x).
    """
    backend = Backend.CLOSED_FORM_BROWNIAN

    def __init__(self, model: LevyModel, q: float):
        if model.jumps is not None or model.sigma == 0:
            raise DomainError("closed-form Brownian scale functions need sigma > 0 and no jumps")
        super().__init__(model, q)
        m, s2 = model.gamma, model.sigma ** 2
        self._delta = math.sqrt(m * m + 2.0 * self.q * s2)
        self._a = m / s2
        # product of the roots is -2q/sigma^2
        self._rho = -2.0 * self.q / (s2 * self.phi_q) if self.phi_q > 0 else -2.0 * m / s2
        self._gap = self._delta * 2.0 / s2

    def _fill(self, x: float) -> float:
        """1 - exp((rho - Phi) x)."""
        return -math.expm1(-self._gap * x)

    def _w(self, x: float) -> float:
        if self._delta == 0:
            return 2.0 * x / self.model.sigma ** 2
        return math.exp(self.phi_q * x) * self._fill(x) / self._delta

    def _w_prime(self, x: float) -> float:
        if self._delta == 0:
            return 2.0 / self.model.sigma ** 2
        return (self.phi_q * math.exp(self.phi_q * x) - self._rho * math.exp(self._rho * x)) / self._delta

    def _w_bar(self, x: float) -> float:
        if self._delta == 0:
            return x * x / self.model.sigma ** 2
        return float(_expm1_ratio(self.phi_q, x) - _expm1_ratio(self._rho, x)) / self._delta

    def w_ratio(self, y: float, a: float) -> float:
        if y <= 0:
            return 0.0
        if self._delta == 0:
            return y / a
        return math.exp(self.phi_q * (y - a)) * self._fill(y) / self._fill(a)

    def w_prime_ratio(self, a: float) -> float:
        if self._delta == 0:
            return super().w_prime_ratio(a)
        return (self.phi_q - self._rho * math.exp(-self._gap * a)) / self._fill(a)

    def wronskian(self, a: float) -> float:
        # 2/sigma^2 * exp(-2 m a / sigma^2), free of the cosh^2 - sinh^2 cancellation
        return 2.0 / self.model.sigma ** 2 * math.exp(-2.0 * self._a * a)

    def wronskian_ratio(self, a: float) -> float:
        if self._delta == 0:
            return super().wronskian_ratio(a)
        return 2.0 * self._delta / self.model.sigma ** 2 * math.exp(self._rho * a) / self._fill(a)

    def exit_down_ratio(self, y: float, a: float) -> float:
        # exp(-m y / sigma^2) sinh(c (a - y)) / sinh(c a) with c = delta / sigma^2
        if self._delta == 0 or y < 0:
            return super().exit_down_ratio(y, a)
        return math.exp(self._rho * y) * math.expm1(-self._gap * (a - y)) / math.expm1(-self._gap * a)

    def laplace_partial(self, s: float, x: float) -> float:
        if x <= 0:
            return 0.0
        if self._delta == 0:
            return super().laplace_partial(s, x)
        return float(_expm1_ratio(self.phi_q - s, x) - _expm1_ratio(self._rho - s, x)) / self._delta

    def laplace_shifted(self, s: float, x: float) -> float:
        self._damping_gap(s)
        if self._delta == 0:
            return 2.0 / self.model.sigma ** 2 * (x / s + 1.0 / (s * s))
        up, down = self.phi_q, self._rho
        return (math.exp(up * x) / (s - up) - math.exp(down * x) / (s - down)) / self._delta

    def laplace_tail_derivative(self, r: float, x: float) -> float:
        self._damping_gap(r)
        if self._delta == 0:
            return 2.0 / (self.model.sigma ** 2 * r)
        up, down = self.phi_q, self._rho
        return (up * math.exp(up * x) / (r - up) - down * math.exp(down * x) / (r - down)) / self._delta


class PartialFractionScale(ScaleEvaluator):
    backend = Backend.PARTIAL_FRACTION

    def __init__(self, model: LevyModel, q: float):
        super().__init__(model, q)
        numer, _ = model.rational_form(self.q)
        roots = numer.roots().astype(complex)

        # polish on the polynomial, then pin the dominant root to Phi(q)
        dnumer = numer.deriv()
        for _ in range(3):
            slope = dnumer(roots)
            safe = np.where(slope == 0, 1.0, slope)
            roots = np.where(slope == 0, roots, roots - numer(roots) / safe)
        idx = int(np.argmin(np.abs(roots - self.phi_q)))
        if abs(roots[idx] - self.phi_q) > 1e-6 * max(1.0, self.phi_q):
            raise ConvergenceError(f"no root of psi = q near Phi(q) = {self.phi_q!r} [{model.label}]")
        roots[idx] = self.phi_q
        roots = np.where(np.abs(roots.imag) <= 1e-12 * np.maximum(1.0, np.abs(roots)), roots.real + 0j, roots)

        slopes = np.array([complex(model._psi_prime(complex(r))) for r in roots])
        slopes[idx] = model.psi_prime(self.phi_q) if self.phi_q > 0 else model.psi_prime_at_zero
        gaps = np.where(np.eye(len(roots), dtype = bool), np.inf, np.abs(roots[:, None] - roots[None, :]))
        if np.min(np.abs(slopes)) <= 1e-8 or np.min(gaps) <= 1e-6:
            raise DegenerateRootsError(f"psi(theta) = {self.q!r} has a repeated root [{model.label}]")

        # sum D_j = W(0+) and sum zeta_j D_j = W'(0+)
        coefficients = 1.0 / slopes
        for got, want, scale in (
            (np.sum(coefficients), self.w_at_zero(), np.sum(np.abs(coefficients))),
            (np.sum(roots * coefficients), self.w_prime_at_zero(), np.sum(np.abs(roots * coefficients))),
        ):
            if abs(complex(got) - want) > 1e-9 * max(1.0, abs(want), float(scale)):
                raise DegenerateRootsError(
                    f"partial fractions for psi(theta) = {self.q!r} are ill-conditioned "
                    f"(initial value off by {abs(complex(got) - want):.2e}) [{model.label}]"
                )

        residual = max(abs(complex(model._psi(complex(r))) - self.q) for r in roots)
        if residual > 1e-10 * max(1.0, self.q):
            raise ConvergenceError(f"partial-fraction roots residual {residual:.2e} too large [{model.label}]")

        self.roots = roots
        self.coefficients = coefficients
        logger.debug("partial fractions for q=%s: roots=%s", self.q, roots)

    def _terms(self, x: float) -> np.ndarray:
        return self.coefficients * np.exp(self.roots * x)

    def _scaled(self, x: float) -> np.ndarray:
        # D_j exp((zeta_j - Phi) x); every Re zeta_j <= Phi so nothing overflows
        return self.coefficients * np.exp((self.roots - self.phi_q) * x)

    def _w(self, x: float) -> float:
        return float(np.sum(self._terms(x)).real)

    def _w_prime(self, x: float) -> float:
        return float(np.sum(self.roots * self._terms(x)).real)

    def _w_bar(self, x: float) -> float:
        return float(np.sum(self.coefficients * _expm1_ratio(self.roots, x)).real)

    def w_ratio(self, y: float, a: float) -> float:
        if y < 0:
            return 0.0
        base = float(np.sum(self._scaled(a)).real)
        if y == 0:
            return self.w_at_zero() * math.exp(-self.phi_q * a) / base
        top = np.sum(self.coefficients * np.exp(self.roots * y - self.phi_q * a)).real
        return float(top) / base

    def w_prime_ratio(self, a: float) -> float:
        scaled = self._scaled(a)
        return float(np.sum(self.roots * scaled).real / np.sum(scaled).real)

    def _pair_sum(self, weight: np.ndarray, a: float, y: Optional[float] = None) -> float:
        # sum over j < k of weight[j, k] * (pair exponential), scaled by exp(-Phi a)
        zj, zk = self.roots[:, None], self.roots[None, :]
        dd = self.coefficients[:, None] * self.coefficients[None, :]
        if y is None:
            expo = np.exp((zj + zk) * a - self.phi_q * a)
        else:
            expo = np.exp(zk * y + zj * a - self.phi_q * a) - np.exp(zk * a + zj * y - self.phi_q * a)
        upper = np.triu(np.ones(weight.shape, dtype = bool), k = 1)
        return float(np.sum((dd * weight * expo)[upper]).real)

    def wronskian_ratio(self, a: float) -> float:
        if self.q == 0:
            return self.w_prime_ratio(a)
        zj, zk = self.roots[:, None], self.roots[None, :]
        weight = (zj - zk) ** 2 / (zj * zk)
        base = float(np.sum(self._scaled(a)).real)
        return self.q * self._pair_sum(weight, a) / base

    def wronskian(self, a: float) -> float:
        return self.wronskian_ratio(a) * self.w(a)

    def exit_down_ratio(self, y: float, a: float) -> float:
        if y < 0:
            return 1.0
        if self.q == 0:
            return 1.0 - self.w_ratio(y, a)
        zj, zk = self.roots[:, None], self.roots[None, :]
        weight = 1.0 / zk - 1.0 / zj
        base = float(np.sum(self._scaled(a)).real)
        return self.q * self._pair_sum(weight, a, y) / base

    def laplace_partial(self, s: float, x: float) -> float:
        if x <= 0:
            return 0.0
        return float(np.sum(self.coefficients * _expm1_ratio(self.roots - s, x)).real)

    def laplace_shifted(self, s: float, x: float) -> float:
        self._damping_gap(s)
        return float(np.sum(self._terms(x) / (s - self.roots)).real)

    def laplace_tail_derivative(self, r: float, x: float) -> float:
        self._damping_gap(r)
        return float(np.sum(self.roots * self._terms(x) / (r - self.roots)).real)


class InversionScale(ScaleEvaluator):
    backend = Backend.NUMERICAL_INVERSION

    def __init__(self, model: LevyModel, q: float, terms: Optional[int] = None):
        super().__init__(model, q)
        self.inverter = EulerInverter(terms = terms)
        self._w0 = self.w_at_zero()
        # memoised per instance; the quadratures behind w_bar and the identities revisit points
        self._damped_cached = lru_cache(maxsize = 8192)(self._damped)
        self._damped_prime_cached = lru_cache(maxsize = 8192)(self._damped_prime)
        self._check_against_stehfest(1.0)

    def _transform(self, s):
        return 1 / (self.model._psi(s + self.phi_q) - self.q)

    def _damped(self, x: float) -> float:
        return self.inverter(self._transform, x)

    def _damped_prime(self, x: float) -> float:
        return self.inverter(lambda s: s * self._transform(s) - self._w0, x)

    def _w(self, x: float) -> float:
        return math.exp(self.phi_q * x) * self._damped_cached(x)

    def _w_prime(self, x: float) -> float:
        return math.exp(self.phi_q * x) * (self.phi_q * self._damped_cached(x) + self._damped_prime_cached(x))

    def _w_bar(self, x: float) -> float:
        return integrate_checked(self.w, 0.0, x, label = "w_bar")

    def cross_check(self, x: float) -> tuple[float, float]:
        """W(x) by Euler summation and by Gaver-Stehfest."""
        euler = self.w(x)
        stehfest = math.exp(self.phi_q * x) * gaver_stehfest(self._transform, x, self.inverter.ctx)
        return euler, stehfest

    def _check_against_stehfest(self, x: float) -> None:
        euler, stehfest = self.cross_check(x)
        rel = abs(euler - stehfest) / max(abs(euler), 1e-300)
        if rel > 1e-6:
            logger.warning("Euler and Gaver-Stehfest disagree at x=%s: %.17g vs %.17g (rel %.2e) [%s]",
                           x, euler, stehfest, rel, self.model.label)
        else:
            logger.debug("inversion cross-check at x=%s: rel diff %.2e", x, rel)


def _expm1_ratio(k, x: float):
    """(exp(k x) - 1) / k, equal to x at k = 0; works elementwise on complex arrays."""
    k = np.asarray(k)
    zero = k == 0
    safe = np.where(zero, 1.0, k)
    out = np.where(zero, x, np.expm1(safe * x) / safe)
    return out if out.ndim else out[()]


def make_evaluator(model: LevyModel, q: float, backend: Optional[Backend] = None) -> ScaleEvaluator:
    q = float(q)
    if not q >= 0:
        raise DomainError(f"q must be >= 0 (got {q!r})")
    if model.is_pure_drift:
        raise HypothesisError("scale functions need a process with non-monotone paths (pure drift given)")
    return _build_evaluator(model, q, Backend(backend) if backend is not None else None)


@lru_cache(maxsize = 256)
def _build_evaluator(model: LevyModel, q: float, backend: Optional[Backend]) -> ScaleEvaluator:
    if backend is Backend.CLOSED_FORM_BROWNIAN:
        return BrownianScale(model, q)
    if backend is Backend.PARTIAL_FRACTION:
        return PartialFractionScale(model, q)
    if backend is Backend.NUMERICAL_INVERSION:
        return InversionScale(model, q)

    if model.jumps is None:
        return BrownianScale(model, q)
    try:
        return PartialFractionScale(model, q)
    except DegenerateRootsError as e:
        logger.info("%s; falling back to numerical inversion", e)
        return InversionScale(model, q)
