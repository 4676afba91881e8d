import math

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st
from pydantic import ValidationError
from scipy import integrate

from errors import DomainError
from levy_model import ErlangClaim, ExponentialClaim, HyperExponentialClaim, LevyModel


# Laplace exponent
def test_psi_polynomial_case(bm_drift):
    assert bm_drift.psi(1.0) == pytest.approx(2.0, rel = 1e-15)
    assert bm_drift.psi(0.0) == 0.0


def test_psi_exponential_claims(cramer_lundberg):
    assert cramer_lundberg.psi(1.0) == pytest.approx(2.0 / 3.0, rel = 1e-14)


def test_psi_matches_levy_integral(cramer_lundberg):
    theta = 1.0
    jump, _ = integrate.quad(lambda c: (math.exp(-theta * c) - 1.0) * 2.0 * math.exp(-2.0 * c), 0.0, np.inf)
    assert cramer_lundberg.psi(theta) == pytest.approx(theta + jump, rel = 1e-10)


def test_psi_rejects_negative_theta(cramer_lundberg):
    with pytest.raises(DomainError):
        cramer_lundberg.psi(-0.1)
    with pytest.raises(DomainError):
        cramer_lundberg.psi_prime(-0.1)


def test_psi_prime_values(bm_drift, cramer_lundberg):
    assert bm_drift.psi_prime(0.0) == 1.0
    assert bm_drift.psi_prime(1.0) == pytest.approx(3.0, rel = 1e-15)
    assert cramer_lundberg.psi_prime(0.0) == pytest.approx(0.5, rel = 1e-15)


def test_psi_prime_matches_finite_differences(profit_model):
    h = 1e-5
    for theta in np.linspace(0.1, 5.0, 12):
        fd = (profit_model.psi(theta + h) - profit_model.psi(theta - h)) / (2 * h)
        assert profit_model.psi_prime(theta) == pytest.approx(fd, rel = 1e-6)


def test_psi_strictly_convex_and_unbounded(profit_model):
    grid = np.linspace(0.0, 10.0, 41)
    values = np.array([profit_model.psi(t) for t in grid])
    assert np.all(values[1:-1] < 0.5 * (values[:-2] + values[2:]))
    assert profit_model.psi(1e6) > 1e5


# Right inverse
def test_phi_quadratic_root(bm_drift):
    assert bm_drift.phi(2.0) == pytest.approx(1.0, rel = 1e-12)


def test_phi_exponential_claims(cramer_lundberg):
    assert cramer_lundberg.phi(1.0) == pytest.approx(math.sqrt(2.0), abs = 1e-12)


def test_phi_zero_under_nonnegative_drift(profit_model, standard_bm):
    assert profit_model.phi(0.0) == 0.0
    assert standard_bm.phi(0.0) == 0.0


def test_phi_negative_drift_has_positive_root():
    model = LevyModel.model_validate(
        {"gamma": 0.5, "sigma": 0.0, "jumps": {"rate": 1.0, "claim": {"type": "exp", "rate": 1.0}}}
    )
    root = model.phi(0.0)
    # psi(theta) = 0.5 theta - theta/(1 + theta) vanishes at theta = 1
    assert root == pytest.approx(1.0, rel = 1e-12)


def test_phi_inverts_psi_on_log_grid(profit_model):
    for q in np.logspace(-6, 3, 19):
        assert profit_model.psi(profit_model.phi(q)) == pytest.approx(q, rel = 1e-12)


@hyp_settings(max_examples = 50, deadline = None)
@given(st.floats(0.0, 50.0), st.floats(0.0, 50.0))
def test_phi_nondecreasing(q1, q2):
    model = LevyModel.model_validate(
        {"gamma": 1.0, "sigma": 1.0, "jumps": {"rate": 1.0, "claim": {"type": "exp", "rate": 2.0}}}
    )
    lo, hi = sorted((q1, q2))
    assert model.phi(lo) <= model.phi(hi)


def test_phi_tiny_q(cramer_lundberg):
    # psi(t) = t - t^2 / (2 + t) for the exponential claims: Phi(q) = 2 q to rounding
    for q in (1e-30, 1e-90, 1e-200, 5e-324):
        assert cramer_lundberg.phi(q) == pytest.approx(2.0 * q, rel = 1e-12)


def test_phi_tiny_q_zero_drift():
    # psi'(0+) = 0, psi''(0+) = 1 + 2 / 4: Phi(q) ~ sqrt(2 q / 1.5)
    model = LevyModel.model_validate(
        {"gamma": 0.5, "sigma": 1.0, "jumps": {"rate": 1.0, "claim": {"type": "exp", "rate": 2.0}}}
    )
    for q in (1e-30, 1e-200):
        assert model.phi(q) == pytest.approx(math.sqrt(q / 0.75), rel = 1e-9)
    assert model.phi(1e-200) <= model.phi(1e-199)


def test_phi_small_q_brownian(standard_bm, bm_drift):
    assert standard_bm.phi(1e-200) == pytest.approx(math.sqrt(2e-200), rel = 1e-14)
    assert bm_drift.phi(1e-200) == pytest.approx(1e-200, rel = 1e-14)


def test_phi_rejects_negative_q(cramer_lundberg):
    with pytest.raises(DomainError):
        cramer_lundberg.phi(-1.0)


# Levy measure
def test_levy_tail_exponential(cramer_lundberg):
    assert cramer_lundberg.levy_tail(-1.0) == pytest.approx(math.exp(-2.0), rel = 1e-14)


def test_levy_tail_hyperexponential():
    model = LevyModel.model_validate(
        {"gamma": 3.0, "sigma": 0.0,
         "jumps": {"rate": 2.0, "claim": {"type": "hyperexp", "weights": [0.5, 0.5], "rates": [1.0, 3.0]}}}
    )
    # 2 * (0.5 exp(-1) + 0.5 exp(-3))
    assert model.levy_tail(-1.0) == pytest.approx(math.exp(-1.0) + math.exp(-3.0), rel = 1e-14)
    assert model.levy_tail(-1.0) == pytest.approx(0.4176665, abs = 1e-7)
    density_mass, _ = integrate.quad(lambda u: model.levy_density(u), -np.inf, -1.0)
    assert density_mass == pytest.approx(model.levy_tail(-1.0), rel = 1e-9)


def test_levy_tail_without_jumps(bm_drift):
    assert bm_drift.levy_tail(-3.0) == 0.0


def test_levy_tail_domain(cramer_lundberg):
    with pytest.raises(DomainError):
        cramer_lundberg.levy_tail(0.0)


def test_levy_tail_left_limit_and_monotone(hyperexp):
    grid = -np.logspace(-12, 1.5, 30)
    values = [hyperexp.levy_tail(x) for x in grid]
    assert values[0] == pytest.approx(hyperexp.jump_rate, rel = 1e-9)
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_integrated_tail_matches_quadrature(profit_model):
    if profit_model.jumps is None:
        pytest.skip("no jumps")
    mass, _ = integrate.quad(profit_model.levy_tail, -np.inf, 0.0, epsabs = 1e-12)
    expected = profit_model.jump_rate * profit_model.jumps.claim.mean
    assert mass == pytest.approx(expected, abs = 1e-8)
    assert profit_model.integrated_tail(0.0) == pytest.approx(expected, rel = 1e-14)

    partial, _ = integrate.quad(profit_model.levy_tail, -np.inf, -0.7, epsabs = 1e-12)
    assert profit_model.integrated_tail(-0.7) == pytest.approx(partial, abs = 1e-9)


def test_tail_cutoff_bounds_tail(profit_model):
    cut = profit_model.tail_cutoff(1e-14)
    assert cut < 0
    assert profit_model.levy_tail(cut) <= 1.000001e-14


def test_rational_form_reproduces_psi(profit_model):
    numer, denom = profit_model.rational_form(0.7)
    for theta in (0.3, 1.0, 4.5):
        assert numer(theta) / denom(theta) == pytest.approx(profit_model.psi(theta) - 0.7, rel = 1e-12)


# Validation
def test_claim_validation():
    with pytest.raises(ValidationError):
        ExponentialClaim(rate = 0.0)
    with pytest.raises(ValidationError):
        HyperExponentialClaim(weights = (0.5, 0.6), rates = (1.0, 2.0))
    with pytest.raises(ValidationError):
        HyperExponentialClaim(weights = (0.5, 0.5), rates = (2.0, 2.0))
    with pytest.raises(ValidationError):
        HyperExponentialClaim(weights = (0.5, 0.5), rates = (1.0,))
    with pytest.raises(ValidationError):
        ErlangClaim(shape = 0, rate = 1.0)


def test_model_validation():
    with pytest.raises(ValidationError):
        LevyModel(gamma = -1.0, sigma = 0.0)
    with pytest.raises(ValidationError):
        LevyModel(gamma = 1.0, sigma = -1.0)
    with pytest.raises(ValidationError):
        LevyModel.model_validate({"gamma": 1.0, "sigma": 1.0, "drift": 2.0})
    with pytest.raises(ValidationError):
        LevyModel.model_validate({"gamma": 1.0, "jumps": {"rate": 0.0, "claim": {"type": "exp", "rate": 1.0}}})


def test_pure_drift_is_accepted():
    model = LevyModel(gamma = 1.0)
    assert model.is_pure_drift
    assert model.regularity.bounded_variation
    assert model.regularity.drift_d == 1.0


def test_claim_sampling_mean():
    claim = ErlangClaim(shape = 2, rate = 3.0)
    draws = claim.sample(np.random.default_rng(7), 200_000)
    assert draws.mean() == pytest.approx(claim.mean, rel = 0.01)
