import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy import stats

import settings
from errors import ConfigError, HypothesisError, ScopeError
from fluctuation import deficit_laplace, ruin_probability
from levy_model import LevyModel
from mc_oracle import (
    BiasNote,
    SimConfig,
    path_rng,
    resolve_horizon,
    simulate_deficit,
    simulate_occupation,
    simulate_parisian,
    simulate_ruin,
)
from occupation import occupation_total_lt, occupation_total_lt_from, occupation_until_passage_lt, parisian_ruin


def within(est, expected, slack = 0.0):
    return abs(est.mean - expected) <= 4.0 * est.std_error + slack


# Configuration
def test_sim_config_validation():
    with pytest.raises(ValidationError):
        SimConfig(n_paths = 10)
    with pytest.raises(ValidationError):
        SimConfig(dt = 0.0)
    with pytest.raises(ValidationError):
        SimConfig(dt = 1.0, horizon = 0.5)
    with pytest.raises(ValidationError):
        SimConfig(seed = -1)
    with pytest.raises(ValidationError):
        SimConfig(paths = 1000)


def test_sim_config_defaults_come_from_settings():
    cfg = SimConfig()
    assert cfg.n_paths == settings.MC_PATHS
    assert cfg.seed == settings.MC_SEED
    assert cfg.bridge


def test_resolve_horizon(cramer_lundberg, standard_bm):
    assert resolve_horizon(cramer_lundberg, SimConfig(), barrier = False) == pytest.approx(settings.MC_HORIZON_FACTOR / 0.5)
    assert resolve_horizon(cramer_lundberg, SimConfig(horizon = 7.0), barrier = False) == 7.0
    assert resolve_horizon(standard_bm, SimConfig(), barrier = True) == settings.MC_HORIZON_FACTOR
    with pytest.raises(ConfigError):
        resolve_horizon(standard_bm, SimConfig(), barrier = False)


def test_bias_note_combinations():
    assert BiasNote.of(False, False) is BiasNote.NONE
    assert BiasNote.of(True, False) is BiasNote.GRID_DISCRETIZATION
    assert BiasNote.of(False, True) is BiasNote.HORIZON_TRUNCATION
    assert BiasNote.of(True, True) is BiasNote.BOTH


def test_path_streams_are_independent_of_order():
    first = path_rng(42, 7).standard_normal(4)
    again = path_rng(42, 7).standard_normal(4)
    other = path_rng(42, 8).standard_normal(4)
    assert np.array_equal(first, again)
    assert not np.array_equal(first, other)


# Occupation
def test_zero_lambda_short_circuits(cramer_lundberg):
    est = simulate_occupation(cramer_lundberg, 0.0, SimConfig(n_paths = 100))
    assert est.mean == 1.0
    assert est.std_error == 0.0
    assert est.bias_note is BiasNote.NONE


def test_occupation_needs_barrier_without_drift(standard_bm):
    with pytest.raises(ConfigError, match = "infinite"):
        simulate_occupation(standard_bm, 1.0, SimConfig(n_paths = 100))


def test_occupation_cramer_lundberg(cramer_lundberg):
    est = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 3))
    assert within(est, occupation_total_lt(cramer_lundberg, 1.0), 0.01)
    assert est.bias_note is BiasNote.HORIZON_TRUNCATION
    assert est.n_paths == 2000


def test_occupation_started_above_zero(cramer_lundberg):
    est = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 5), x = 1.0)
    assert within(est, occupation_total_lt_from(cramer_lundberg, 1.0, 1.0), 0.01)


def test_occupation_until_passage_cramer_lundberg(cramer_lundberg):
    est = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 11, b = 1.0))
    assert within(est, occupation_until_passage_lt(cramer_lundberg, 1.0, 1.0), 0.01)


def test_brownian_passage_matches_cosh(standard_bm):
    cfg = SimConfig(n_paths = 1000, dt = 0.01, horizon = 50.0, b = 1.0, seed = 1)
    est = simulate_occupation(standard_bm, 0.5, cfg)
    assert within(est, 1.0 / math.cosh(1.0), 0.02)
    assert est.bias_note in (BiasNote.GRID_DISCRETIZATION, BiasNote.BOTH)


def test_same_seed_same_estimate(cramer_lundberg):
    cfg = SimConfig(n_paths = 500, seed = 9)
    first = simulate_occupation(cramer_lundberg, 1.0, cfg)
    second = simulate_occupation(cramer_lundberg, 1.0, cfg)
    assert first == second
    other = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 500, seed = 10))
    assert other.mean != first.mean


def test_estimate_independent_of_workers(cramer_lundberg):
    serial = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 21, workers = 1))
    pooled = simulate_occupation(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 21, workers = 2))
    assert serial.mean == pooled.mean
    assert serial.std_error == pooled.std_error


# Ruin and deficit
def test_ruin_cramer_lundberg(cramer_lundberg):
    est = simulate_ruin(cramer_lundberg, 0.0, SimConfig(n_paths = 2000, seed = 2))
    assert within(est, 0.5, 0.005)


def test_ruin_pure_drift_never_happens():
    est = simulate_ruin(LevyModel(gamma = 1.0), 0.5, SimConfig(n_paths = 100, horizon = 10.0))
    assert est.mean == 0.0
    assert est.std_error == 0.0
    assert est.bias_note is BiasNote.NONE


def test_ruin_rejects_negative_capital(cramer_lundberg):
    with pytest.raises(ConfigError):
        simulate_ruin(cramer_lundberg, -1.0, SimConfig(n_paths = 100))


def test_deficit_sample_exponential_claims(cramer_lundberg):
    sample = simulate_deficit(cramer_lundberg, 0.7, SimConfig(n_paths = 4000, seed = 8), r = 1.0, bins = 40)
    assert within(sample.ruin, ruin_probability(cramer_lundberg, 0.7), 0.005)
    assert sample.creeping.mean == 0.0
    assert within(sample.laplace, deficit_laplace(cramer_lundberg, 1.0, 0.7), 0.005)
    assert np.all(sample.deficits < 0)
    assert sample.counts.sum() <= sample.deficits.size
    assert len(sample.edges) == 41
    # memoryless claims: the deficit given ruin is again Exp(2)
    assert -sample.deficits.mean() == pytest.approx(0.5, abs = 0.08)


def test_deficit_from_zero_is_exponential(cramer_lundberg):
    sample = simulate_deficit(cramer_lundberg, 0.0, SimConfig(n_paths = 4000, seed = 12))
    assert stats.kstest(-sample.deficits, "expon", args = (0.0, 0.5)).statistic < 0.06


def test_deficit_creeps_with_gaussian_part(jump_diffusion):
    cfg = SimConfig(n_paths = 300, dt = 0.01, horizon = 20.0, seed = 4)
    sample = simulate_deficit(jump_diffusion, 0.5, cfg)
    assert sample.creeping.mean > 0
    assert sample.creeping.mean + sample.deficits.size / 300 == pytest.approx(sample.ruin.mean, abs = 1e-12)


# Parisian ruin
@pytest.mark.parametrize("estimator", ["clock", "occupation"])
def test_parisian_estimators(cramer_lundberg, estimator):
    est = simulate_parisian(cramer_lundberg, 1.0, SimConfig(n_paths = 2000, seed = 6), estimator = estimator)
    assert within(est, parisian_ruin(cramer_lundberg, 1.0), 0.01)
    assert est.bias_note is BiasNote.HORIZON_TRUNCATION


def test_parisian_scope(jump_diffusion):
    with pytest.raises(ScopeError):
        simulate_parisian(jump_diffusion, 1.0, SimConfig(n_paths = 100))
    with pytest.raises(HypothesisError):
        simulate_parisian(LevyModel.model_validate(
            {"gamma": 0.5, "sigma": 0.0, "jumps": {"rate": 1.0, "claim": {"type": "exp", "rate": 1.0}}}
        ), 1.0, SimConfig(n_paths = 100))


# Full-size checks: plain three-standard-error bands
def within_3se(est, expected):
    return abs(est.mean - expected) <= 3.0 * est.std_error


def refines(ests, expected):
    # each refinement moves toward the formula, up to the noise of the two estimates
    errors = [abs(e.mean - expected) for e in ests]
    return all(
        errors[k + 1] <= errors[k] + 3.0 * math.hypot(ests[k].std_error, ests[k + 1].std_error)
        for k in range(len(ests) - 1)
    )


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.25, 1.0, 4.0])
def test_total_occupation_large_run(cramer_lundberg, lam):
    est = simulate_occupation(cramer_lundberg, lam, SimConfig(n_paths = 1_000_000))
    assert within_3se(est, occupation_total_lt(cramer_lundberg, lam))


@pytest.mark.slow
def test_passage_estimate_refines_with_dt(jump_diffusion):
    expected = occupation_until_passage_lt(jump_diffusion, 1.0, 2.0)
    ests = [
        simulate_occupation(jump_diffusion, 1.0, SimConfig(n_paths = 20000, dt = dt, horizon = 40.0, b = 2.0))
        for dt in (1e-2, 1e-3, 1e-4)
    ]
    assert refines(ests, expected)
    assert within_3se(ests[-1], expected)


@pytest.mark.slow
def test_brownian_grid_bias_shrinks_with_dt(standard_bm):
    # without the bridge check the passage is seen late, so the estimate sits low and rises with refinement
    expected = 1.0 / math.cosh(1.0)
    ests = [
        simulate_occupation(standard_bm, 0.5, SimConfig(n_paths = 20000, dt = dt, horizon = 200.0, b = 1.0, bridge = False))
        for dt in (0.04, 0.02, 0.01)
    ]
    assert refines(ests, expected)
    assert ests[0].mean < ests[-1].mean
    assert ests[0].mean < expected - 3.0 * ests[0].std_error


@pytest.mark.slow
def test_deficit_is_exponential_large_run(cramer_lundberg):
    sample = simulate_deficit(cramer_lundberg, 0.0, SimConfig(n_paths = 1_000_000))
    assert within_3se(sample.ruin, 0.5)
    assert stats.kstest(-sample.deficits, "expon", args = (0.0, 0.5)).statistic < 0.01


@pytest.mark.slow
@pytest.mark.parametrize("d", [0.5, 1.0, 2.0])
def test_parisian_large_run(cramer_lundberg, d):
    est = simulate_parisian(cramer_lundberg, d, SimConfig(n_paths = 1_000_000))
    assert within_3se(est, parisian_ruin(cramer_lundberg, d))


@pytest.mark.slow
def test_parisian_estimators_agree_large_run(cramer_lundberg):
    cfg = SimConfig(n_paths = 1_000_000, seed = 17)
    clock = simulate_parisian(cramer_lundberg, 1.0, cfg, estimator = "clock")
    occupation = simulate_parisian(cramer_lundberg, 1.0, cfg.model_copy(update = {"seed": 18}), estimator = "occupation")
    assert abs(clock.mean - occupation.mean) <= 3.0 * math.hypot(clock.std_error, occupation.std_error)
