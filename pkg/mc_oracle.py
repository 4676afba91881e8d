"""
Monte Carlo oracle for the occupation, ruin, deficit and Parisian identities.

Each path owns a counter-based Philox stream keyed by (seed, path index), so estimates are
bit-identical for any number of workers. Per path the draws are, in order:
the Poisson jump count on [0, T], the sorted jump times, the claim sizes, then (Gaussian
models only) per chunk the grid normals followed by the bridge uniforms, and finally the
Parisian grace-period clocks.

sigma = 0 paths are piecewise linear between jumps and are walked exactly, event by event.
sigma > 0 paths are walked on the dt-grid merged with the jump times; the occupation time
uses the left-endpoint rule and first passage below a level is refined by the
Brownian-bridge crossing probability.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from enum import Enum
from typing import Literal, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import settings
from errors import ConfigError, ScopeError, require_net_profit
from levy_model import LevyModel

logger = logging.getLogger(__name__)

_BLOCK_PATHS = 1000


class BiasNote(str, Enum):
    NONE = "none"
    GRID_DISCRETIZATION = "grid_discretization"
    HORIZON_TRUNCATION = "horizon_truncation"
    BOTH = "both"

    @classmethod
    def of(cls, grid: bool, truncated: bool) -> "BiasNote":
        if grid and truncated:
            return cls.BOTH
        if grid:
            return cls.GRID_DISCRETIZATION
        if truncated:
            return cls.HORIZON_TRUNCATION
        return cls.NONE


class SimConfig(BaseModel):
    model_config = ConfigDict(extra = "forbid", frozen = True, allow_inf_nan = False)

    n_paths: int = Field(default_factory = lambda: settings.MC_PATHS, ge = 100)
    dt: float = Field(default_factory = lambda: settings.MC_DT, gt = 0, description = "Brownian grid step")
    horizon: Optional[float] = Field(None, gt = 0, description = "Truncation time T; None picks factor/psi'(0+)")
    seed: int = Field(default_factory = lambda: settings.MC_SEED, ge = 0, lt = 2 ** 64)
    b: Optional[float] = Field(None, gt = 0, description = "Lower barrier depth for passage runs")
    bridge: bool = True
    workers: int = Field(default_factory = lambda: settings.MC_WORKERS, ge = 1)

    @model_validator(mode = "after")
    def _dt_within_horizon(self):
        if self.horizon is not None and self.dt > self.horizon:
            raise ValueError(f"dt = {self.dt!r} exceeds the horizon {self.horizon!r}")
        return self


class McEstimate(BaseModel):
    model_config = ConfigDict(frozen = True)

    mean: float
    std_error: float = Field(..., ge = 0)
    n_paths: int
    bias_note: BiasNote


class DeficitSample(BaseModel):
    """Deficit draws of the ruined paths plus the summary estimates."""
    model_config = ConfigDict(frozen = True, arbitrary_types_allowed = True)

    edges: np.ndarray
    counts: np.ndarray
    deficits: np.ndarray
    ruin: McEstimate
    creeping: McEstimate
    laplace: McEstimate


# Per-path simulation
class _Job(NamedTuple):
    model: LevyModel
    x0: float
    lower: Optional[float]
    horizon: float
    dt: float
    bridge: bool
    seed: int
    clock_rate: Optional[float]


class _Path(NamedTuple):
    occupation: float
    hit: bool
    position: float
    crept: bool
    clock_ruin: bool


def path_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key = (int(seed) << 64) | int(index)))


def _simulate_path(job: _Job, index: int) -> _Path:
    rng = path_rng(job.seed, index)
    model = job.model
    if model.jumps is not None:
        n_jumps = rng.poisson(model.jumps.rate * job.horizon)
        times = np.sort(rng.uniform(0.0, job.horizon, size = n_jumps))
        claims = model.jumps.claim.sample(rng, n_jumps)
    else:
        times = np.empty(0)
        claims = np.empty(0)

    if model.sigma == 0:
        occupation, hit, position, excursions = _walk_exact(model.gamma, job.x0, job.lower, job.horizon, times, claims)
        crept = False
    else:
        occupation, hit, position, crept = _walk_grid(model, job, rng, times, claims)
        excursions = np.empty(0)

    clock_ruin = False
    if job.clock_rate is not None and excursions.size:
        clocks = rng.exponential(scale = 1.0 / job.clock_rate, size = excursions.size)
        clock_ruin = bool(np.any(clocks < excursions))
    return _Path(occupation, hit, position, crept, clock_ruin)


def _walk_exact(gamma: float, x0: float, lower: Optional[float], horizon: float,
                times: np.ndarray, claims: np.ndarray):
    # segment k runs from starts[k] to ends[k] with slope gamma, starting at start_val[k]
    starts = np.concatenate(([0.0], times))
    lengths = np.concatenate((times, [horizon])) - starts
    start_val = x0 + gamma * starts - np.concatenate(([0.0], np.cumsum(claims)))

    stop = len(starts)
    hit, position = False, math.nan
    if lower is not None:
        below = np.flatnonzero(start_val[1:] < lower)
        if below.size:
            stop = int(below[0]) + 1
            hit, position = True, float(start_val[stop])

    seg_val = start_val[:stop]
    seg_len = lengths[:stop]
    if gamma > 0:
        under = np.minimum(seg_len, np.maximum(-seg_val, 0.0) / gamma)
    else:
        under = np.where(seg_val < 0, seg_len, 0.0)

    # an excursion below 0 opens at a jump that lands below 0 from at or above 0
    neg = seg_val < 0
    pre_val = seg_val + gamma * seg_len
    opened = neg & np.concatenate(([True], pre_val[:-1] >= 0))
    if neg.any():
        ids = np.cumsum(opened)[neg] - 1
        excursions = np.bincount(ids, weights = under[neg])
    else:
        excursions = np.empty(0)
    return float(math.fsum(under)), hit, position, excursions


def _walk_grid(model: LevyModel, job: _Job, rng: np.random.Generator, times: np.ndarray, claims: np.ndarray):
    gamma, sigma = model.gamma, model.sigma
    n_steps = max(1, int(math.ceil(job.horizon / job.dt - 1e-9)))
    lower = job.lower
    pos = job.x0
    occupation = 0.0

    for first in range(0, n_steps, settings.MC_CHUNK_STEPS):
        last = min(first + settings.MC_CHUNK_STEPS, n_steps)
        t_lo = first * job.dt
        grid = np.minimum(np.arange(first + 1, last + 1) * job.dt, job.horizon)
        t_hi = grid[-1]

        lo_i = np.searchsorted(times, t_lo, side = "right")
        hi_i = np.searchsorted(times, t_hi, side = "right")
        knots = np.concatenate((grid, times[lo_i:hi_i]))
        jumps = np.concatenate((np.zeros(grid.size), claims[lo_i:hi_i]))
        order = np.argsort(knots, kind = "stable")
        knots, jumps = knots[order], jumps[order]

        delta = np.diff(np.concatenate(([t_lo], knots)))
        noise = rng.standard_normal(delta.size)
        move = gamma * delta + sigma * np.sqrt(delta) * noise
        post = pos + np.cumsum(move - jumps)
        left = np.concatenate(([pos], post[:-1]))
        pre = left + move

        if lower is not None:
            crossed = pre < lower
            if job.bridge:
                u = rng.uniform(size = delta.size)
                with np.errstate(divide = "ignore", invalid = "ignore"):
                    gap = np.maximum(left - lower, 0.0) * np.maximum(pre - lower, 0.0)
                    p_touch = np.where(delta > 0, np.exp(-2.0 * gap / (sigma * sigma * delta)), 0.0)
                crossed |= u < p_touch
            jumped = ~crossed & (post < lower)
            stopped = crossed | jumped
            if stopped.any():
                s = int(np.argmax(stopped))
                occupation += math.fsum(delta[:s + 1] * (left[:s + 1] <= 0))
                if crossed[s]:
                    return occupation, True, float(lower), True
                return occupation, True, float(post[s]), False

        occupation += math.fsum(delta * (left <= 0))
        pos = float(post[-1])

    return occupation, False, math.nan, False


def _run_block(job: _Job, start: int, stop: int) -> np.ndarray:
    # columns: occupation, hit, position, crept, clock_ruin
    out = np.empty((stop - start, 5))
    for row, index in enumerate(range(start, stop)):
        out[row] = _simulate_path(job, index)
    return out


def _run(job: _Job, n_paths: int, workers: int) -> np.ndarray:
    bounds = [(s, min(s + _BLOCK_PATHS, n_paths)) for s in range(0, n_paths, _BLOCK_PATHS)]
    if workers <= 1 or len(bounds) == 1:
        blocks = [_run_block(job, s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers = workers) as pool:
            blocks = list(pool.map(_run_block, [job] * len(bounds), *zip(*bounds)))
    return np.concatenate(blocks)


# Configuration helpers
def resolve_horizon(model: LevyModel, cfg: SimConfig, barrier: bool) -> float:
    if cfg.horizon is not None:
        return cfg.horizon
    mean = model.psi_prime_at_zero
    if mean > 0:
        horizon = settings.MC_HORIZON_FACTOR / mean
    elif barrier:
        horizon = settings.MC_HORIZON_FACTOR
    else:
        raise ConfigError(f"no horizon given and psi'(0+) = {mean!r} <= 0: the run length cannot be chosen")
    if cfg.dt > horizon:
        raise ConfigError(f"dt = {cfg.dt!r} exceeds the horizon {horizon!r}")
    return horizon


def _estimate(values: np.ndarray, note: BiasNote) -> McEstimate:
    n = values.size
    mean = math.fsum(values) / n
    if np.all(values == values[0]):
        std_error = 0.0
    else:
        std_error = float(np.std(values, ddof = 1)) / math.sqrt(n)
    return McEstimate(mean = mean, std_error = std_error, n_paths = n, bias_note = note)


def _can_fall(model: LevyModel) -> bool:
    return model.sigma > 0 or model.jumps is not None


def _log_run(kind: str, model: LevyModel, cfg: SimConfig, est: McEstimate) -> None:
    logger.info("%s: %.6f +/- %.6f over %d paths (seed %d, bias %s) [%s]",
                kind, est.mean, est.std_error, est.n_paths, cfg.seed, est.bias_note.value, model.label)


# Estimators
def simulate_occupation(model: LevyModel, lam: float, cfg: SimConfig, x: float = 0.0) -> McEstimate:
    """Estimate E_x[exp(-lam * occupation time of (-inf, 0])], up to tau_{-b}- when cfg.b is set."""
    if not lam >= 0:
        raise ConfigError(f"lambda must be >= 0 (got {lam!r})")
    if not x >= 0:
        raise ConfigError(f"starting point must be >= 0 (got {x!r})")
    barrier = cfg.b is not None
    if not barrier and not model.psi_prime_at_zero > 0:
        raise ConfigError("psi'(0+) <= 0 without a barrier: total occupation time is infinite")
    if lam == 0:
        return McEstimate(mean = 1.0, std_error = 0.0, n_paths = cfg.n_paths, bias_note = BiasNote.NONE)

    horizon = resolve_horizon(model, cfg, barrier)
    job = _Job(model, float(x), -cfg.b if barrier else None, horizon, cfg.dt, cfg.bridge, cfg.seed, None)
    paths = _run(job, cfg.n_paths, cfg.workers)
    truncated = not bool(np.all(paths[:, 1])) if barrier else True
    est = _estimate(np.exp(-lam * paths[:, 0]), BiasNote.of(model.sigma > 0, truncated and _can_fall(model)))
    _log_run("occupation", model, cfg, est)
    return est


def simulate_ruin(model: LevyModel, x: float, cfg: SimConfig) -> McEstimate:
    """Frequency of tau_0- <= T."""
    if not x >= 0:
        raise ConfigError(f"initial capital must be >= 0 (got {x!r})")
    paths = _ruin_paths(model, x, cfg)
    est = _estimate(paths[:, 1], _ruin_note(model, paths))
    _log_run("ruin", model, cfg, est)
    return est


def _ruin_paths(model: LevyModel, x: float, cfg: SimConfig) -> np.ndarray:
    horizon = resolve_horizon(model, cfg, barrier = False)
    job = _Job(model, float(x), 0.0, horizon, cfg.dt, cfg.bridge, cfg.seed, None)
    return _run(job, cfg.n_paths, cfg.workers)


def _ruin_note(model: LevyModel, paths: np.ndarray) -> BiasNote:
    truncated = _can_fall(model) and not bool(np.all(paths[:, 1]))
    return BiasNote.of(model.sigma > 0, truncated)


def simulate_deficit(model: LevyModel, x: float, cfg: SimConfig, r: float = 1.0, bins: int = 50) -> DeficitSample:
    """Histogram of X at ruin on [x_min, 0], creeping frequency and E_x[exp(r X_tau); tau < T]."""
    if not x >= 0:
        raise ConfigError(f"initial capital must be >= 0 (got {x!r})")
    if not r > 0:
        raise ConfigError(f"r must be > 0 (got {r!r})")
    paths = _ruin_paths(model, x, cfg)
    hit = paths[:, 1] > 0
    crept = paths[:, 3] > 0
    positions = np.where(hit, paths[:, 2], 0.0)
    note = _ruin_note(model, paths)

    deficits = positions[hit & ~crept]
    edges = np.linspace(model.tail_cutoff(), 0.0, bins + 1)
    counts, _ = np.histogram(deficits, bins = edges)

    sample = DeficitSample(
        edges = edges,
        counts = counts,
        deficits = deficits,
        ruin = _estimate(paths[:, 1], note),
        creeping = _estimate((hit & crept).astype(float), note),
        laplace = _estimate(np.where(hit, np.exp(r * positions), 0.0), note),
    )
    _log_run("deficit laplace", model, cfg, sample.laplace)
    return sample


def simulate_parisian(model: LevyModel, d: float, cfg: SimConfig, x: float = 0.0,
                      estimator: Literal["clock", "occupation"] = "clock") -> McEstimate:
    """Parisian ruin frequency with an Exp(d) clock per excursion below 0; sigma = 0 only."""
    if model.sigma > 0:
        raise ScopeError("Parisian ruin simulation requires a bounded-variation model (sigma = 0)")
    require_net_profit(model)
    if not d > 0:
        raise ConfigError(f"grace-period rate d must be > 0 (got {d!r})")
    if not x >= 0:
        raise ConfigError(f"initial capital must be >= 0 (got {x!r})")

    horizon = resolve_horizon(model, cfg, barrier = False)
    job = _Job(model, float(x), None, horizon, cfg.dt, cfg.bridge, cfg.seed, float(d))
    paths = _run(job, cfg.n_paths, cfg.workers)
    if estimator == "clock":
        values = paths[:, 4]
    else:
        values = -np.expm1(-d * paths[:, 0])
    est = _estimate(values, BiasNote.HORIZON_TRUNCATION)
    _log_run(f"parisian ({estimator})", model, cfg, est)
    return est
