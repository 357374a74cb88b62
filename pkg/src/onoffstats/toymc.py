"""Deterministic toy Monte Carlo for on/off experiments.

Each trial owns an independent random stream derived from
``SeedSequence(seed, spawn_key=(trial_index,))`` feeding a counter-based
Philox generator, so a trial's observation depends only on (seed,
trial_index) -- never on execution order or thread count.  Efficiency
scales are drawn from Gaussian(1, sigma) truncated below zero by redraw
(the redraw count is reported; for sigma <= 0.1 it is always zero).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .bayes import ScanGrid, bayes_limit_onoff, bayes_limit_onoff_sys, bayes_upper_limit_poisson
from .errors import DomainError
from .likelihoods import CountingObservation, KnownBackgroundModel, OnOffObservation
from .neyman import default_s_grid, fc_exact_interval
from .significance import lima_significance, onoff_sys_significance

HIST_BINS = 81
HIST_RANGE = (-6.0, 6.0)


@dataclass(frozen=True)
class ToyConfig:
    """Generative model and trial budget for a toy study."""

    s_true: float
    b_true: float
    tau: float
    sigma: float
    n_trials: int
    seed: int

    def __post_init__(self):
        if self.s_true < 0 or self.b_true < 0 or self.sigma < 0:
            raise DomainError("s_true, b_true and sigma must be >= 0")
        if self.tau <= 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.n_trials < 1:
            raise DomainError(f"n_trials must be >= 1, got {self.n_trials}")


@dataclass(frozen=True)
class StudySummary:
    """Distribution summary of a per-trial statistic."""

    mean: float
    stddev: float
    ks_distance: float
    hist_edges: np.ndarray
    hist_counts: np.ndarray
    underflow: int
    overflow: int
    n_trials: int
    redraws: int
    config: ToyConfig
    method: str


@dataclass(frozen=True)
class CoverageSummary:
    """Empirical coverage of an interval method with its Wilson-score band."""

    coverage: float
    wilson_low: float
    wilson_high: float
    n_trials: int
    n_covered: int
    cl: float
    config: ToyConfig
    method: str


def _trial_rng(cfg: ToyConfig, trial_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(trial_index,))
    return np.random.Generator(np.random.Philox(ss))


def _draw_trial(cfg: ToyConfig, trial_index: int) -> tuple[OnOffObservation, int]:
    rng = _trial_rng(cfg, trial_index)
    redraws = 0
    alphas = []
    for _ in range(2):
        a = 1.0 + cfg.sigma * rng.standard_normal()
        while a <= 0.0:
            redraws += 1
            a = 1.0 + cfg.sigma * rng.standard_normal()
        alphas.append(a)
    n_obs = int(rng.poisson(alphas[0] * cfg.b_true + cfg.s_true))
    n_bg = int(rng.poisson(alphas[1] * cfg.tau * cfg.b_true))
    return OnOffObservation(n_obs, n_bg, cfg.tau, cfg.sigma), redraws


def generate_onoff(cfg: ToyConfig, trial_index: int) -> OnOffObservation:
    """The on/off observation of one trial, fully determined by (seed, index)."""
    if not 0 <= trial_index < cfg.n_trials:
        raise DomainError(f"trial_index must be in [0, {cfg.n_trials}), got {trial_index}")
    return _draw_trial(cfg, trial_index)[0]


def _map_trials(fun, n_trials: int, threads: int):
    """Evaluate fun(i) for every trial; results ordered by index regardless
    of schedule."""
    if threads <= 1:
        return [fun(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fun, range(n_trials)))


def significance_study(
    cfg: ToyConfig, method: str = "onoff-sys", clamped: bool = False, threads: int = 1
) -> StudySummary:
    """Distribution of the signed significance over toy trials."""
    if method == "onoff-sys":
        if cfg.sigma <= 0:
            raise DomainError("onoff-sys significance needs sigma > 0")

        def stat(obs):
            return onoff_sys_significance(obs, clamped=clamped).s_value

    elif method == "lima":

        def stat(obs):
            return lima_significance(obs, clamped=clamped).s_value

    else:
        raise DomainError(f"unknown significance method {method!r}")

    def run(i):
        obs, redraws = _draw_trial(cfg, i)
        return stat(obs), redraws

    rows = _map_trials(run, cfg.n_trials, threads)
    values = np.array([r[0] for r in rows])
    redraws = sum(r[1] for r in rows)

    counts, edges = np.histogram(values, bins=HIST_BINS, range=HIST_RANGE)
    return StudySummary(
        mean=float(values.mean()),
        stddev=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
        ks_distance=float(stats.kstest(values, "norm").statistic),
        hist_edges=edges,
        hist_counts=counts,
        underflow=int((values < HIST_RANGE[0]).sum()),
        overflow=int((values > HIST_RANGE[1]).sum()),
        n_trials=cfg.n_trials,
        redraws=redraws,
        config=cfg,
        method=method,
    )


def _wilson(k: int, n: int, z: float = 1.959963984540054):
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return center - half, center + half


def coverage_study(
    cfg: ToyConfig,
    method: str,
    cl: float,
    threads: int = 1,
    grid_points: int | None = None,
) -> CoverageSummary:
    """Fraction of trials whose interval contains the true signal.

    Methods drawing only an on-zone count ("fc", "bayes-poisson") treat the
    true background as exactly known; the on/off methods consume the full
    toy observation.  Intervals are memoized per distinct observation.
    """
    cache: dict = {}

    if method in ("fc", "bayes-poisson"):
        model = KnownBackgroundModel(b=cfg.b_true, sigma_b=0.0)
        s_grid = default_s_grid(int(cfg.s_true + cfg.b_true + 30), cfg.b_true)

        def interval(obs):
            key = obs.n_obs
            if key not in cache:
                if method == "fc":
                    cache[key] = fc_exact_interval(obs.n_obs, cfg.b_true, cl, s_grid)
                else:
                    cache[key] = bayes_upper_limit_poisson(
                        CountingObservation(obs.n_obs), model, cl
                    )
            return cache[key]

    elif method in ("bayes-onoff", "bayes-onoff-sys"):

        def interval(obs):
            key = (obs.n_obs, obs.n_bg)
            if key not in cache:
                grid = None
                if grid_points is not None:
                    s_max = obs.n_obs + obs.n_bg / obs.tau + 10.0 * math.sqrt(
                        obs.n_obs + obs.n_bg / obs.tau + 1.0
                    ) + 20.0
                    grid = ScanGrid.with_points(0.0, s_max, grid_points)
                if method == "bayes-onoff":
                    cache[key] = bayes_limit_onoff(obs, cl, grid=grid)
                else:
                    cache[key] = bayes_limit_onoff_sys(obs, cl, grid=grid)
            return cache[key]

    else:
        raise DomainError(f"unknown coverage method {method!r}")

    def run(i):
        obs, _ = _draw_trial(cfg, i)
        res = interval(obs)
        return res.lower <= cfg.s_true <= res.upper

    covered = _map_trials(run, cfg.n_trials, threads)
    k = int(sum(covered))
    lo, hi = _wilson(k, cfg.n_trials)
    return CoverageSummary(
        coverage=k / cfg.n_trials,
        wilson_low=lo,
        wilson_high=hi,
        n_trials=cfg.n_trials,
        n_covered=k,
        cl=cl,
        config=cfg,
        method=method,
    )
