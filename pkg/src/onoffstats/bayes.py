"""Bayesian interval engine: highest-density ordered integration on a grid.

The posterior is proportional to a supplied likelihood-in-signal (full,
profile or marginal) under a uniform prior on the physical region s >= 0
(equivalently f >= 0 for flux).  Grid cells are accumulated in decreasing
likelihood order until the requested credibility is enclosed; the interval
is the hull of the accumulated cells.  A chi-square shortcut for the
profile-likelihood-ratio crossing is provided for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize, stats

from . import _backend
from .errors import BracketingError, DomainError
from .likelihoods import (
    CountingObservation,
    FluxCalibration,
    KnownBackgroundModel,
    OnOffObservation,
)
from .profiler import profile_b_known_bkg, profile_flux_known_bkg

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_GRID_POINTS = 4000
TAIL_MASS_LIMIT = 1e-4
TOP_CELL_LIMIT = 1e-4


@dataclass(frozen=True)
class ScanGrid:
    """Uniform signal (or flux) grid for posterior integration."""

    s_min: float
    s_max: float
    step: float

    def __post_init__(self):
        if self.s_min > self.s_max:
            raise DomainError(f"s_min {self.s_min} exceeds s_max {self.s_max}")
        if self.step <= 0:
            raise DomainError(f"step must be > 0, got {self.step}")
        if (self.s_max - self.s_min) / self.step > 1e7:
            raise DomainError("grid would exceed 1e7 points")

    @classmethod
    def with_points(cls, s_min: float, s_max: float, n_points: int) -> "ScanGrid":
        if n_points < 2:
            raise DomainError("grid needs at least 2 points")
        return cls(s_min, s_max, (s_max - s_min) / (n_points - 1))

    def points(self) -> np.ndarray:
        n = int(round((self.s_max - self.s_min) / self.step)) + 1
        return self.s_min + self.step * np.arange(n)


@dataclass(frozen=True)
class IntervalResult:
    """A credible or confidence interval with convergence diagnostics.

    ``achieved_mass`` is the posterior mass actually enclosed (None for
    frequentist constructions).  ``diagnostics`` carries the grid size,
    tail-mass estimate and any flags raised during the computation.
    """

    lower: float
    upper: float
    cl: float
    method: str
    achieved_mass: float | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lower > self.upper:
            raise DomainError(f"interval [{self.lower}, {self.upper}] is inverted")
        if self.achieved_mass is not None and self.achieved_mass < self.cl - 1e-12:
            raise DomainError(
                f"achieved mass {self.achieved_mass} below the requested {self.cl}"
            )

    @property
    def flags(self) -> tuple[str, ...]:
        return tuple(self.diagnostics.get("flags", ()))


def default_grid(n_obs: int, b_ref: float, n_points: int = DEFAULT_GRID_POINTS) -> ScanGrid:
    """Default signal grid: covers upward fluctuations past 10 sigma."""
    s_max = n_obs + b_ref + 10.0 * math.sqrt(n_obs + b_ref + 1.0) + 20.0
    return ScanGrid.with_points(0.0, s_max, n_points)


def credible_interval(
    loglike_in_s: Callable[[np.ndarray], np.ndarray] | np.ndarray,
    grid: ScanGrid,
    cl: float,
    method: str = "bayes",
) -> IntervalResult:
    """Highest-density credible interval from a log-likelihood on a grid.

    ``loglike_in_s`` is either a callable evaluated on the grid points
    (vectorized over an ndarray) or a precomputed array of log-likelihood
    values.  Cells are accepted in decreasing likelihood order (ties broken
    toward smaller s) until their mass reaches ``cl``; the reported interval
    is [min, max] of the accepted cells.
    """
    if not 0.0 < cl < 1.0:
        raise DomainError(f"cl must be in (0, 1), got {cl}")
    pts = grid.points()
    if callable(loglike_in_s):
        ll = np.asarray(loglike_in_s(pts), dtype=float)
    else:
        ll = np.asarray(loglike_in_s, dtype=float)
    if ll.shape != pts.shape:
        raise DomainError(f"log-likelihood shape {ll.shape} does not match grid {pts.shape}")

    peak = np.max(ll)
    if not np.isfinite(peak):
        raise DomainError("log-likelihood is not finite anywhere on the grid")
    w = np.exp(ll - peak)
    total = float(w.sum())

    flags = []
    # mass in the cell at the top of the grid; a decaying posterior leaves
    # it empty, so anything sizable means the grid stops or steps too early
    top_fraction = float(w[-1]) / total
    if top_fraction > TOP_CELL_LIMIT:
        flags.append("too_coarse")

    # geometric tail estimate from the last two cells; a non-decaying edge is
    # fatal only if its cells are heavy enough to matter -- profiled flux
    # posteriors legitimately end in a low flat plateau (the simulated-count
    # nuisance absorbs the flux), which is recorded but not failed
    tail_fraction = 0.0
    if w[-1] > 0.0:
        ratio = w[-1] / w[-2] if w[-2] > 0.0 else 2.0
        if ratio < 1.0:
            tail_fraction = float(w[-1] * ratio / (1.0 - ratio)) / total
        else:
            tail_fraction = float("inf")
        if tail_fraction > TAIL_MASS_LIMIT:
            if w[-1] / total < (1.0 - cl) * 1e-4:
                flags.append("flat_tail")
            else:
                flags.append("tail_mass")

    order = np.lexsort((pts, -ll))
    cum = np.cumsum(w[order])
    k = int(np.searchsorted(cum, cl * total, side="left"))
    k = min(k, len(pts) - 1)
    accepted = order[: k + 1]
    achieved = float(cum[k] / total)

    lo_idx, hi_idx = int(accepted.min()), int(accepted.max())
    if hi_idx - lo_idx + 1 != len(accepted):
        flags.append("noncontiguous")

    diagnostics = {
        "grid_size": len(pts),
        "top_cell_mass_fraction": top_fraction,
        "tail_mass_fraction": tail_fraction,
        "flags": flags,
    }
    return IntervalResult(
        lower=float(pts[lo_idx]),
        upper=float(pts[hi_idx]),
        cl=cl,
        method=method,
        achieved_mass=achieved,
        diagnostics=diagnostics,
    )


def _poisson_loglike_grid(n: int, mean: np.ndarray) -> np.ndarray:
    out = np.full(mean.shape, -np.inf)
    pos = mean > 0
    with np.errstate(divide="ignore"):
        out[pos] = n * np.log(mean[pos]) - mean[pos] - math.lgamma(n + 1)
    if n == 0:
        out[mean == 0.0] = 0.0
    return out


def _profile_known_bkg_loglike_grid(
    n: int, s: np.ndarray, b: float, sigma_b: float
) -> np.ndarray:
    """Vectorized profile of b' for Poisson(n | s + b') Gaussian(b' | b, sigma_b)."""
    var = sigma_b * sigma_b
    bq = s + var - b
    cq = -(var * (n - s) + b * s)
    disc = bq * bq - 4.0 * cq
    sq = np.sqrt(np.maximum(disc, 0.0))
    q = -0.5 * (bq + np.where(bq >= 0.0, sq, -sq))
    r1 = q
    with np.errstate(divide="ignore", invalid="ignore"):
        r2 = np.where(q != 0.0, cq / q, 0.0)
    norm = -math.log(sigma_b) - _LOG_SQRT_2PI
    best = np.full(s.shape, -np.inf)
    for root in (r1, r2):
        bp = np.maximum(root, 0.0)
        pull = (bp - b) / sigma_b
        cand = _poisson_loglike_grid(n, s + bp) - 0.5 * pull * pull + norm
        best = np.maximum(best, cand)
    return best


def _profile_onoff_loglike_grid(obs: OnOffObservation, s: np.ndarray) -> np.ndarray:
    """Vectorized profile of b for the two-Poisson on/off likelihood."""
    a = 1.0 + obs.tau
    bq = -(obs.n_obs + obs.n_bg - s * a)
    cq = -obs.n_bg * s
    disc = bq * bq - 4.0 * a * cq
    sq = np.sqrt(np.maximum(disc, 0.0))
    q = -0.5 * (bq + np.where(bq >= 0.0, sq, -sq))
    with np.errstate(divide="ignore", invalid="ignore"):
        r1 = np.where(q != 0.0, q / a, 0.0)
        r2 = np.where(q != 0.0, cq / q, 0.0)
    best = np.full(s.shape, -np.inf)
    for root in (r1, r2, np.zeros_like(s)):
        b = np.maximum(root, 0.0)
        cand = _poisson_loglike_grid(obs.n_obs, b + s)
        cand = cand + _poisson_loglike_grid(obs.n_bg, obs.tau * b)
        best = np.maximum(best, cand)
    return best


def _with_auto_extend(build_ll, grid: ScanGrid, cl: float, method: str) -> IntervalResult:
    """Run the ordered integration, extending the grid once on a tail-mass flag."""
    result = credible_interval(build_ll(grid), grid, cl, method=method)
    if "tail_mass" in result.flags:
        n_points = result.diagnostics["grid_size"]
        wider = ScanGrid.with_points(grid.s_min, grid.s_min + 2.0 * (grid.s_max - grid.s_min), n_points)
        result = credible_interval(build_ll(wider), wider, cl, method=method)
        result.diagnostics["extended"] = True
    return result


def bayes_upper_limit_poisson(
    obs: CountingObservation,
    model: KnownBackgroundModel,
    cl: float,
    grid: ScanGrid | None = None,
) -> IntervalResult:
    """Credible interval for the pure Poisson likelihood with fixed background."""
    grid = grid or default_grid(obs.n_obs, model.b)

    def build(g):
        return _poisson_loglike_grid(obs.n_obs, g.points() + model.b)

    return _with_auto_extend(build, grid, cl, "bayes-poisson")


def bayes_limit_profile_known_bkg(
    obs: CountingObservation,
    model: KnownBackgroundModel,
    cl: float,
    grid: ScanGrid | None = None,
) -> IntervalResult:
    """Credible interval from the profile likelihood with background uncertainty."""
    if model.sigma_b <= 0:
        raise DomainError("sigma_b must be > 0; use bayes_upper_limit_poisson instead")
    grid = grid or default_grid(obs.n_obs, model.b)

    def build(g):
        return _profile_known_bkg_loglike_grid(obs.n_obs, g.points(), model.b, model.sigma_b)

    return _with_auto_extend(build, grid, cl, "bayes-profile")


def bayes_limit_onoff(
    obs: OnOffObservation, cl: float, grid: ScanGrid | None = None
) -> IntervalResult:
    """Credible interval from the profiled two-Poisson on/off likelihood."""
    grid = grid or default_grid(obs.n_obs, obs.n_bg / obs.tau)

    def build(g):
        return _profile_onoff_loglike_grid(obs, g.points())

    return _with_auto_extend(build, grid, cl, "bayes-onoff")


def bayes_limit_onoff_sys(
    obs: OnOffObservation,
    cl: float,
    grid: ScanGrid | None = None,
    n_scan: int = 601,
) -> IntervalResult:
    """Credible interval from the zone-systematics on/off profile likelihood."""
    if obs.sigma <= 0:
        raise DomainError("sigma must be > 0; use bayes_limit_onoff instead")
    grid = grid or default_grid(obs.n_obs, obs.n_bg / obs.tau)
    kern = _backend.get_backend()
    boundary_count = 0

    def build(g):
        nonlocal boundary_count
        ll, _, n_boundary = kern.profile_onoff_sys_grid(
            obs.n_obs, obs.n_bg, obs.tau, obs.sigma, g.points(), n_scan
        )
        boundary_count = n_boundary
        return ll

    result = _with_auto_extend(build, grid, cl, "bayes-onoff-sys")
    if boundary_count:
        result.diagnostics["flags"].append("scan_boundary")
        result.diagnostics["boundary_points"] = boundary_count
    return result


def bayes_limit_flux(
    obs: CountingObservation | OnOffObservation,
    calib: FluxCalibration,
    cl: float,
    mode: str,
    model: KnownBackgroundModel | None = None,
    grid: ScanGrid | None = None,
    n_scan: int = 601,
) -> IntervalResult:
    """Credible interval on source flux via the profiled flux likelihoods.

    ``mode`` selects the measurement: "known-bkg" (CountingObservation plus a
    KnownBackgroundModel) or "onoff-sys" (OnOffObservation with zone
    systematics).  The signal-count grid bound is converted to flux through
    the calibration, stretched for the simulated-count uncertainty.
    """
    if mode == "known-bkg":
        if model is None:
            raise DomainError("known-bkg flux mode requires a KnownBackgroundModel")
        b_ref = model.b
    elif mode == "onoff-sys":
        b_ref = obs.n_bg / obs.tau
    else:
        raise DomainError(f"unknown flux mode {mode!r}")

    if grid is None:
        counts_max = obs.n_obs + b_ref + 10.0 * math.sqrt(obs.n_obs + b_ref + 1.0) + 20.0
        stretch = 1.0 + 5.0 * calib.sigma_sim / calib.s_sim
        f_max = counts_max * calib.f_sim / calib.s_sim * stretch
        grid = ScanGrid.with_points(0.0, f_max, DEFAULT_GRID_POINTS)

    if mode == "known-bkg":

        def build(g):
            pts = g.points()
            return np.array(
                [profile_flux_known_bkg(obs, float(f), model, calib).log_like for f in pts]
            )

        return _with_auto_extend(build, grid, cl, "bayes-flux-known")

    kern = _backend.get_backend()
    boundary_count = 0

    def build(g):
        nonlocal boundary_count
        ll, _, n_boundary = kern.profile_flux_onoff_sys_grid(
            obs.n_obs,
            obs.n_bg,
            obs.tau,
            obs.sigma,
            g.points(),
            calib.f_sim,
            calib.s_sim,
            calib.sigma_sim,
            n_scan,
        )
        boundary_count = n_boundary
        return ll

    result = _with_auto_extend(build, grid, cl, "bayes-flux-onoff-sys")
    if boundary_count:
        result.diagnostics["flags"].append("scan_boundary")
        result.diagnostics["boundary_points"] = boundary_count
    return result


def chi2_approx_limit(
    obs: CountingObservation, model: KnownBackgroundModel, cl: float
) -> IntervalResult:
    """Interval from the chi-square crossing of the profile likelihood ratio.

    The ratio statistic ``-2 log R(s)`` is compared against the chi-square
    (1 dof) quantile for ``cl`` (2.7055 at 90%); when the best fit sits on
    the physical boundary s = 0 only the upper crossing exists.
    """
    if model.sigma_b <= 0:
        raise DomainError("sigma_b must be > 0 for the chi-square approximation")
    if not 0.0 < cl < 1.0:
        raise DomainError(f"cl must be in (0, 1), got {cl}")
    threshold = float(stats.chi2.ppf(cl, 1))
    s_hat = max(0.0, obs.n_obs - model.b)
    ll_hat = profile_b_known_bkg(obs, s_hat, model).log_like

    def t_stat(s):
        return -2.0 * (profile_b_known_bkg(obs, float(s), model).log_like - ll_hat)

    # upper crossing: expand the bracket geometrically
    step = max(1.0, math.sqrt(obs.n_obs + model.b + 1.0))
    hi = s_hat + step
    for _ in range(80):
        if t_stat(hi) > threshold:
            break
        hi += step
        step *= 1.6
    else:
        raise BracketingError(f"no upper chi-square crossing found below s = {hi}")
    upper = float(optimize.brentq(lambda s: t_stat(s) - threshold, s_hat, hi, xtol=1e-8))

    lower = 0.0
    if s_hat > 0.0 and t_stat(0.0) > threshold:
        lower = float(optimize.brentq(lambda s: t_stat(s) - threshold, 0.0, s_hat, xtol=1e-8))

    return IntervalResult(
        lower=lower,
        upper=upper,
        cl=cl,
        method="chi2",
        achieved_mass=None,
        diagnostics={"threshold": threshold, "s_hat": s_hat, "flags": []},
    )
