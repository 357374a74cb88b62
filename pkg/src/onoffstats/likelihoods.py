"""Log-likelihoods for counting measurements with known or estimated background.

Every function here is a pure, deterministic evaluation: observations,
parameters of interest (signal counts ``s`` or source flux ``f``) and
nuisance parameters in, one log-likelihood out.  Maximization and
integration over nuisances live in :mod:`onoffstats.profiler` and
:mod:`onoffstats.bayes`.

Conventions
-----------
* ``Poisson(0 | 0) = 1`` and ``Poisson(n > 0 | 0) = 0`` (log = -inf).
* Gaussian nuisance densities are *not* truncated or renormalized at 0;
  keeping evaluation pure means any physical clamping is the profiler's
  responsibility.
* Log-factorials go through ``lgamma``; factorials are never formed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, QuadratureError

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class CountingObservation:
    """A single event count in the signal region."""

    n_obs: int

    def __post_init__(self):
        if self.n_obs < 0 or self.n_obs != int(self.n_obs):
            raise DomainError(f"n_obs must be a non-negative integer, got {self.n_obs}")


@dataclass(frozen=True)
class KnownBackgroundModel:
    """Expected background ``b`` with absolute uncertainty ``sigma_b`` (counts)."""

    b: float
    sigma_b: float = 0.0

    def __post_init__(self):
        if self.b < 0:
            raise DomainError(f"b must be >= 0, got {self.b}")
        if self.sigma_b < 0:
            raise DomainError(f"sigma_b must be >= 0, got {self.sigma_b}")


@dataclass(frozen=True)
class OnOffObservation:
    """Counts in the on-zone and off-zone of an experiment.

    Parameters
    ----------
    n_obs : int
        Events in the on-zone (signal plus background).
    n_bg : int
        Events in the off-zone (background only).
    tau : float
        Off-zone to on-zone exposure ratio; the off-zone expects ``tau * b``
        background events when the on-zone expects ``b``.
    sigma : float
        Relative zone-efficiency systematic (dimensionless fraction, e.g.
        0.03 for 3%); 0 means no zone systematic.
    """

    n_obs: int
    n_bg: int
    tau: float
    sigma: float = 0.0

    def __post_init__(self):
        if self.n_obs < 0 or self.n_obs != int(self.n_obs):
            raise DomainError(f"n_obs must be a non-negative integer, got {self.n_obs}")
        if self.n_bg < 0 or self.n_bg != int(self.n_bg):
            raise DomainError(f"n_bg must be a non-negative integer, got {self.n_bg}")
        if self.tau <= 0:
            raise DomainError(f"tau must be > 0, got {self.tau}")
        if self.sigma < 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")


@dataclass(frozen=True)
class NuisanceState:
    """Values of the nuisance parameters at which a likelihood is evaluated.

    ``b_prime`` is the true mean background, ``alpha_on``/``alpha_off`` the
    zone efficiency scales, ``s_sim_prime`` the true simulated signal count.
    Alphas may take any real value here; non-negativity of ``b_prime`` and
    ``s_sim_prime`` is enforced because negative means are unphysical.
    """

    b_prime: float = 0.0
    alpha_on: float = 1.0
    alpha_off: float = 1.0
    s_sim_prime: float = 0.0

    def __post_init__(self):
        if self.b_prime < 0:
            raise DomainError(f"b_prime must be >= 0, got {self.b_prime}")
        if self.s_sim_prime < 0:
            raise DomainError(f"s_sim_prime must be >= 0, got {self.s_sim_prime}")


@dataclass(frozen=True)
class FluxCalibration:
    """Simulated reference converting source flux to expected signal counts.

    A source of flux ``f_sim`` produces ``s_sim`` expected signal events,
    so a flux ``f`` produces ``f * s_sim / f_sim``.  ``sigma_sim`` is the
    absolute uncertainty of ``s_sim``.
    """

    f_sim: float
    s_sim: float
    sigma_sim: float = 0.0

    def __post_init__(self):
        if self.f_sim <= 0:
            raise DomainError(f"f_sim must be > 0, got {self.f_sim}")
        if self.s_sim <= 0:
            raise DomainError(f"s_sim must be > 0, got {self.s_sim}")
        if self.sigma_sim < 0:
            raise DomainError(f"sigma_sim must be >= 0, got {self.sigma_sim}")


def log_poisson(n: int, mean: float) -> float:
    """``ln Poisson(n | mean)`` with the zero-mean point-mass convention."""
    if mean < 0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean}")
    if mean == 0.0:
        return 0.0 if n == 0 else -math.inf
    return n * math.log(mean) - mean - math.lgamma(n + 1)


def log_gaussian(x: float, mean: float, sigma: float) -> float:
    """``ln Gaussian(x | mean, sigma)``; sigma must be positive."""
    if sigma <= 0:
        raise DomainError(f"Gaussian sigma must be > 0, got {sigma}")
    z = (x - mean) / sigma
    return -0.5 * z * z - math.log(sigma) - _LOG_SQRT_2PI


def log_poisson_known_bkg(obs: CountingObservation, s: float, model: KnownBackgroundModel) -> float:
    """``ln Poisson(n_obs | s + b)`` for a fixed, exactly known background."""
    mean = s + model.b
    if mean < 0:
        raise DomainError(f"s + b must be >= 0, got {mean}")
    return log_poisson(obs.n_obs, mean)


def log_known_bkg_sys(
    obs: CountingObservation, nuis: NuisanceState, s: float, model: KnownBackgroundModel
) -> float:
    """``ln [Poisson(n_obs | s + b') Gaussian(b' | b, sigma_b)]``.

    Requires ``sigma_b > 0``; with no background uncertainty use
    :func:`log_poisson_known_bkg` instead.
    """
    if model.sigma_b <= 0:
        raise DomainError("sigma_b must be > 0 for the background-uncertainty likelihood")
    mean = s + nuis.b_prime
    if mean < 0:
        raise DomainError(f"s + b_prime must be >= 0, got {mean}")
    return log_poisson(obs.n_obs, mean) + log_gaussian(nuis.b_prime, model.b, model.sigma_b)


def _marginal_grid(model: KnownBackgroundModel):
    lo = max(0.0, model.b - 8.0 * model.sigma_b)
    hi = model.b + 8.0 * model.sigma_b
    return lo, hi


def log_marginal_known_bkg(
    obs: CountingObservation,
    s: float,
    model: KnownBackgroundModel,
    *,
    tol: float = 1e-10,
) -> float:
    """Background-marginalized log-likelihood.

    Computes ``ln \\int_0^inf Poisson(n_obs | s + b') Gaussian(b' | b, sigma_b) db'``
    by composite Simpson quadrature on ``b' in [max(0, b - 8 sigma_b), b + 8 sigma_b]``,
    doubling the panel count until two refinements agree within ``tol`` on the
    integrand mass.  Reduces to :func:`log_poisson_known_bkg` at ``sigma_b == 0``.

    The Gaussian mass below b' = 0 is cut, not renormalized; for
    ``sigma_b`` approaching b/3 the marginal is therefore biased low.
    """
    if s + model.b < 0:
        raise DomainError(f"s + b must be >= 0, got {s + model.b}")
    if model.sigma_b == 0.0:
        return log_poisson_known_bkg(obs, s, model)
    lo, hi = _marginal_grid(model)
    n = obs.n_obs
    lgn = math.lgamma(n + 1)

    def log_integrand(bp):
        mean = s + bp
        out = np.full_like(bp, -np.inf)
        ok = mean > 0
        with np.errstate(divide="ignore"):
            out[ok] = n * np.log(mean[ok]) - mean[ok] - lgn
        if n == 0:
            out[~ok & (mean == 0)] = 0.0
        z = (bp - model.b) / model.sigma_b
        return out - 0.5 * z * z - math.log(model.sigma_b) - _LOG_SQRT_2PI

    prev = None
    panels = 64
    err = math.inf
    for _ in range(12):
        x = np.linspace(lo, hi, 2 * panels + 1)
        ll = log_integrand(x)
        peak = ll.max()
        if peak == -np.inf:
            return -math.inf
        y = np.exp(ll - peak)
        h = (hi - lo) / (2 * panels)
        simpson = (h / 3.0) * (y[0] + y[-1] + 4.0 * y[1:-1:2].sum() + 2.0 * y[2:-1:2].sum())
        val = peak + math.log(simpson) if simpson > 0 else -math.inf
        if prev is not None:
            err = abs(math.exp(val) - math.exp(prev)) if val > -math.inf else 0.0
            if err <= tol:
                return val
        prev = val
        panels *= 2
    raise QuadratureError("marginal likelihood quadrature did not converge", err)


def log_onoff(obs: OnOffObservation, s: float, b: float) -> float:
    """``ln [Poisson(n_obs | b + s) Poisson(n_bg | tau b)]`` for independent zones."""
    if b < 0:
        raise DomainError(f"b must be >= 0, got {b}")
    if s + b < 0:
        raise DomainError(f"s + b must be >= 0, got {s + b}")
    return log_poisson(obs.n_obs, b + s) + log_poisson(obs.n_bg, obs.tau * b)


def log_onoff_sys(obs: OnOffObservation, nuis: NuisanceState, s: float, b: float) -> float:
    """On/off log-likelihood with Gaussian zone-efficiency systematics.

    ``ln [Poisson(n_obs | alpha_on b + s) Gaussian(alpha_on | 1, sigma)
    Poisson(n_bg | alpha_off tau b) Gaussian(alpha_off | 1, sigma)]``
    """
    if obs.sigma <= 0:
        raise DomainError("sigma must be > 0 for the zone-systematics likelihood")
    if b < 0:
        raise DomainError(f"b must be >= 0, got {b}")
    mean_on = nuis.alpha_on * b + s
    mean_off = nuis.alpha_off * obs.tau * b
    if mean_on < 0:
        raise DomainError(f"alpha_on*b + s must be >= 0, got {mean_on}")
    if mean_off < 0:
        raise DomainError(f"alpha_off*tau*b must be >= 0, got {mean_off}")
    return (
        log_poisson(obs.n_obs, mean_on)
        + log_gaussian(nuis.alpha_on, 1.0, obs.sigma)
        + log_poisson(obs.n_bg, mean_off)
        + log_gaussian(nuis.alpha_off, 1.0, obs.sigma)
    )


def log_flux_known_bkg(
    obs: CountingObservation,
    nuis: NuisanceState,
    f: float,
    model: KnownBackgroundModel,
    calib: FluxCalibration,
) -> float:
    """Flux log-likelihood for a known-background measurement.

    The flux converts to signal counts through the simulated reference,
    ``s = f * s_sim' / f_sim``, with Gaussian constraints on both the true
    background and the true simulated count.
    """
    mean = f * nuis.s_sim_prime / calib.f_sim + nuis.b_prime
    if mean < 0:
        raise DomainError(f"Poisson mean must be >= 0, got {mean}")
    return (
        log_poisson(obs.n_obs, mean)
        + log_gaussian(nuis.b_prime, model.b, model.sigma_b)
        + log_gaussian(nuis.s_sim_prime, calib.s_sim, calib.sigma_sim)
    )


def log_flux_onoff_sys(
    obs: OnOffObservation,
    nuis: NuisanceState,
    f: float,
    b: float,
    calib: FluxCalibration,
) -> float:
    """Flux log-likelihood for an on/off measurement with zone systematics."""
    if obs.sigma <= 0:
        raise DomainError("sigma must be > 0 for the zone-systematics likelihood")
    if b < 0:
        raise DomainError(f"b must be >= 0, got {b}")
    mean_on = nuis.alpha_on * b + f * nuis.s_sim_prime / calib.f_sim
    mean_off = nuis.alpha_off * obs.tau * b
    if mean_on < 0:
        raise DomainError(f"on-zone Poisson mean must be >= 0, got {mean_on}")
    if mean_off < 0:
        raise DomainError(f"off-zone Poisson mean must be >= 0, got {mean_off}")
    return (
        log_poisson(obs.n_obs, mean_on)
        + log_gaussian(nuis.alpha_on, 1.0, obs.sigma)
        + log_poisson(obs.n_bg, mean_off)
        + log_gaussian(nuis.alpha_off, 1.0, obs.sigma)
        + log_gaussian(nuis.s_sim_prime, calib.s_sim, calib.sigma_sim)
    )
