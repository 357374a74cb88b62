"""Likelihood-ratio discovery significance for on/off measurements.

The ratio compares the best no-signal fit against the best fit with the
signal free; ``sqrt(-2 log lambda)`` carries the sign of the observed
excess so the no-signal distribution is centered at zero.  By default the
free fit lets the signal go negative (unclamped), which keeps the null
distribution Gaussian; the clamped physical-boundary variant (ratio pinned
to 1 for deficits) is available via ``clamped=True``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError
from .likelihoods import NuisanceState, OnOffObservation, log_onoff, log_onoff_sys
from .profiler import ProfileSolution, profile_onoff_sys


@dataclass(frozen=True)
class SignificanceResult:
    """Likelihood ratio and signed significance with both fits attached."""

    lam: float
    s_value: float
    null_fit: ProfileSolution
    free_fit: ProfileSolution


def _signed_sqrt(t: float, excess: float) -> float:
    t = max(0.0, t)
    return math.copysign(math.sqrt(t), excess) if excess != 0.0 else 0.0


def lima_significance(obs: OnOffObservation, clamped: bool = False) -> SignificanceResult:
    """Significance from the two-Poisson on/off likelihood (no systematics).

    Closed-form fits: the free maximum sits at ``b = n_bg / tau`` with the
    signal absorbing the on-zone count; the no-signal maximum pools both
    zones, ``b = (n_obs + n_bg) / (1 + tau)``.
    """
    b0 = (obs.n_obs + obs.n_bg) / (1.0 + obs.tau)
    ll_null = log_onoff(obs, 0.0, b0)
    null_fit = ProfileSolution(nuisance=NuisanceState(b_prime=b0), log_like=ll_null)

    b_hat = obs.n_bg / obs.tau
    s_hat = obs.n_obs - b_hat
    if clamped and s_hat < 0.0:
        free_fit = null_fit
        ll_free = ll_null
    else:
        ll_free = log_onoff(obs, s_hat, b_hat)
        free_fit = ProfileSolution(nuisance=NuisanceState(b_prime=b_hat), log_like=ll_free)

    t = -2.0 * (ll_null - ll_free)
    lam = math.exp(min(0.0, ll_null - ll_free))
    excess = 0.0 if (clamped and s_hat < 0.0) else s_hat
    return SignificanceResult(
        lam=lam,
        s_value=_signed_sqrt(t, excess),
        null_fit=null_fit,
        free_fit=free_fit,
    )


def onoff_sys_significance(
    obs: OnOffObservation, clamped: bool = False, n_scan: int = 601
) -> SignificanceResult:
    """Significance from the on/off likelihood with zone systematics.

    The free fit is closed-form (both efficiency scales at 1, background
    from the off-zone); the no-signal fit runs the efficiency-scale scan.
    """
    if obs.sigma <= 0:
        raise DomainError("sigma must be > 0; use lima_significance instead")

    null_fit = profile_onoff_sys(obs, 0.0, n_scan=n_scan)
    ll_null = null_fit.log_like

    b_hat = obs.n_bg / obs.tau
    s_hat = obs.n_obs - b_hat
    if clamped and s_hat < 0.0:
        free_fit = null_fit
        ll_free = ll_null
    else:
        nuis = NuisanceState(b_prime=b_hat, alpha_on=1.0, alpha_off=1.0)
        ll_free = log_onoff_sys(obs, nuis, s_hat, b_hat)
        free_fit = ProfileSolution(nuisance=nuis, log_like=ll_free)

    t = -2.0 * (ll_null - ll_free)
    lam = math.exp(min(0.0, ll_null - ll_free))
    excess = 0.0 if (clamped and s_hat < 0.0) else s_hat
    return SignificanceResult(
        lam=lam,
        s_value=_signed_sqrt(t, excess),
        null_fit=null_fit,
        free_fit=free_fit,
    )
