"""Profiled nuisance parameters for every likelihood, at fixed signal or flux.

Each ``profile_*`` function maximizes the matching log-likelihood over its
nuisance parameters with the parameter of interest held fixed, using the
closed-form stationarity quadratics where they exist and a one-dimensional
efficiency-scale scan (601 points over 1 +- 3 sigma, golden-section refined,
widened once to 1 +- 5 sigma if the maximum sits on the edge) where they do
not.  Negative nuisance solutions are replaced by zero and flagged.

Signal/flux values are expected to be physical (>= 0).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import _backend
from ._kernels_py import (
    FLAG_ALPHA_CLAMPED,
    FLAG_B_CLAMPED,
    FLAG_BOUNDARY,
    FLAG_SSIM_CLAMPED,
)
from .errors import DomainError
from .likelihoods import (
    CountingObservation,
    FluxCalibration,
    KnownBackgroundModel,
    NuisanceState,
    OnOffObservation,
    log_flux_known_bkg,
    log_known_bkg_sys,
    log_onoff,
)
from .roots import solve_quadratic


@dataclass(frozen=True)
class ProfileSolution:
    """Fitted nuisance values with the attained log-likelihood.

    ``clamped`` names the parameters that were forced to zero because the
    stationarity solution was negative; ``at_boundary`` marks a scan maximum
    stuck at the (already widened) scan edge.
    """

    nuisance: NuisanceState
    log_like: float
    scan_points: int = 0
    clamped: frozenset[str] = field(default_factory=frozenset)
    at_boundary: bool = False


def profile_b_known_bkg(
    obs: CountingObservation, s: float, model: KnownBackgroundModel
) -> ProfileSolution:
    """Best true background for Poisson(n | s + b') Gaussian(b' | b, sigma_b).

    The stationarity condition in b' is a quadratic; the non-negative root
    with the higher likelihood wins, or 0 when both roots are negative.
    """
    if model.sigma_b <= 0:
        raise DomainError("profiling b' requires sigma_b > 0")
    if s < 0 and s + model.b < 0:
        raise DomainError(f"s + b must be >= 0, got {s + model.b}")
    var = model.sigma_b**2
    roots = solve_quadratic(1.0, s + var - model.b, -(var * (obs.n_obs - s) + model.b * s))
    candidates = sorted({r for r in roots if r >= 0.0})
    clamped = frozenset()
    if not candidates:
        candidates = [0.0]
        clamped = frozenset({"b_prime"})
    best_b, best_ll = None, None
    for bp in candidates:
        ll = log_known_bkg_sys(obs, NuisanceState(b_prime=bp), s, model)
        if best_ll is None or ll > best_ll:
            best_b, best_ll = bp, ll
    return ProfileSolution(
        nuisance=NuisanceState(b_prime=best_b),
        log_like=best_ll,
        scan_points=len(candidates),
        clamped=clamped,
    )


def profile_b_onoff(obs: OnOffObservation, s: float) -> ProfileSolution:
    """Best common background for the two-Poisson on/off likelihood.

    Solves (1 + tau) b^2 - (n_on + n_off - s (1 + tau)) b - n_off s = 0 and
    keeps the non-negative root (0 if none).
    """
    a = 1.0 + obs.tau
    b_coef = -(obs.n_obs + obs.n_bg - s * a)
    c_coef = -obs.n_bg * s
    roots = solve_quadratic(a, b_coef, c_coef)
    candidates = sorted({r for r in roots if r >= 0.0} | {0.0})
    best_b, best_ll = 0.0, None
    for b in candidates:
        ll = log_onoff(obs, s, b)
        if best_ll is None or ll > best_ll:
            best_b, best_ll = b, ll
    clamped = frozenset({"b_prime"}) if best_b == 0.0 and (obs.n_obs + obs.n_bg) > 0 else frozenset()
    return ProfileSolution(
        nuisance=NuisanceState(b_prime=best_b),
        log_like=best_ll,
        scan_points=len(candidates),
        clamped=clamped,
    )


def _clamped_names(flags: int, with_ssim: bool = False) -> frozenset[str]:
    names = set()
    if flags & FLAG_B_CLAMPED:
        names.add("b_prime")
    if flags & FLAG_ALPHA_CLAMPED:
        names.add("alpha_off" if not with_ssim else "alpha_on")
    if with_ssim and flags & FLAG_SSIM_CLAMPED:
        names.add("s_sim_prime")
    return frozenset(names)


def profile_onoff_sys(obs: OnOffObservation, s: float, n_scan: int = 601) -> ProfileSolution:
    """Best (b, alpha_on, alpha_off) for the zone-systematics likelihood at fixed s.

    Scans alpha_on, solving the efficiency identity
    ``alpha_on (1 - alpha_on) + alpha_off (1 - alpha_off) = 0`` for alpha_off
    (both roots tried, negatives clamped) and the background quadratic for b
    at every point.
    """
    if obs.sigma <= 0:
        raise DomainError("profiling requires sigma > 0; use profile_b_onoff instead")
    kern = _backend.get_backend()
    a_on, a_off, b, ll, n_eval, flags = kern.profile_onoff_sys(
        obs.n_obs, obs.n_bg, obs.tau, obs.sigma, s, n_scan
    )
    return ProfileSolution(
        nuisance=NuisanceState(b_prime=b, alpha_on=a_on, alpha_off=a_off),
        log_like=ll,
        scan_points=n_eval,
        clamped=_clamped_names(flags),
        at_boundary=bool(flags & FLAG_BOUNDARY),
    )


def profile_flux_onoff_sys(
    obs: OnOffObservation, f: float, calib: FluxCalibration, n_scan: int = 601
) -> ProfileSolution:
    """Best (b, alpha_on, alpha_off, s_sim') for the on/off flux likelihood.

    Scans alpha_off; per point the off-zone stationarity gives b directly,
    the efficiency identity gives alpha_on, and the simulated-count slice is
    maximized by its own quadratic root.  Negative solutions are zeroed.
    """
    if obs.sigma <= 0:
        raise DomainError("profiling requires sigma > 0")
    if calib.sigma_sim <= 0:
        raise DomainError("profiling requires sigma_sim > 0")
    kern = _backend.get_backend()
    a_on, a_off, b, sp, ll, n_eval, flags = kern.profile_flux_onoff_sys(
        obs.n_obs, obs.n_bg, obs.tau, obs.sigma, f, calib.f_sim, calib.s_sim, calib.sigma_sim, n_scan
    )
    return ProfileSolution(
        nuisance=NuisanceState(b_prime=b, alpha_on=a_on, alpha_off=a_off, s_sim_prime=sp),
        log_like=ll,
        scan_points=n_eval,
        clamped=_clamped_names(flags, with_ssim=True),
        at_boundary=bool(flags & FLAG_BOUNDARY),
    )


def profile_flux_known_bkg(
    obs: CountingObservation,
    f: float,
    model: KnownBackgroundModel,
    calib: FluxCalibration,
) -> ProfileSolution:
    """Best (b', s_sim') for the known-background flux likelihood at fixed f.

    Eliminating s_sim' through the coupled stationarity conditions leaves a
    quadratic in b'; interior solutions compete against the clamped edges
    (b' = 0, s_sim' = 0 and the corner).
    """
    if model.sigma_b <= 0 or calib.sigma_sim <= 0:
        raise DomainError("profiling requires sigma_b > 0 and sigma_sim > 0")
    n = obs.n_obs
    b, vb = model.b, model.sigma_b**2
    ssim, vs = calib.s_sim, calib.sigma_sim**2
    k = f / calib.f_sim

    candidates: list[tuple[float, float, bool]] = []
    if k == 0.0:
        inner = profile_b_known_bkg(obs, 0.0, model)
        candidates.append((inner.nuisance.b_prime, ssim, "b_prime" in inner.clamped))
    else:
        # interior: quadratic in b' after eliminating s_sim'
        qa = k * k * vs + vb
        qb = -2.0 * b * k * k * vs - b * vb + k * k * vb * vs + k * ssim * vb + vb * vb
        qc = (
            b * b * k * k * vs
            - b * k * k * vb * vs
            - b * k * ssim * vb
            + k * ssim * vb * vb
            - n * vb * vb
        )
        for bp in solve_quadratic(qa, qb, qc):
            sp = ssim + k * vs * (bp - b) / vb
            if bp >= 0.0 and sp >= 0.0:
                candidates.append((bp, sp, False))
        # edge s_sim' = 0: background profiles alone
        inner = profile_b_known_bkg(obs, 0.0, model)
        candidates.append((inner.nuisance.b_prime, 0.0, True))
        # edge b' = 0: simulated-count slice alone (larger quadratic root)
        roots = solve_quadratic(k, k * k * vs - k * ssim, -k * n * vs)
        sp0 = max([r for r in roots if r >= 0.0], default=0.0)
        candidates.append((0.0, sp0, True))
        candidates.append((0.0, 0.0, True))

    best = None
    for bp, sp, was_edge in candidates:
        ll = log_flux_known_bkg(obs, NuisanceState(b_prime=bp, s_sim_prime=sp), f, model, calib)
        if best is None or ll > best[0]:
            best = (ll, bp, sp, was_edge)
    ll, bp, sp, was_edge = best
    clamped = set()
    if was_edge and bp == 0.0:
        clamped.add("b_prime")
    if was_edge and sp == 0.0:
        clamped.add("s_sim_prime")
    return ProfileSolution(
        nuisance=NuisanceState(b_prime=bp, s_sim_prime=sp),
        log_like=ll,
        scan_points=len(candidates),
        clamped=frozenset(clamped),
    )
