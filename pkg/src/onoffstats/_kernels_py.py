"""NumPy implementation of the nuisance-scan kernels.

These are the hot inner loops of the package: profiling the on/off
likelihood with zone systematics at fixed signal (or flux) by scanning one
efficiency scale, solving the stationarity quadratics for the remaining
nuisances at every scan point, and refining the scan maximum.  A compiled
twin with the same contract lives in ``_kernels_cy.pyx``; import selection
happens in :mod:`onoffstats._backend`.

All functions return plain floats/ints and never raise on unphysical
candidates; infeasible points simply evaluate to -inf.

Flag bits returned by the profile functions:
  1  scan maximum stuck at the range edge even after widening
  2  background clamped to zero
  4  efficiency-scale root clamped to zero
  8  simulated-count solution clamped to zero
  16 scan range was widened once
"""

from __future__ import annotations

import math

import numpy as np

from .roots import golden_section_max

BACKEND = "python"

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

FLAG_BOUNDARY = 1
FLAG_B_CLAMPED = 2
FLAG_ALPHA_CLAMPED = 4
FLAG_SSIM_CLAMPED = 8
FLAG_WIDENED = 16

_ALPHA_FLOOR = 1e-6


def _log_poisson(n: float, mean: float) -> float:
    if mean > 0.0:
        return n * math.log(mean) - mean - math.lgamma(n + 1.0)
    if mean == 0.0:
        return 0.0 if n == 0 else -math.inf
    return -math.inf


def _log_poisson_vec(n: float, mean: np.ndarray) -> np.ndarray:
    out = np.full(mean.shape, -np.inf)
    pos = mean > 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[pos] = n * np.log(mean[pos]) - mean[pos] - math.lgamma(n + 1.0)
    if n == 0:
        out[mean == 0.0] = 0.0
    return out


def _log_gauss_pull(delta_over_sigma, sigma: float):
    return -0.5 * delta_over_sigma * delta_over_sigma - math.log(sigma) - _LOG_SQRT_2PI


# ---------------------------------------------------------------------------
# on/off with zone systematics, parameter of interest = signal counts


def _onoff_sys_candidates(n_on, n_off, tau, sigma, s, a_on):
    """Per scan point: alpha_off branches and b roots, all vectorized.

    Returns (loglike, a_off, b) arrays of shape (len(a_on), 4); infeasible
    candidates carry -inf.
    """
    a_on = np.asarray(a_on, dtype=float)
    m = a_on.shape[0]
    disc = 2.0 - (2.0 * a_on - 1.0) ** 2
    valid = disc >= 0.0
    sq = np.sqrt(np.where(valid, disc, 0.0))
    a_off_b = np.stack([(1.0 + sq) / 2.0, (1.0 - sq) / 2.0], axis=1)
    a_off_b = np.maximum(a_off_b, 0.0)

    ll = np.full((m, 4), -np.inf)
    a_off_out = np.zeros((m, 4))
    b_out = np.zeros((m, 4))

    pull_on = _log_gauss_pull((a_on - 1.0) / sigma, sigma)
    s_over = s / a_on

    for branch in range(2):
        a_off = a_off_b[:, branch]
        pull_off = _log_gauss_pull((a_off - 1.0) / sigma, sigma)
        A = a_on + a_off * tau
        B = -(n_on + n_off - s_over * A)
        C = -s_over * n_off
        # stable quadratic: q = -(B + sign(B) sqrt(B^2-4AC)) / 2
        disc2 = B * B - 4.0 * A * C
        sq2 = np.sqrt(np.maximum(disc2, 0.0))
        q = -0.5 * (B + np.where(B >= 0.0, sq2, -sq2))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = np.where(q != 0.0, q / A, 0.0)
            r2 = np.where(q != 0.0, C / q, 0.0)
        for ri, root in enumerate((r1, r2)):
            col = 2 * branch + ri
            b = np.maximum(root, 0.0)
            mean_on = a_on * b + s
            mean_off = a_off * tau * b
            cand = (
                _log_poisson_vec(n_on, mean_on)
                + _log_poisson_vec(n_off, mean_off)
                + pull_on
                + pull_off
            )
            cand = np.where(valid, cand, -np.inf)
            ll[:, col] = cand
            a_off_out[:, col] = a_off
            b_out[:, col] = b
    return ll, a_off_out, b_out


def _onoff_sys_best_at(n_on, n_off, tau, sigma, s, a_on: float):
    """Scalar version of the per-point candidate maximum."""
    disc = 2.0 - (2.0 * a_on - 1.0) ** 2
    if disc < 0.0 or a_on <= 0.0:
        return -math.inf, 0.0, 0.0
    sq = math.sqrt(disc)
    pull_on = _log_gauss_pull((a_on - 1.0) / sigma, sigma)
    best = (-math.inf, 0.0, 0.0)
    s_over = s / a_on
    for a_off in ((1.0 + sq) / 2.0, (1.0 - sq) / 2.0):
        if a_off < 0.0:
            a_off = 0.0
        pull_off = _log_gauss_pull((a_off - 1.0) / sigma, sigma)
        A = a_on + a_off * tau
        B = -(n_on + n_off - s_over * A)
        C = -s_over * n_off
        disc2 = B * B - 4.0 * A * C
        sq2 = math.sqrt(disc2) if disc2 > 0.0 else 0.0
        q = -0.5 * (B + math.copysign(sq2, B))
        roots = (q / A if q != 0.0 else 0.0, C / q if q != 0.0 else 0.0)
        for root in roots:
            b = root if root > 0.0 else 0.0
            ll = (
                _log_poisson(n_on, a_on * b + s)
                + _log_poisson(n_off, a_off * tau * b)
                + pull_on
                + pull_off
            )
            if ll > best[0]:
                best = (ll, a_off, b)
    return best


def profile_onoff_sys(n_on, n_off, tau, sigma, s, n_scan=601):
    """Maximize the zone-systematics on/off likelihood over nuisances at fixed s.

    Returns (a_on, a_off, b, loglike, n_eval, flags).
    """
    flags = 0
    n_eval = 0
    half_width = 3.0 * sigma
    for attempt in range(2):
        lo = max(_ALPHA_FLOOR, 1.0 - half_width)
        hi = 1.0 + half_width
        a_grid = np.linspace(lo, hi, n_scan)
        ll, a_off_m, b_m = _onoff_sys_candidates(n_on, n_off, tau, sigma, s, a_grid)
        n_eval += 4 * n_scan
        flat = int(np.argmax(ll))
        i, j = divmod(flat, 4)
        if 0 < i < n_scan - 1:
            break
        if attempt == 0:
            half_width = 5.0 * sigma
            flags |= FLAG_WIDENED
        else:
            flags |= FLAG_BOUNDARY
    step = (hi - lo) / (n_scan - 1)
    r_lo = max(lo, a_grid[i] - step)
    r_hi = min(hi, a_grid[i] + step)

    def g(a):
        return _onoff_sys_best_at(n_on, n_off, tau, sigma, s, a)[0]

    a_best, ll_best, used = golden_section_max(g, r_lo, r_hi, tol=max(1e-12, sigma * 1e-9))
    n_eval += 2 * used
    if ll_best >= ll[i, j]:
        ll_fin, a_off_fin, b_fin = _onoff_sys_best_at(n_on, n_off, tau, sigma, s, a_best)
        a_on_fin = a_best
    else:
        ll_fin, a_off_fin, b_fin = ll[i, j], a_off_m[i, j], b_m[i, j]
        a_on_fin = a_grid[i]
    if b_fin == 0.0 and (n_on + n_off) > 0:
        flags |= FLAG_B_CLAMPED
    if a_off_fin == 0.0:
        flags |= FLAG_ALPHA_CLAMPED
    return a_on_fin, a_off_fin, b_fin, ll_fin, n_eval, flags


def profile_onoff_sys_grid(n_on, n_off, tau, sigma, s_values, n_scan=601):
    """Profiled log-likelihood over an array of signal values.

    Returns (loglike array, total evaluations, number of boundary-stuck points).
    """
    s_values = np.asarray(s_values, dtype=float)
    out = np.empty(s_values.shape[0])
    n_eval = 0
    n_boundary = 0
    for idx in range(s_values.shape[0]):
        _, _, _, ll, used, flags = profile_onoff_sys(
            n_on, n_off, tau, sigma, float(s_values[idx]), n_scan
        )
        out[idx] = ll
        n_eval += used
        if flags & FLAG_BOUNDARY:
            n_boundary += 1
    return out, n_eval, n_boundary


# ---------------------------------------------------------------------------
# on/off with zone systematics, parameter of interest = source flux


def _flux_best_at(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_off: float):
    """Best (loglike, a_on, b, s_sim') over identity branches at fixed alpha_off."""
    if a_off <= 0.0:
        return -math.inf, 0.0, 0.0, 0.0
    disc = 2.0 - (2.0 * a_off - 1.0) ** 2
    if disc < 0.0:
        return -math.inf, 0.0, 0.0, 0.0
    b = (n_off / a_off - (a_off - 1.0) / (sigma * sigma)) / tau
    if b < 0.0:
        b = 0.0
    sq = math.sqrt(disc)
    pull_off = _log_gauss_pull((a_off - 1.0) / sigma, sigma)
    k = f / f_sim
    best = (-math.inf, 0.0, 0.0, 0.0)
    for a_on in ((1.0 + sq) / 2.0, (1.0 - sq) / 2.0):
        if a_on < 0.0:
            a_on = 0.0
        c = a_on * b
        if k == 0.0:
            sp = s_sim
        else:
            # stationary point of the concave 1-D slice: larger quadratic root
            A = k
            B = c - k * s_sim + k * k * sigma_sim * sigma_sim
            C = c * k * sigma_sim * sigma_sim - c * s_sim - k * n_on * sigma_sim * sigma_sim
            disc2 = B * B - 4.0 * A * C
            sq2 = math.sqrt(disc2) if disc2 > 0.0 else 0.0
            q = -0.5 * (B + math.copysign(sq2, B))
            sp = q / A if q != 0.0 else 0.0
            alt = C / q if q != 0.0 else 0.0
            if alt > sp:
                sp = alt
            if sp < 0.0:
                sp = 0.0
        mean_on = c + k * sp
        ll = (
            _log_poisson(n_on, mean_on)
            + _log_poisson(n_off, a_off * tau * b)
            + _log_gauss_pull((a_on - 1.0) / sigma, sigma)
            + pull_off
            + _log_gauss_pull((sp - s_sim) / sigma_sim, sigma_sim)
        )
        if ll > best[0]:
            best = (ll, a_on, b, sp)
    return best


def _flux_scan_values(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_off):
    """Path log-likelihood over an alpha_off grid, vectorized."""
    a_off = np.asarray(a_off, dtype=float)
    disc = 2.0 - (2.0 * a_off - 1.0) ** 2
    valid = (disc >= 0.0) & (a_off > 0.0)
    safe = np.where(a_off > 0.0, a_off, 1.0)
    b = np.maximum((n_off / safe - (a_off - 1.0) / (sigma * sigma)) / tau, 0.0)
    sq = np.sqrt(np.where(valid, disc, 0.0))
    pull_off = _log_gauss_pull((a_off - 1.0) / sigma, sigma)
    k = f / f_sim
    best = np.full(a_off.shape, -np.inf)
    for branch in range(2):
        a_on = np.maximum((1.0 + sq) / 2.0 if branch == 0 else (1.0 - sq) / 2.0, 0.0)
        c = a_on * b
        if k == 0.0:
            sp = np.full(a_off.shape, s_sim)
        else:
            B = c - k * s_sim + k * k * sigma_sim * sigma_sim
            C = c * k * sigma_sim * sigma_sim - c * s_sim - k * n_on * sigma_sim * sigma_sim
            disc2 = B * B - 4.0 * k * C
            sq2 = np.sqrt(np.maximum(disc2, 0.0))
            q = -0.5 * (B + np.where(B >= 0.0, sq2, -sq2))
            with np.errstate(divide="ignore", invalid="ignore"):
                sp = np.maximum(
                    np.where(q != 0.0, q / k, 0.0), np.where(q != 0.0, C / q, 0.0)
                )
            sp = np.maximum(sp, 0.0)
        cand = (
            _log_poisson_vec(n_on, c + k * sp)
            + _log_poisson_vec(n_off, a_off * tau * b)
            + _log_gauss_pull((a_on - 1.0) / sigma, sigma)
            + pull_off
            + _log_gauss_pull((sp - s_sim) / sigma_sim, sigma_sim)
        )
        best = np.maximum(best, np.where(valid, cand, -np.inf))
    return best


def _flux_stationarity_residual(n_on, tau, sigma, f, f_sim, state):
    """Residual of the on-zone efficiency derivative at a path state."""
    _, a_on, b, sp = state
    if b <= 0.0:
        return 0.0
    mu_on = a_on * b + (f / f_sim) * sp
    if mu_on <= 0.0:
        return 0.0
    return (n_on / mu_on - 1.0) * b - (a_on - 1.0) / (sigma * sigma)


def _flux_polish(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_off, lo, hi):
    """Secant root of the leftover stationarity residual along the scan path.

    The likelihood is too flat near the optimum to pin the scan variable
    beyond ~1e-8 by value comparisons; driving the residual itself to zero
    recovers full stationarity.
    """
    def res(a):
        return _flux_stationarity_residual(
            n_on, tau, sigma, f, f_sim,
            _flux_best_at(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a),
        )

    a0, a1 = a_off, min(hi, max(lo, a_off + 1e-7))
    r0, r1 = res(a0), res(a1)
    for _ in range(20):
        if r1 == r0 or abs(r1) < 1e-10:
            break
        a2 = a1 - r1 * (a1 - a0) / (r1 - r0)
        if not lo <= a2 <= hi:
            break
        a0, r0, a1, r1 = a1, r1, a2, res(a2)
    return a1 if abs(r1) < abs(res(a_off)) else a_off


def profile_flux_onoff_sys(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, n_scan=601):
    """Maximize the on/off flux likelihood over nuisances at fixed flux f.

    Returns (a_on, a_off, b, s_sim_prime, loglike, n_eval, flags).
    """
    flags = 0
    n_eval = 0
    half_width = 3.0 * sigma
    for attempt in range(2):
        lo = max(_ALPHA_FLOOR, 1.0 - half_width)
        hi = 1.0 + half_width
        a_grid = np.linspace(lo, hi, n_scan)
        vals = _flux_scan_values(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_grid)
        n_eval += 2 * n_scan
        i = int(np.argmax(vals))
        if 0 < i < n_scan - 1:
            break
        if attempt == 0:
            half_width = 5.0 * sigma
            flags |= FLAG_WIDENED
        else:
            flags |= FLAG_BOUNDARY
    step = (hi - lo) / (n_scan - 1)
    r_lo = max(lo, a_grid[i] - step)
    r_hi = min(hi, a_grid[i] + step)

    def g(a):
        return _flux_best_at(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a)[0]

    a_best, ll_best, used = golden_section_max(g, r_lo, r_hi, tol=max(1e-12, sigma * 1e-9))
    n_eval += 2 * used
    if ll_best >= vals[i]:
        a_off_fin = a_best
    else:
        a_off_fin = float(a_grid[i])
    state = _flux_best_at(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_off_fin)
    if state[2] > 0.0 and not (flags & FLAG_BOUNDARY):
        polished = _flux_polish(
            n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, a_off_fin, lo, hi
        )
        n_eval += 2 * 22
        cand = _flux_best_at(n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, polished)
        if cand[0] >= state[0] - 1e-9:
            a_off_fin, state = polished, cand
    ll_fin, a_on_fin, b_fin, sp_fin = state
    if b_fin == 0.0 and (n_on + n_off) > 0:
        flags |= FLAG_B_CLAMPED
    if a_on_fin == 0.0:
        flags |= FLAG_ALPHA_CLAMPED
    if sp_fin == 0.0:
        flags |= FLAG_SSIM_CLAMPED
    return a_on_fin, a_off_fin, b_fin, sp_fin, ll_fin, n_eval, flags


def profile_flux_onoff_sys_grid(
    n_on, n_off, tau, sigma, f_values, f_sim, s_sim, sigma_sim, n_scan=601
):
    """Profiled flux log-likelihood over an array of flux values."""
    f_values = np.asarray(f_values, dtype=float)
    out = np.empty(f_values.shape[0])
    n_eval = 0
    n_boundary = 0
    for idx in range(f_values.shape[0]):
        res = profile_flux_onoff_sys(
            n_on, n_off, tau, sigma, float(f_values[idx]), f_sim, s_sim, sigma_sim, n_scan
        )
        out[idx] = res[4]
        n_eval += res[5]
        if res[6] & FLAG_BOUNDARY:
            n_boundary += 1
    return out, n_eval, n_boundary
