# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled nuisance-scan kernels.

Same contract as ``_kernels_py`` (see its docstring for the flag bits);
this is the hot-loop twin selected automatically when available.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, copysign, lgamma, log, sqrt

cnp.import_array()

BACKEND = "cython"

FLAG_BOUNDARY = 1
FLAG_B_CLAMPED = 2
FLAG_ALPHA_CLAMPED = 4
FLAG_SSIM_CLAMPED = 8
FLAG_WIDENED = 16

cdef int C_BOUNDARY = 1
cdef int C_B_CLAMPED = 2
cdef int C_ALPHA_CLAMPED = 4
cdef int C_SSIM_CLAMPED = 8
cdef int C_WIDENED = 16

cdef double _LOG_SQRT_2PI = 0.9189385332046727
cdef double _GOLDEN = 0.6180339887498949
cdef double _ALPHA_FLOOR = 1e-6


cdef inline double _log_poisson(double n, double mean) noexcept nogil:
    if mean > 0.0:
        return n * log(mean) - mean - lgamma(n + 1.0)
    if mean == 0.0:
        return 0.0 if n == 0.0 else -INFINITY
    return -INFINITY


cdef inline double _log_gauss_pull(double z, double log_sigma) noexcept nogil:
    return -0.5 * z * z - log_sigma - _LOG_SQRT_2PI


cdef struct OnOffFit:
    double ll
    double a_off
    double b


cdef OnOffFit _onoff_sys_best_at(double n_on, double n_off, double tau,
                                 double sigma, double log_sigma, double s,
                                 double a_on) noexcept nogil:
    cdef OnOffFit out
    cdef double disc, sq, pull_on, pull_off, s_over, A, B, C, disc2, sq2, q
    cdef double a_off, b, ll, root
    cdef int branch, ri
    out.ll = -INFINITY
    out.a_off = 0.0
    out.b = 0.0
    disc = 2.0 - (2.0 * a_on - 1.0) * (2.0 * a_on - 1.0)
    if disc < 0.0 or a_on <= 0.0:
        return out
    sq = sqrt(disc)
    pull_on = _log_gauss_pull((a_on - 1.0) / sigma, log_sigma)
    s_over = s / a_on
    for branch in range(2):
        a_off = (1.0 + sq) / 2.0 if branch == 0 else (1.0 - sq) / 2.0
        if a_off < 0.0:
            a_off = 0.0
        pull_off = _log_gauss_pull((a_off - 1.0) / sigma, log_sigma)
        A = a_on + a_off * tau
        B = -(n_on + n_off - s_over * A)
        C = -s_over * n_off
        disc2 = B * B - 4.0 * A * C
        sq2 = sqrt(disc2) if disc2 > 0.0 else 0.0
        q = -0.5 * (B + copysign(sq2, B))
        for ri in range(2):
            if q != 0.0:
                root = q / A if ri == 0 else C / q
            else:
                root = 0.0
            b = root if root > 0.0 else 0.0
            ll = (_log_poisson(n_on, a_on * b + s)
                  + _log_poisson(n_off, a_off * tau * b)
                  + pull_on + pull_off)
            if ll > out.ll:
                out.ll = ll
                out.a_off = a_off
                out.b = b
    return out


cdef (double, double, double, double, int, int) _profile_onoff_sys_c(
        double n_on, double n_off, double tau, double sigma, double s,
        int n_scan) noexcept nogil:
    cdef double log_sigma = log(sigma)
    cdef double half_width = 3.0 * sigma
    cdef double lo = 0.0, hi = 0.0, step, a, best_ll, r_lo, r_hi
    cdef double ga, gb, gc, gd, fc, fd, a_fin
    cdef int flags = 0, n_eval = 0, best_i = 0, i, attempt, it
    cdef OnOffFit fit, best_fit, fit_fin

    for attempt in range(2):
        lo = 1.0 - half_width
        if lo < _ALPHA_FLOOR:
            lo = _ALPHA_FLOOR
        hi = 1.0 + half_width
        step = (hi - lo) / (n_scan - 1)
        best_ll = -INFINITY
        best_i = 0
        for i in range(n_scan):
            a = lo + step * i
            fit = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, a)
            n_eval += 4
            if fit.ll > best_ll:
                best_ll = fit.ll
                best_i = i
        if 0 < best_i < n_scan - 1:
            break
        if attempt == 0:
            half_width = 5.0 * sigma
            flags |= C_WIDENED
        else:
            flags |= C_BOUNDARY

    step = (hi - lo) / (n_scan - 1)
    r_lo = lo + step * best_i - step
    if r_lo < lo:
        r_lo = lo
    r_hi = lo + step * best_i + step
    if r_hi > hi:
        r_hi = hi

    # golden-section refinement of the per-point maximum
    cdef double tol = sigma * 1e-9
    if tol < 1e-12:
        tol = 1e-12
    ga = r_lo
    gb = r_hi
    gc = gb - _GOLDEN * (gb - ga)
    gd = ga + _GOLDEN * (gb - ga)
    fc = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, gc).ll
    fd = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, gd).ll
    n_eval += 8
    it = 0
    while (gb - ga) > tol and it < 200:
        if fc >= fd:
            gb = gd
            gd = gc
            fd = fc
            gc = gb - _GOLDEN * (gb - ga)
            fc = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, gc).ll
        else:
            ga = gc
            gc = gd
            fc = fd
            gd = ga + _GOLDEN * (gb - ga)
            fd = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, gd).ll
        n_eval += 4
        it += 1
    a = gc if fc >= fd else gd
    if (fc if fc >= fd else fd) >= best_ll:
        a_fin = a
    else:
        a_fin = lo + step * best_i
    fit_fin = _onoff_sys_best_at(n_on, n_off, tau, sigma, log_sigma, s, a_fin)
    if fit_fin.b == 0.0 and (n_on + n_off) > 0.0:
        flags |= C_B_CLAMPED
    if fit_fin.a_off == 0.0:
        flags |= C_ALPHA_CLAMPED
    return a_fin, fit_fin.a_off, fit_fin.b, fit_fin.ll, n_eval, flags


def profile_onoff_sys(double n_on, double n_off, double tau, double sigma,
                      double s, int n_scan=601):
    """Maximize the zone-systematics on/off likelihood over nuisances at fixed s.

    Returns (a_on, a_off, b, loglike, n_eval, flags).
    """
    cdef double a_on, a_off, b, ll
    cdef int n_eval, flags
    a_on, a_off, b, ll, n_eval, flags = _profile_onoff_sys_c(
        n_on, n_off, tau, sigma, s, n_scan)
    return a_on, a_off, b, ll, n_eval, flags


def profile_onoff_sys_grid(double n_on, double n_off, double tau, double sigma,
                           s_values, int n_scan=601):
    """Profiled log-likelihood over an array of signal values."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sv = np.ascontiguousarray(
        s_values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(sv.shape[0])
    cdef double a_on, a_off, b, ll
    cdef int n_eval = 0, n_boundary = 0, used, flags
    cdef Py_ssize_t idx
    for idx in range(sv.shape[0]):
        a_on, a_off, b, ll, used, flags = _profile_onoff_sys_c(
            n_on, n_off, tau, sigma, sv[idx], n_scan)
        out[idx] = ll
        n_eval += used
        if flags & C_BOUNDARY:
            n_boundary += 1
    return out, n_eval, n_boundary


cdef struct FluxFit:
    double ll
    double a_on
    double b
    double sp


cdef FluxFit _flux_best_at(double n_on, double n_off, double tau, double sigma,
                           double log_sigma, double f, double f_sim,
                           double s_sim, double sigma_sim, double log_sigma_sim,
                           double a_off) noexcept nogil:
    cdef FluxFit out
    cdef double disc, sq, b, pull_off, k, c, A, B, C, disc2, sq2, q, sp, alt, ll, a_on
    cdef int branch
    out.ll = -INFINITY
    out.a_on = 0.0
    out.b = 0.0
    out.sp = 0.0
    if a_off <= 0.0:
        return out
    disc = 2.0 - (2.0 * a_off - 1.0) * (2.0 * a_off - 1.0)
    if disc < 0.0:
        return out
    b = (n_off / a_off - (a_off - 1.0) / (sigma * sigma)) / tau
    if b < 0.0:
        b = 0.0
    sq = sqrt(disc)
    pull_off = _log_gauss_pull((a_off - 1.0) / sigma, log_sigma)
    k = f / f_sim
    for branch in range(2):
        a_on = (1.0 + sq) / 2.0 if branch == 0 else (1.0 - sq) / 2.0
        if a_on < 0.0:
            a_on = 0.0
        c = a_on * b
        if k == 0.0:
            sp = s_sim
        else:
            A = k
            B = c - k * s_sim + k * k * sigma_sim * sigma_sim
            C = c * k * sigma_sim * sigma_sim - c * s_sim - k * n_on * sigma_sim * sigma_sim
            disc2 = B * B - 4.0 * A * C
            sq2 = sqrt(disc2) if disc2 > 0.0 else 0.0
            q = -0.5 * (B + copysign(sq2, B))
            sp = q / A if q != 0.0 else 0.0
            alt = C / q if q != 0.0 else 0.0
            if alt > sp:
                sp = alt
            if sp < 0.0:
                sp = 0.0
        ll = (_log_poisson(n_on, c + k * sp)
              + _log_poisson(n_off, a_off * tau * b)
              + _log_gauss_pull((a_on - 1.0) / sigma, log_sigma)
              + pull_off
              + _log_gauss_pull((sp - s_sim) / sigma_sim, log_sigma_sim))
        if ll > out.ll:
            out.ll = ll
            out.a_on = a_on
            out.b = b
            out.sp = sp
    return out


cdef inline double _flux_residual(double n_on, double n_off, double tau,
                                  double sigma, double log_sigma, double f,
                                  double f_sim, double s_sim, double sigma_sim,
                                  double log_sigma_sim, double a_off) noexcept nogil:
    cdef FluxFit st = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f,
                                    f_sim, s_sim, sigma_sim, log_sigma_sim, a_off)
    cdef double mu_on
    if st.b <= 0.0:
        return 0.0
    mu_on = st.a_on * st.b + (f / f_sim) * st.sp
    if mu_on <= 0.0:
        return 0.0
    return (n_on / mu_on - 1.0) * st.b - (st.a_on - 1.0) / (sigma * sigma)


cdef double _flux_polish(double n_on, double n_off, double tau, double sigma,
                         double log_sigma, double f, double f_sim,
                         double s_sim, double sigma_sim, double log_sigma_sim,
                         double a_off, double lo, double hi) noexcept nogil:
    # secant root of the leftover stationarity residual along the scan path;
    # the likelihood itself is too flat to localize a_off past ~1e-8
    cdef double a0 = a_off, a1, r0, r1, a2, base
    cdef int it
    base = _flux_residual(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                          s_sim, sigma_sim, log_sigma_sim, a_off)
    a1 = a_off + 1e-7
    if a1 > hi:
        a1 = hi
    if a1 < lo:
        a1 = lo
    r0 = base
    r1 = _flux_residual(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                        s_sim, sigma_sim, log_sigma_sim, a1)
    for it in range(20):
        if r1 == r0 or (r1 < 1e-10 and r1 > -1e-10):
            break
        a2 = a1 - r1 * (a1 - a0) / (r1 - r0)
        if a2 < lo or a2 > hi:
            break
        a0 = a1
        r0 = r1
        a1 = a2
        r1 = _flux_residual(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                            s_sim, sigma_sim, log_sigma_sim, a1)
    if (r1 if r1 >= 0.0 else -r1) < (base if base >= 0.0 else -base):
        return a1
    return a_off


cdef (double, double, double, double, double, int, int) _profile_flux_c(
        double n_on, double n_off, double tau, double sigma, double f,
        double f_sim, double s_sim, double sigma_sim, int n_scan) noexcept nogil:
    cdef double log_sigma = log(sigma)
    cdef double log_sigma_sim = log(sigma_sim)
    cdef double half_width = 3.0 * sigma
    cdef double lo = 0.0, hi = 0.0, step, a, best_ll, r_lo, r_hi
    cdef double ga, gb, gc, gd, fc, fd, a_fin, tol
    cdef int flags = 0, n_eval = 0, best_i = 0, i, attempt, it
    cdef FluxFit fit

    for attempt in range(2):
        lo = 1.0 - half_width
        if lo < _ALPHA_FLOOR:
            lo = _ALPHA_FLOOR
        hi = 1.0 + half_width
        step = (hi - lo) / (n_scan - 1)
        best_ll = -INFINITY
        best_i = 0
        for i in range(n_scan):
            a = lo + step * i
            fit = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                                s_sim, sigma_sim, log_sigma_sim, a)
            n_eval += 2
            if fit.ll > best_ll:
                best_ll = fit.ll
                best_i = i
        if 0 < best_i < n_scan - 1:
            break
        if attempt == 0:
            half_width = 5.0 * sigma
            flags |= C_WIDENED
        else:
            flags |= C_BOUNDARY

    step = (hi - lo) / (n_scan - 1)
    r_lo = lo + step * best_i - step
    if r_lo < lo:
        r_lo = lo
    r_hi = lo + step * best_i + step
    if r_hi > hi:
        r_hi = hi

    tol = sigma * 1e-9
    if tol < 1e-12:
        tol = 1e-12
    ga = r_lo
    gb = r_hi
    gc = gb - _GOLDEN * (gb - ga)
    gd = ga + _GOLDEN * (gb - ga)
    fc = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim, s_sim,
                       sigma_sim, log_sigma_sim, gc).ll
    fd = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim, s_sim,
                       sigma_sim, log_sigma_sim, gd).ll
    n_eval += 4
    it = 0
    while (gb - ga) > tol and it < 200:
        if fc >= fd:
            gb = gd
            gd = gc
            fd = fc
            gc = gb - _GOLDEN * (gb - ga)
            fc = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                               s_sim, sigma_sim, log_sigma_sim, gc).ll
        else:
            ga = gc
            gc = gd
            fc = fd
            gd = ga + _GOLDEN * (gb - ga)
            fd = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                               s_sim, sigma_sim, log_sigma_sim, gd).ll
        n_eval += 2
        it += 1
    a = gc if fc >= fd else gd
    if (fc if fc >= fd else fd) >= best_ll:
        a_fin = a
    else:
        a_fin = lo + step * best_i
    fit = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim, s_sim,
                        sigma_sim, log_sigma_sim, a_fin)
    cdef double polished
    cdef FluxFit cand
    if fit.b > 0.0 and not (flags & C_BOUNDARY):
        polished = _flux_polish(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                                s_sim, sigma_sim, log_sigma_sim, a_fin, lo, hi)
        n_eval += 44
        cand = _flux_best_at(n_on, n_off, tau, sigma, log_sigma, f, f_sim,
                             s_sim, sigma_sim, log_sigma_sim, polished)
        if cand.ll >= fit.ll - 1e-9:
            a_fin = polished
            fit = cand
    if fit.b == 0.0 and (n_on + n_off) > 0.0:
        flags |= C_B_CLAMPED
    if fit.a_on == 0.0:
        flags |= C_ALPHA_CLAMPED
    if fit.sp == 0.0:
        flags |= C_SSIM_CLAMPED
    return fit.a_on, a_fin, fit.b, fit.sp, fit.ll, n_eval, flags


def profile_flux_onoff_sys(double n_on, double n_off, double tau, double sigma,
                           double f, double f_sim, double s_sim,
                           double sigma_sim, int n_scan=601):
    """Maximize the on/off flux likelihood over nuisances at fixed flux f.

    Returns (a_on, a_off, b, s_sim_prime, loglike, n_eval, flags).
    """
    cdef double a_on, a_off, b, sp, ll
    cdef int n_eval, flags
    a_on, a_off, b, sp, ll, n_eval, flags = _profile_flux_c(
        n_on, n_off, tau, sigma, f, f_sim, s_sim, sigma_sim, n_scan)
    return a_on, a_off, b, sp, ll, n_eval, flags


def profile_flux_onoff_sys_grid(double n_on, double n_off, double tau,
                                double sigma, f_values, double f_sim,
                                double s_sim, double sigma_sim, int n_scan=601):
    """Profiled flux log-likelihood over an array of flux values."""
    cdef cnp.ndarray[cnp.float64_t, ndim=1] fv = np.ascontiguousarray(
        f_values, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(fv.shape[0])
    cdef double a_on, a_off, b, sp, ll
    cdef int n_eval = 0, n_boundary = 0, used, flags
    cdef Py_ssize_t idx
    for idx in range(fv.shape[0]):
        a_on, a_off, b, sp, ll, used, flags = _profile_flux_c(
            n_on, n_off, tau, sigma, fv[idx], f_sim, s_sim, sigma_sim, n_scan)
        out[idx] = ll
        n_eval += used
        if flags & C_BOUNDARY:
            n_boundary += 1
    return out, n_eval, n_boundary
