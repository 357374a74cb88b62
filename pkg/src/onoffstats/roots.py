"""Stable quadratic roots and golden-section scan refinement.

The stationarity conditions of every profiled likelihood in this package
reduce to quadratics whose coefficients involve counts of a few hundred;
the textbook formula loses digits through cancellation between -B and
sqrt(B^2 - 4AC), so the q-trick from Numerical Recipes is used instead.
"""

from __future__ import annotations

import math

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def solve_quadratic(a: float, b: float, c: float) -> tuple[float, ...]:
    """Real roots of ``a x^2 + b x + c = 0``, computed cancellation-free.

    Returns a tuple of 0, 1 or 2 roots (unordered).  The linear case
    ``a == 0`` is handled; a doubly-degenerate equation (a == b == 0)
    has no roots and returns ().
    """
    if a == 0.0:
        if b == 0.0:
            return ()
        return (-c / b,)
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return ()
    if disc == 0.0:
        return (-b / (2.0 * a),)
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b))
    if q == 0.0:
        # b == 0 and c == 0
        return (0.0, 0.0)
    return (q / a, c / q)


def largest_nonnegative_root(a: float, b: float, c: float) -> float:
    """Largest root >= 0 of the quadratic, or 0.0 if none exists."""
    best = 0.0
    for r in solve_quadratic(a, b, c):
        if r > best:
            best = r
    return best


def golden_section_max(fun, lo: float, hi: float, tol: float, max_iter: int = 200):
    """Golden-section maximization of a unimodal scalar function on [lo, hi].

    Returns ``(x_best, f_best, n_evaluations)``.
    """
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    n_eval = 2
    it = 0
    while (b - a) > tol and it < max_iter:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = fun(d)
        n_eval += 1
        it += 1
    if fc >= fd:
        return c, fc, n_eval
    return d, fd, n_eval
