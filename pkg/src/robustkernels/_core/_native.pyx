# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled evaluation core for the robust loss kernels.

Scalar kernel math lives here as branch-free-ish inline C; the public entry
points operate on contiguous float64 arrays and release the GIL.  The pure
NumPy twin of this module is ``robustkernels._core._purepy``; both must keep
identical semantics (same kind codes, same parameter packing, same guards).

Kind codes and the (p1, p2) parameter packing are defined in
``robustkernels._core.codes`` and must never be reordered.
"""

from libc.math cimport INFINITY, exp, expm1, fabs, log, log1p, pow, sqrt

import numpy as np

DEF OVERFLOW_RATIO = 1e300


cdef inline double _log1p_ratio(double r, double s) nogil:
    # log(1 + r/s) without overflowing the intermediate ratio.
    cdef double x = r / s
    if x > OVERFLOW_RATIO:
        return log(r) - log(s)
    return log1p(x)


cdef inline double _sigma_raw(int kind, double r, double c, double p1, double p2) nogil:
    cdef double x, b, v, g, term, acc
    cdef int m, t
    if kind == 0:   # linear truncated
        return r if r < c else c
    elif kind == 1:  # Geman-McClure
        x = r / c
        return c - c / (1.0 + x)
    elif kind == 2:  # Welsch-Leclerc
        return -c * expm1(-r / c)
    elif kind == 3:  # Cauchy-Lorentzian
        return c * _log1p_ratio(r, c)
    elif kind == 4:  # Charbonnier
        x = r / c
        if x > OVERFLOW_RATIO:
            return 2.0 * (sqrt(c) * sqrt(r) - c)
        return 2.0 * c * (x / (sqrt(1.0 + x) + 1.0))
    elif kind == 5:  # Barron
        b = fabs(p1 - 2.0)
        return (c * b / p1) * expm1(0.5 * p1 * _log1p_ratio(r, c * b))
    elif kind == 6:  # mean error
        return -expm1(-r)
    elif kind == 7:  # generalized cross-entropy
        return -expm1(-p1 * r) / p1
    elif kind == 8:  # symmetric cross-entropy
        return (r + p1 * expm1(-r)) / (1.0 + p1)
    elif kind == 9:  # Taylor cross-entropy
        g = -expm1(-r)
        t = <int> p1
        acc = 0.0
        term = 1.0
        for m in range(1, t + 1):
            term *= g
            acc += term / m
        return acc
    elif kind == 10:  # asymmetric generalized CE; p1=q, p2=a
        v = exp(-r)
        return (pow(p2 + 1.0, p1) - pow(p2 + v, p1)) / (p1 * pow(p2, p1 - 1.0))
    elif kind == 11:  # asymmetric unhinged; p1=p, p2=a
        v = exp(-r)
        return (pow(p2 - v, p1) - pow(p2 - 1.0, p1)) / (p1 * pow(p2, p1 - 1.0))
    else:            # 12: asymmetric exponential; p1=a
        v = exp(-r)
        return p1 * exp((1.0 - v) / p1)


cdef inline double _sigma_prime_raw(int kind, double r, double c, double p1, double p2) nogil:
    cdef double x, b, v, g, t
    cdef int m, ti
    if kind == 0:
        return 1.0 if r <= c else 0.0
    elif kind == 1:
        x = r / c
        t = 1.0 / (1.0 + x)
        return t * t
    elif kind == 2:
        return exp(-r / c)
    elif kind == 3:
        return 1.0 / (1.0 + r / c)
    elif kind == 4:
        return 1.0 / sqrt(1.0 + r / c)
    elif kind == 5:
        b = fabs(p1 - 2.0)
        return 0.5 * exp((0.5 * p1 - 1.0) * _log1p_ratio(r, c * b))
    elif kind == 6:
        return exp(-r)
    elif kind == 7:
        return exp(-p1 * r)
    elif kind == 8:
        return (1.0 - p1 * exp(-r)) / (1.0 + p1)
    elif kind == 9:
        g = -expm1(-r)
        ti = <int> p1
        t = 1.0
        for m in range(ti):
            t *= g
        return 1.0 - t
    elif kind == 10:
        v = exp(-r)
        return v * pow((p2 + v) / p2, p1 - 1.0)
    elif kind == 11:
        v = exp(-r)
        return v * pow((p2 - v) / p2, p1 - 1.0)
    else:
        v = exp(-r)
        return v * exp((1.0 - v) / p1)


def sigma(int kind, double[::1] r, double c, double p1, double p2, double z):
    """Kernel value sigma_c(r) / z over an array (z is the normalization divisor)."""
    cdef Py_ssize_t i, n = r.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _sigma_raw(kind, r[i], c, p1, p2) / z
    return out_arr


def sigma_prime(int kind, double[::1] r, double c, double p1, double p2, double z):
    """Kernel derivative sigma'_c(r) / z over an array."""
    cdef Py_ssize_t i, n = r.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for i in range(n):
            out[i] = _sigma_prime_raw(kind, r[i], c, p1, p2) / z
    return out_arr


cdef double _mean_weight(int kind, double[::1] losses, double c,
                         double p1, double p2, double z) nogil:
    cdef Py_ssize_t i, n = losses.shape[0]
    cdef double acc = 0.0
    for i in range(n):
        acc += _sigma_prime_raw(kind, losses[i], c, p1, p2)
    return acc / (z * n)


def mean_weight(int kind, double[::1] losses, double c, double p1, double p2, double z):
    """(1/n) sum_i sigma'_c(losses_i) -- the quantity the scale solve targets."""
    cdef double res
    with nogil:
        res = _mean_weight(kind, losses, c, p1, p2, z)
    return res


def solve_scale(int kind, double[::1] losses, double zeta, double lo, double hi,
                double tol, int max_iter, double p1, double p2, double z):
    """Bisect for c in [lo, hi] such that mean sigma'_c(losses) == zeta.

    Assumes the mean weight is nondecreasing in c on the bracket (the caller
    verifies the endpoints).  Bisection runs in log-space; returns
    (c, mean_weight, residual, iterations) for the best midpoint seen.
    """
    cdef double llo = log(lo), lhi = log(hi)
    cdef double mid, m, resid
    cdef double best_c = hi, best_m = 0.0, best_resid = INFINITY
    cdef int it = 0
    with nogil:
        while it < max_iter:
            it += 1
            mid = exp(0.5 * (llo + lhi))
            m = _mean_weight(kind, losses, mid, p1, p2, z)
            resid = fabs(m - zeta)
            if resid < best_resid:
                best_resid = resid
                best_c = mid
                best_m = m
            if resid <= tol:
                break
            if m < zeta:
                llo = log(mid)
            else:
                lhi = log(mid)
    return best_c, best_m, best_resid, it
