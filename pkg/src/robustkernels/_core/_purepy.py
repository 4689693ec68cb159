"""Pure NumPy fallback for the compiled kernel core.

Mirrors ``_native.pyx`` function for function.  Used when the extension is
not built, or when ``ROBUSTKERNELS_BACKEND=python`` forces it (handy for
debugging and for the backend-equivalence tests).
"""

import numpy as np

from . import codes

_OVERFLOW_RATIO = 1e300


def _log1p_ratio(r, s):
    x = r / s
    big = x > _OVERFLOW_RATIO
    if np.any(big):
        x = np.where(big, 1.0, x)
        return np.where(big, np.log(r) - np.log(s), np.log1p(x))
    return np.log1p(x)


def _sigma_raw(kind, r, c, p1, p2):
    if kind == codes.LINEAR_TRUNCATED:
        return np.minimum(r, c)
    if kind == codes.GEMAN_MCCLURE:
        return c - c / (1.0 + r / c)
    if kind == codes.WELSCH:
        return -c * np.expm1(-r / c)
    if kind == codes.CAUCHY:
        return c * _log1p_ratio(r, c)
    if kind == codes.CHARBONNIER:
        x = r / c
        big = x > _OVERFLOW_RATIO
        if np.any(big):
            safe = np.where(big, 1.0, x)
            return np.where(
                big,
                2.0 * (np.sqrt(c) * np.sqrt(r) - c),
                2.0 * c * (safe / (np.sqrt(1.0 + safe) + 1.0)),
            )
        return 2.0 * c * (x / (np.sqrt(1.0 + x) + 1.0))
    if kind == codes.BARRON:
        b = abs(p1 - 2.0)
        return (c * b / p1) * np.expm1(0.5 * p1 * _log1p_ratio(r, c * b))
    if kind == codes.MEAN_ERROR:
        return -np.expm1(-r)
    if kind == codes.GCE:
        return -np.expm1(-p1 * r) / p1
    if kind == codes.SCE:
        return (r + p1 * np.expm1(-r)) / (1.0 + p1)
    if kind == codes.TAYLOR_CE:
        g = -np.expm1(-r)
        acc = np.zeros_like(g)
        term = np.ones_like(g)
        for m in range(1, int(p1) + 1):
            term = term * g
            acc = acc + term / m
        return acc
    if kind == codes.AGCE:
        v = np.exp(-r)
        return ((p2 + 1.0) ** p1 - (p2 + v) ** p1) / (p1 * p2 ** (p1 - 1.0))
    if kind == codes.AUL:
        v = np.exp(-r)
        return ((p2 - v) ** p1 - (p2 - 1.0) ** p1) / (p1 * p2 ** (p1 - 1.0))
    if kind == codes.AEL:
        v = np.exp(-r)
        return p1 * np.exp((1.0 - v) / p1)
    raise ValueError(f"unknown kernel code {kind}")


def _sigma_prime_raw(kind, r, c, p1, p2):
    if kind == codes.LINEAR_TRUNCATED:
        return (r <= c).astype(np.float64)
    if kind == codes.GEMAN_MCCLURE:
        t = 1.0 / (1.0 + r / c)
        return t * t
    if kind == codes.WELSCH:
        return np.exp(-r / c)
    if kind == codes.CAUCHY:
        return 1.0 / (1.0 + r / c)
    if kind == codes.CHARBONNIER:
        return 1.0 / np.sqrt(1.0 + r / c)
    if kind == codes.BARRON:
        b = abs(p1 - 2.0)
        return 0.5 * np.exp((0.5 * p1 - 1.0) * _log1p_ratio(r, c * b))
    if kind == codes.MEAN_ERROR:
        return np.exp(-r)
    if kind == codes.GCE:
        return np.exp(-p1 * r)
    if kind == codes.SCE:
        return (1.0 - p1 * np.exp(-r)) / (1.0 + p1)
    if kind == codes.TAYLOR_CE:
        g = -np.expm1(-r)
        return 1.0 - g ** int(p1)
    if kind == codes.AGCE:
        v = np.exp(-r)
        return v * ((p2 + v) / p2) ** (p1 - 1.0)
    if kind == codes.AUL:
        v = np.exp(-r)
        return v * ((p2 - v) / p2) ** (p1 - 1.0)
    if kind == codes.AEL:
        v = np.exp(-r)
        return v * np.exp((1.0 - v) / p1)
    raise ValueError(f"unknown kernel code {kind}")


def sigma(kind, r, c, p1, p2, z):
    out = _sigma_raw(kind, np.asarray(r, dtype=np.float64), c, p1, p2) / z
    return np.asarray(out, dtype=np.float64)


def sigma_prime(kind, r, c, p1, p2, z):
    out = _sigma_prime_raw(kind, np.asarray(r, dtype=np.float64), c, p1, p2) / z
    return np.asarray(out, dtype=np.float64)


def mean_weight(kind, losses, c, p1, p2, z):
    w = _sigma_prime_raw(kind, np.asarray(losses, dtype=np.float64), c, p1, p2)
    # plain accumulation to match the compiled core's summation order
    return float(np.add.reduce(w)) / (z * len(w))


def solve_scale(kind, losses, zeta, lo, hi, tol, max_iter, p1, p2, z):
    losses = np.asarray(losses, dtype=np.float64)
    llo, lhi = np.log(lo), np.log(hi)
    best = (hi, 0.0, np.inf)
    it = 0
    while it < max_iter:
        it += 1
        mid = float(np.exp(0.5 * (llo + lhi)))
        m = mean_weight(kind, losses, mid, p1, p2, z)
        resid = abs(m - zeta)
        if resid < best[2]:
            best = (mid, m, resid)
        if resid <= tol:
            break
        if m < zeta:
            llo = np.log(mid)
        else:
            lhi = np.log(mid)
    return best[0], best[1], best[2], it
