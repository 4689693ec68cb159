"""Robust loss kernels: a unified family of concave loss-damping functions.

A robust loss kernel ``sigma`` maps a nonnegative per-sample loss ``r`` to a
damped value so that small losses pass through almost unchanged (unit slope
at zero) while large losses saturate (vanishing slope at infinity).  The
derivative ``sigma'`` doubles as a per-sample inlier weight in [0, 1].

Thirteen kernel kinds are implemented; the first six carry a scale ``c`` in
the ``c * sigma(r / c)`` pattern, the remaining seven come from the
noisy-label classification literature and are scale-free (``c`` is accepted
but inert).  ``conformance_check`` measures the three defining conditions
numerically and reports rather than raises, because two families are known
exceptions (see the module-level notes in the README).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ._core import codes, mean_weight, sigma, sigma_prime, solve_scale  # noqa: F401


class ParameterError(ValueError):
    """A kernel parameter is outside its stated domain."""


class DomainError(ValueError):
    """An operation argument is outside its stated domain."""


class UnsupportedKernelError(TypeError):
    """The kernel does not support the requested operation."""


class KernelKind(str, Enum):
    LINEAR_TRUNCATED = "linear_truncated"
    GEMAN_MCCLURE = "geman_mcclure"
    WELSCH = "welsch"
    CAUCHY = "cauchy"
    CHARBONNIER = "charbonnier"
    BARRON = "barron"
    MEAN_ERROR = "mean_error"
    GCE = "gce"
    SCE = "sce"
    TAYLOR_CE = "taylor_ce"
    AGCE = "agce"
    AUL = "aul"
    AEL = "ael"


_KIND_CODE = {
    KernelKind.LINEAR_TRUNCATED: codes.LINEAR_TRUNCATED,
    KernelKind.GEMAN_MCCLURE: codes.GEMAN_MCCLURE,
    KernelKind.WELSCH: codes.WELSCH,
    KernelKind.CAUCHY: codes.CAUCHY,
    KernelKind.CHARBONNIER: codes.CHARBONNIER,
    KernelKind.BARRON: codes.BARRON,
    KernelKind.MEAN_ERROR: codes.MEAN_ERROR,
    KernelKind.GCE: codes.GCE,
    KernelKind.SCE: codes.SCE,
    KernelKind.TAYLOR_CE: codes.TAYLOR_CE,
    KernelKind.AGCE: codes.AGCE,
    KernelKind.AUL: codes.AUL,
    KernelKind.AEL: codes.AEL,
}

# accepted spellings for config / CLI input
_ALIASES = {
    "linear_truncated": KernelKind.LINEAR_TRUNCATED,
    "truncated": KernelKind.LINEAR_TRUNCATED,
    "tl": KernelKind.LINEAR_TRUNCATED,
    "geman_mcclure": KernelKind.GEMAN_MCCLURE,
    "gm": KernelKind.GEMAN_MCCLURE,
    "welsch": KernelKind.WELSCH,
    "welsch_leclerc": KernelKind.WELSCH,
    "cauchy": KernelKind.CAUCHY,
    "cauchy_lorentzian": KernelKind.CAUCHY,
    "charbonnier": KernelKind.CHARBONNIER,
    "barron": KernelKind.BARRON,
    "mean_error": KernelKind.MEAN_ERROR,
    "mae": KernelKind.MEAN_ERROR,
    "gce": KernelKind.GCE,
    "generalized_ce": KernelKind.GCE,
    "sce": KernelKind.SCE,
    "symmetric_ce": KernelKind.SCE,
    "taylor_ce": KernelKind.TAYLOR_CE,
    "tce": KernelKind.TAYLOR_CE,
    "agce": KernelKind.AGCE,
    "asym_generalized_ce": KernelKind.AGCE,
    "aul": KernelKind.AUL,
    "asym_unhinged": KernelKind.AUL,
    "ael": KernelKind.AEL,
    "asym_exponential": KernelKind.AEL,
}

# kinds following the c * sigma(r / c) scaling pattern
SCALED_KINDS = frozenset(
    {
        KernelKind.LINEAR_TRUNCATED,
        KernelKind.GEMAN_MCCLURE,
        KernelKind.WELSCH,
        KernelKind.CAUCHY,
        KernelKind.CHARBONNIER,
        KernelKind.BARRON,
    }
)

# reasonable shape-parameter defaults, used by the CLI conformance table
DEFAULT_SHAPE = {
    KernelKind.BARRON: {"alpha": 1.0},
    KernelKind.GCE: {"q": 0.7},
    KernelKind.SCE: {"A": 1.0},
    KernelKind.TAYLOR_CE: {"t": 2},
    KernelKind.AGCE: {"q": 2.0, "a": 1.0},
    KernelKind.AUL: {"p": 2, "a": 3.0},
    KernelKind.AEL: {"a": 1.5},
}


def _check_q(q, who):
    if q is None:
        raise ParameterError(f"{who}: shape parameter q is required")
    q = float(q)
    if not math.isfinite(q) or q <= 0:
        raise ParameterError(f"{who}: q must be positive, got {q}")
    if q > 1 and not q.is_integer():
        raise ParameterError(f"{who}: q must be a positive integer or lie in (0, 1], got {q}")
    return q


@dataclass(frozen=True)
class RobustKernel:
    """Immutable kernel specification: kind, scale ``c`` and shape parameters.

    ``normalize=True`` rescales kinds whose printed form has slope != 1 at
    zero (Barron, AGCE, AUL) by the analytic constant so the measured
    right-derivative at 0 equals 1.  SCE cannot be normalized (its slope at
    zero vanishes for A = 1) and is left untouched.
    """

    kind: KernelKind
    c: float = 1.0
    normalize: bool = True
    alpha: float | None = None  # Barron
    q: float | None = None      # GCE / AGCE
    A: float | None = None      # SCE
    t: int | None = None        # Taylor CE
    a: float | None = None      # AGCE / AUL / AEL
    p: int | None = None        # AUL

    def __post_init__(self):
        kind = KernelKind(self.kind)
        object.__setattr__(self, "kind", kind)
        c = float(self.c)
        if not math.isfinite(c) or c <= 0:
            raise ParameterError(f"{kind.value}: scale c must be positive, got {self.c}")
        object.__setattr__(self, "c", c)
        if kind is KernelKind.BARRON:
            if self.alpha is None:
                raise ParameterError("barron: shape parameter alpha is required")
            alpha = float(self.alpha)
            if not math.isfinite(alpha) or abs(alpha) < 1e-12 or abs(alpha - 2.0) < 1e-12:
                raise ParameterError(
                    f"barron: alpha must be finite and != 0, 2 (log/quadratic limits "
                    f"are not kernelized), got {self.alpha}"
                )
            object.__setattr__(self, "alpha", alpha)
        elif kind in (KernelKind.GCE, KernelKind.AGCE):
            object.__setattr__(self, "q", _check_q(self.q, kind.value))
        if kind is KernelKind.SCE:
            if self.A is None or not math.isfinite(float(self.A)) or float(self.A) <= 0:
                raise ParameterError(f"sce: A must be positive, got {self.A}")
            object.__setattr__(self, "A", float(self.A))
        if kind is KernelKind.TAYLOR_CE:
            if self.t is None or int(self.t) != self.t or int(self.t) < 1:
                raise ParameterError(f"taylor_ce: t must be a positive integer, got {self.t}")
            object.__setattr__(self, "t", int(self.t))
        if kind in (KernelKind.AGCE, KernelKind.AUL, KernelKind.AEL):
            if self.a is None or not math.isfinite(float(self.a)) or float(self.a) <= 0:
                raise ParameterError(f"{kind.value}: a must be positive, got {self.a}")
            a = float(self.a)
            if kind is KernelKind.AUL and a <= 1.0:
                raise ParameterError(f"aul: a must exceed 1 (slope at 0 degenerates), got {a}")
            object.__setattr__(self, "a", a)
        if kind is KernelKind.AUL:
            if self.p is None or int(self.p) != self.p or int(self.p) < 1:
                raise ParameterError(f"aul: p must be a positive integer, got {self.p}")
            object.__setattr__(self, "p", int(self.p))

    # -- backend plumbing ---------------------------------------------------

    @property
    def code(self) -> int:
        return _KIND_CODE[self.kind]

    @property
    def packed_params(self) -> tuple[float, float]:
        """(p1, p2) packing consumed by the evaluation backends."""
        k = self.kind
        if k is KernelKind.BARRON:
            return self.alpha, 0.0
        if k is KernelKind.GCE:
            return self.q, 0.0
        if k is KernelKind.SCE:
            return self.A, 0.0
        if k is KernelKind.TAYLOR_CE:
            return float(self.t), 0.0
        if k is KernelKind.AGCE:
            return self.q, self.a
        if k is KernelKind.AUL:
            return float(self.p), self.a
        if k is KernelKind.AEL:
            return self.a, 0.0
        return 0.0, 0.0

    @property
    def norm_divisor(self) -> float:
        """Analytic slope of the printed form at r = 0 (divides sigma and sigma')."""
        if not self.normalize:
            return 1.0
        k = self.kind
        if k is KernelKind.BARRON:
            return 0.5
        if k is KernelKind.AGCE:
            return ((self.a + 1.0) / self.a) ** (self.q - 1.0)
        if k is KernelKind.AUL:
            return ((self.a - 1.0) / self.a) ** (self.p - 1.0)
        return 1.0

    @property
    def has_scale(self) -> bool:
        return self.kind in SCALED_KINDS

    def with_scale(self, c: float) -> "RobustKernel":
        return replace(self, c=float(c))

    # -- descriptive --------------------------------------------------------

    def describe(self) -> str:
        parts = [f"c={self.c:g}"]
        for name in ("alpha", "q", "A", "t", "a", "p"):
            v = getattr(self, name)
            if v is not None:
                parts.append(f"{name}={v:g}")
        if not self.normalize:
            parts.append("normalize=false")
        return f"{self.kind.value}({', '.join(parts)})"

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "c": self.c, "normalize": self.normalize}
        for name in ("alpha", "q", "A", "t", "a", "p"):
            v = getattr(self, name)
            if v is not None:
                d[name] = v
        return d

    @property
    def sigma_sup(self) -> float:
        """sup over r >= 0 of sigma(r); inf for unbounded kernels."""
        z = self.norm_divisor
        k, c = self.kind, self.c
        if k in (KernelKind.LINEAR_TRUNCATED, KernelKind.GEMAN_MCCLURE, KernelKind.WELSCH):
            return c / z
        if k in (KernelKind.CAUCHY, KernelKind.CHARBONNIER, KernelKind.SCE):
            return math.inf
        if k is KernelKind.BARRON:
            if self.alpha < 0:
                return (c * abs(self.alpha - 2.0) / abs(self.alpha)) / z
            return math.inf
        if k is KernelKind.MEAN_ERROR:
            return 1.0
        if k is KernelKind.GCE:
            return 1.0 / self.q
        if k is KernelKind.TAYLOR_CE:
            return sum(1.0 / m for m in range(1, self.t + 1))
        if k is KernelKind.AGCE:
            a, q = self.a, self.q
            return ((a + 1.0) ** q - a**q) / (q * a ** (q - 1.0)) / z
        if k is KernelKind.AUL:
            a, p = self.a, self.p
            return (a**p - (a - 1.0) ** p) / (p * a ** (p - 1.0)) / z
        # AEL: increases from a to a * e^{1/a}
        return self.a * math.exp(1.0 / self.a)


def kernel_from_dict(spec: dict) -> RobustKernel:
    """Build a kernel from a config mapping {kind, c?, normalize?, shape params...}."""
    spec = dict(spec)
    try:
        raw_kind = spec.pop("kind")
    except KeyError:
        raise ParameterError("kernel spec is missing 'kind'") from None
    key = str(raw_kind).strip().lower().replace("-", "_")
    if key not in _ALIASES:
        raise ParameterError(f"unknown kernel kind {raw_kind!r}")
    kind = _ALIASES[key]
    fields = {"c", "normalize", "alpha", "q", "A", "t", "a", "p"}
    unknown = set(spec) - fields
    if unknown:
        raise ParameterError(f"{kind.value}: unknown kernel option(s) {sorted(unknown)}")
    merged = dict(DEFAULT_SHAPE.get(kind, {}))
    merged.update(spec)
    return RobustKernel(kind=kind, **merged)


def kernel_from_string(text: str) -> RobustKernel:
    """Parse the compact CLI form ``kind`` or ``kind:key=val,key=val``."""
    head, _, tail = text.partition(":")
    spec: dict = {"kind": head.strip()}
    if tail.strip():
        for item in tail.split(","):
            key, sep, val = item.partition("=")
            if not sep:
                raise ParameterError(f"malformed kernel option {item!r} in {text!r}")
            key = key.strip()
            val = val.strip()
            if key == "normalize":
                spec[key] = val.lower() in ("1", "true", "yes")
            elif key in ("t", "p"):
                spec[key] = int(val)
            else:
                spec[key] = float(val)
    return kernel_from_dict(spec)


def default_kernels() -> list[RobustKernel]:
    """One kernel per kind at default parameters (the full conformance table)."""
    return [
        RobustKernel(kind=k, **DEFAULT_SHAPE.get(k, {}))  # type: ignore[arg-type]
        for k in KernelKind
    ]


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _as_flat(r, name="r"):
    arr = np.asarray(r, dtype=np.float64)
    shape = arr.shape
    flat = np.ascontiguousarray(arr.reshape(-1))
    if flat.size and float(np.min(flat)) < 0.0:
        raise DomainError(f"{name} must be nonnegative")
    return flat, shape


def kernel_eval(kernel: RobustKernel, r):
    """sigma_c(r) for scalar or array ``r >= 0``."""
    flat, shape = _as_flat(r)
    p1, p2 = kernel.packed_params
    out = sigma(kernel.code, flat, kernel.c, p1, p2, kernel.norm_divisor)
    return float(out[0]) if shape == () else out.reshape(shape)


def kernel_weight(kernel: RobustKernel, r):
    """sigma'_c(r): the per-sample weight.  Indicator 1{r <= c} for the truncated kind."""
    flat, shape = _as_flat(r)
    p1, p2 = kernel.packed_params
    out = sigma_prime(kernel.code, flat, kernel.c, p1, p2, kernel.norm_divisor)
    return float(out[0]) if shape == () else out.reshape(shape)


_CLOSED_INVERSE = {
    KernelKind.GEMAN_MCCLURE: lambda k, u: k.c * (1.0 / np.sqrt(u) - 1.0),
    KernelKind.WELSCH: lambda k, u: -k.c * np.log(u),
    KernelKind.CAUCHY: lambda k, u: k.c * (1.0 / u - 1.0),
    KernelKind.CHARBONNIER: lambda k, u: k.c * (1.0 / (u * u) - 1.0),
    KernelKind.MEAN_ERROR: lambda k, u: -np.log(u),
    KernelKind.GCE: lambda k, u: -np.log(u) / k.q,
    KernelKind.TAYLOR_CE: lambda k, u: -np.log1p(-((1.0 - u) ** (1.0 / k.t))),
}

INVERSE_TOL = 1e-10


def kernel_weight_inverse(kernel: RobustKernel, u):
    """(sigma')^{-1}(u) for u in the open interval (0, 1).

    Closed form where one exists; otherwise bisection on v = exp(-r) until
    the round-trip residual |sigma'(r) - u| <= 1e-10.  Unavailable for the
    truncated kernel (step derivative) and SCE (non-decreasing derivative).
    """
    if kernel.kind in (KernelKind.LINEAR_TRUNCATED, KernelKind.SCE):
        raise UnsupportedKernelError(
            f"{kernel.kind.value} has no strictly decreasing derivative to invert"
        )
    arr = np.ascontiguousarray(u, dtype=np.float64)
    scalar = arr.ndim == 0
    if scalar:
        arr = arr.reshape(1)
    if arr.size and (float(np.min(arr)) <= 0.0 or float(np.max(arr)) >= 1.0):
        raise DomainError("u must lie in the open interval (0, 1)")
    u_max = kernel_weight(kernel, 0.0)
    if arr.size and float(np.max(arr)) >= u_max:
        raise DomainError(
            f"u must stay below sigma'(0) = {u_max:g} for this kernel "
            "(enable normalize=True for a unit slope at zero)"
        )

    k = kernel.kind
    if k is KernelKind.BARRON:
        b = abs(kernel.alpha - 2.0)
        scaled = 2.0 * kernel.norm_divisor * arr  # equals u when normalized
        r = kernel.c * b * np.expm1((2.0 / (kernel.alpha - 2.0)) * np.log(scaled))
        r = np.maximum(r, 0.0)
    elif k in _CLOSED_INVERSE:
        r = np.maximum(_CLOSED_INVERSE[k](kernel, arr * kernel.norm_divisor), 0.0)
    else:
        r = _bisect_inverse(kernel, arr)
    return float(r[0]) if scalar else r


def _bisect_inverse(kernel: RobustKernel, u: np.ndarray, max_iter: int = 200) -> np.ndarray:
    # sigma' is increasing in v = exp(-r); bisect v in [0, 1]
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    r = np.zeros_like(u)
    for _ in range(max_iter):
        v = 0.5 * (lo + hi)
        with np.errstate(divide="ignore"):
            r = -np.log(v)
        w = kernel_weight(kernel, r)
        err = w - u
        if float(np.max(np.abs(err))) <= INVERSE_TOL:
            break
        below = err < 0.0
        lo = np.where(below, v, lo)
        hi = np.where(below, hi, v)
    return r


# ---------------------------------------------------------------------------
# conformance
# ---------------------------------------------------------------------------

COND_I_TOL = 1e-3     # |sigma'(1e-8 c) - 1|
COND_II_TOL = 1e-3    # sigma'(1e6 c)
COND_III_TOL = 1e-12  # max allowed increase of sigma' between grid points


@dataclass
class ConformanceReport:
    """Numerically measured status of the three kernel-defining conditions."""

    kernel_id: str
    cond_i_pass: bool
    cond_i_error: float
    cond_ii_pass: bool
    cond_ii_value: float
    cond_iii_pass: bool
    cond_iii_max_increase: float
    value_at_zero: float
    step_function: bool = False
    notes: list[str] = field(default_factory=list)

    @property
    def passes(self) -> bool:
        return self.cond_i_pass and self.cond_ii_pass and self.cond_iii_pass

    def to_dict(self) -> dict:
        return {
            "kernel_id": self.kernel_id,
            "cond_i": {"pass": self.cond_i_pass, "abs_error": self.cond_i_error},
            "cond_ii": {"pass": self.cond_ii_pass, "value": self.cond_ii_value},
            "cond_iii": {"pass": self.cond_iii_pass, "max_increase": self.cond_iii_max_increase},
            "value_at_zero": self.value_at_zero,
            "step_function": self.step_function,
            "passes": self.passes,
            "notes": list(self.notes),
        }


def conformance_check(
    kernel: RobustKernel,
    n_points: int = 200,
    span: tuple[float, float] = (1e-8, 1e6),
) -> ConformanceReport:
    """Measure conditions (i) unit slope at 0, (ii) vanishing slope at infinity,
    (iii) nonincreasing slope, on a log grid of ``n_points`` over
    ``[span[0] * c, span[1] * c]``.  Records failures instead of raising.
    """
    if n_points < 200:
        raise DomainError("conformance grid needs at least 200 points")
    lo, hi = span
    if lo > 1e-8 or hi < 1e6:
        raise DomainError("conformance grid must span at least [1e-8 c, 1e6 c]")
    grid = kernel.c * np.logspace(np.log10(lo), np.log10(hi), n_points)
    w = kernel_weight(kernel, grid)

    err_i = abs(float(w[0]) - 1.0)
    val_ii = float(w[-1])
    increments = np.diff(w)
    max_up = float(np.max(increments)) if increments.size else 0.0
    value_at_zero = kernel_eval(kernel, 0.0)

    notes = []
    if kernel.kind is KernelKind.SCE:
        notes.append(
            "limit of sigma' is 1/(1+A) != 0: documented exception to condition (ii); "
            "normalization not applicable; excluded from duality operations"
        )
    if kernel.kind is KernelKind.AEL:
        notes.append("sigma(0) = a != 0 offset (derivative conditions unaffected; no shift applied)")
    if not kernel.normalize and kernel.kind in (KernelKind.BARRON, KernelKind.AGCE, KernelKind.AUL):
        notes.append("printed form has non-unit slope at 0; construct with normalize=True")

    return ConformanceReport(
        kernel_id=kernel.describe(),
        cond_i_pass=err_i < COND_I_TOL,
        cond_i_error=err_i,
        cond_ii_pass=val_ii < COND_II_TOL,
        cond_ii_value=val_ii,
        cond_iii_pass=max_up <= COND_III_TOL,
        cond_iii_max_increase=max_up,
        value_at_zero=value_at_zero,
        step_function=kernel.kind is KernelKind.LINEAR_TRUNCATED,
        notes=notes,
    )
