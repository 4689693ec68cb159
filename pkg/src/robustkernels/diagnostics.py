"""Oracle-instrumented diagnostics: variance bounds, convergence-region
statistics, loss-landscape slices, and gradient checks.

All quantities are exact sums over the full dataset (no sampling):

* variance of the stochastic descent direction against the clean mean
  gradient, together with its ``3 eta^2 lambda (1/n_O) sum ||h_i||^2``
  bound (and the weighted variant with the kernel derivative squared);
* the region statistics M_sgd = mean ||h_i||^2 over outliers and
  M_aaa = mean (sigma'_c(f_i))^2 ||h_i||^2, whose boundedness the
  convergence analysis requires -- M_aaa <= M_sgd always since sigma' <= 1;
* the share of outliers violating the low signal-to-outlier assumption
  (||h_i|| >= 1 and ||h_i|| >= ||grad of the clean loss||);
* 1-D interpolated loss landscapes between two weight vectors.

Nothing here is asserted; reports feed tests and the sweep CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .kernels import RobustKernel, kernel_eval, kernel_weight
from .problems import LinearRegression, ProblemInstance


def _outlier_h(problem: ProblemInstance, w: np.ndarray) -> np.ndarray:
    """Rows h_i = grad f_i - grad f_{i,I} for every outlier (m, dim)."""
    idx = problem.outlier_indices
    if idx.size == 0:
        return np.zeros((0, problem.dim))
    observed = problem.grad_matrix(w, idx)
    clean = problem.grad_matrix(w, idx, labels=problem.y_clean)
    return observed - clean


@dataclass(frozen=True)
class VarianceReport:
    empirical_sgd: float
    bound_sgd: float
    empirical_aaa: float
    bound_aaa: float
    outlier_mean_norm: float
    inlier_term: float           # eta^2 (E||grad f_{i,I}||^2 - ||grad f_I||^2)
    assumption2_violation_fraction: float

    def to_dict(self) -> dict:
        return {
            "empirical_sgd": self.empirical_sgd,
            "bound_sgd": self.bound_sgd,
            "empirical_aaa": self.empirical_aaa,
            "bound_aaa": self.bound_aaa,
            "outlier_mean_norm": self.outlier_mean_norm,
            "inlier_term": self.inlier_term,
            "assumption2_violation_fraction": self.assumption2_violation_fraction,
        }


def _violation_fraction(h: np.ndarray, clean_grads: np.ndarray) -> float:
    if h.shape[0] == 0:
        return 0.0
    h_norms = np.linalg.norm(h, axis=1)
    g_norms = np.linalg.norm(clean_grads, axis=1)
    return float(np.mean((h_norms < 1.0) | (h_norms < g_norms)))


def variance_report(
    problem: ProblemInstance,
    w: np.ndarray,
    kernel: RobustKernel,
    c: float,
    eta: float,
) -> VarianceReport:
    """Exact descent-direction variance for unit-weight and kernel-weighted
    single-sample steps, against the clean mean gradient, plus both bounds."""
    w = np.asarray(w, dtype=np.float64)
    n = problem.n
    grads = problem.all_grads(w)                # observed per-sample gradients
    clean = problem.all_grads(w, clean=True)
    mean_clean = clean.mean(axis=0)
    lam = problem.n_outliers / n

    dev = eta * grads - eta * mean_clean
    empirical_sgd = float(np.mean(np.sum(dev * dev, axis=1)))

    u = kernel_weight(kernel.with_scale(c), problem.losses(w))
    dev_w = eta * (u[:, None] * grads) - eta * mean_clean
    empirical_aaa = float(np.mean(np.sum(dev_w * dev_w, axis=1)))

    out_idx = problem.outlier_indices
    h = grads[out_idx] - clean[out_idx]
    if out_idx.size:
        h_sq = np.sum(h * h, axis=1)
        bound_sgd = 3.0 * eta**2 * lam * float(np.mean(h_sq))
        u_out = u[out_idx]
        bound_aaa = 3.0 * eta**2 * lam * float(np.mean(u_out * u_out * h_sq))
        outlier_mean_norm = float(np.linalg.norm(h.mean(axis=0)))
    else:
        bound_sgd = bound_aaa = outlier_mean_norm = 0.0

    inlier_term = eta**2 * (
        float(np.mean(np.sum(clean * clean, axis=1))) - float(np.sum(mean_clean * mean_clean))
    )
    return VarianceReport(
        empirical_sgd=empirical_sgd,
        bound_sgd=bound_sgd,
        empirical_aaa=empirical_aaa,
        bound_aaa=bound_aaa,
        outlier_mean_norm=outlier_mean_norm,
        inlier_term=inlier_term,
        assumption2_violation_fraction=_violation_fraction(h, clean[out_idx]),
    )


@dataclass(frozen=True)
class RegionReport:
    m_sgd: float
    m_aaa: float
    mean_weight: float
    min_weight: float            # min_i sigma'_c(f_i)
    min_kernel_value: float      # min_i sigma_c(f_i), reported alongside
    assumption2_violation_fraction: float

    def to_dict(self) -> dict:
        return {
            "m_sgd": self.m_sgd,
            "m_aaa": self.m_aaa,
            "mean_weight": self.mean_weight,
            "min_weight": self.min_weight,
            "min_kernel_value": self.min_kernel_value,
            "assumption2_violation_fraction": self.assumption2_violation_fraction,
        }


def region_report(
    problem: ProblemInstance, w: np.ndarray, kernel: RobustKernel, c: float
) -> RegionReport:
    """Convergence-region statistics at (w, c); all sums exact."""
    w = np.asarray(w, dtype=np.float64)
    losses = problem.losses(w)
    u = kernel_weight(kernel.with_scale(c), losses)
    sig = kernel_eval(kernel.with_scale(c), losses)
    out_idx = problem.outlier_indices
    if out_idx.size:
        h = _outlier_h(problem, w)
        h_sq = np.sum(h * h, axis=1)
        m_sgd = float(np.mean(h_sq))
        u_out = u[out_idx]
        m_aaa = float(np.mean(u_out * u_out * h_sq))
        clean_out = problem.grad_matrix(w, out_idx, labels=problem.y_clean)
        viol = _violation_fraction(h, clean_out)
    else:
        m_sgd = m_aaa = viol = 0.0
    return RegionReport(
        m_sgd=m_sgd,
        m_aaa=m_aaa,
        mean_weight=float(np.mean(u)),
        min_weight=float(np.min(u)),
        min_kernel_value=float(np.min(sig)),
        assumption2_violation_fraction=viol,
    )


def history_region_stat(
    problem: ProblemInstance, stale_u: np.ndarray, w_current: np.ndarray
) -> float:
    """Block-stale variant: (1/n_O) sum (stale u_i)^2 ||h_i(o_i, w_current)||^2.

    Transcribes the history-dependent summand for alternation blocks longer
    than one step, where coefficients were frozen at an earlier iterate.
    """
    out_idx = problem.outlier_indices
    if out_idx.size == 0:
        return 0.0
    h = _outlier_h(problem, np.asarray(w_current, dtype=np.float64))
    u_out = np.asarray(stale_u)[out_idx]
    return float(np.mean(u_out * u_out * np.sum(h * h, axis=1)))


# ---------------------------------------------------------------------------
# smoothness / curvature constants for the step-size thresholds
# ---------------------------------------------------------------------------


def regression_constants(problem: ProblemInstance) -> dict:
    """L, mu and the per-sample optimality gap term for the linear-MSE model.

    L = 2 max_i ||x_i||^2 bounds every per-sample Hessian; mu is twice the
    smallest positive eigenvalue of the feature Gram matrix (the
    Polyak-Lojasiewicz constant of the clean mean loss); delta is the mean
    gap between the clean optimum and the per-sample optima (zero each).
    """
    if problem.kind != LinearRegression:
        raise ValueError("smoothness constants are computed for the linear-MSE model only")
    X = problem.X
    L = 2.0 * float(np.max(np.sum(X * X, axis=1)))
    gram = (X.T @ X) / problem.n
    eigs = np.linalg.eigvalsh(gram)
    positive = eigs[eigs > 1e-12]
    mu = 2.0 * float(positive.min()) if positive.size else 0.0
    w_hat, *_ = np.linalg.lstsq(X, problem.y_clean, rcond=None)
    f_star = float(np.mean(problem.clean_losses(w_hat)))
    return {"L": L, "mu": mu, "delta_f": f_star, "f_star_clean": f_star}


def step_size_bounds(
    L: float,
    mu: float,
    lam: float,
    M: float,
    delta_f: float,
    epsilon: float,
    beta: float = 1.0,
    zeta: float = 1.0,
) -> dict:
    """Step-size thresholds from the convergence statements (reported, not asserted)."""
    sgd = (mu / L) * min(1.0 / L, epsilon / (3.0 * lam * M + 2.0 * L * delta_f))
    aaa = (mu * beta / L) * min(1.0 / L, epsilon / (3.0 * lam * M + 2.0 * L * delta_f * zeta))
    return {"eta_max_sgd": sgd, "eta_max_aaa": aaa}


# ---------------------------------------------------------------------------
# 1-D landscape and gradient checks
# ---------------------------------------------------------------------------


def landscape_1d(
    problem: ProblemInstance,
    w_a: np.ndarray,
    w_b: np.ndarray,
    kappa_grid: np.ndarray,
    loss_kind: str = "observed",
) -> np.ndarray:
    """Mean loss along the segment (1-kappa) w_a + kappa w_b.

    Returns an array of (kappa, loss) rows; ``loss_kind`` selects the
    observed labels or the oracle clean labels.
    """
    w_a = np.asarray(w_a, dtype=np.float64)
    w_b = np.asarray(w_b, dtype=np.float64)
    if w_a.shape != w_b.shape:
        raise ValueError(f"endpoint shapes differ: {w_a.shape} vs {w_b.shape}")
    if loss_kind not in ("observed", "clean"):
        raise ValueError(f"loss_kind must be 'observed' or 'clean', got {loss_kind!r}")
    rows = []
    for kappa in np.asarray(kappa_grid, dtype=np.float64):
        w = (1.0 - kappa) * w_a + kappa * w_b
        losses = problem.losses(w) if loss_kind == "observed" else problem.clean_losses(w)
        rows.append((float(kappa), float(np.mean(losses))))
    return np.array(rows)


def finite_diff_check(problem: ProblemInstance, w: np.ndarray, i: int, h: float = 1e-6) -> float:
    """Max coordinate-wise relative error between the analytic sample gradient
    and central differences of the sample loss (absolute error where the
    analytic coordinate is below 1e-8)."""
    if h <= 0:
        raise ValueError("h must be positive")
    w = np.asarray(w, dtype=np.float64)
    g = problem.sample_grad(w, i)
    fd = np.empty_like(g)
    for j in range(len(w)):
        wp = w.copy()
        wm = w.copy()
        wp[j] += h
        wm[j] -= h
        fd[j] = (problem.sample_loss(wp, i) - problem.sample_loss(wm, i)) / (2.0 * h)
    denom = np.where(np.abs(g) < 1e-8, 1.0, np.abs(g))
    return float(np.max(np.abs(fd - g) / denom))


def variance_consistency(problem: ProblemInstance, w, kernel, c, eta) -> tuple[float, float]:
    """The SGD-direction variance computed two ways (direct deviation sum vs
    second moment minus cross terms); used as an internal consistency check."""
    grads = problem.all_grads(np.asarray(w, dtype=np.float64))
    clean_mean = problem.all_grads(w, clean=True).mean(axis=0)
    dev = eta * grads - eta * clean_mean
    direct = float(np.mean(np.sum(dev * dev, axis=1)))
    second = float(np.mean(np.sum(grads * grads, axis=1))) * eta**2
    cross = 2.0 * eta**2 * float(grads.mean(axis=0) @ clean_mean)
    alt = second - cross + eta**2 * float(clean_mean @ clean_mean)
    return direct, alt


def landscape_second_differences(curve: np.ndarray) -> np.ndarray:
    """Discrete second differences of a (kappa, value) curve (convexity probe)."""
    values = curve[:, 1]
    return values[2:] - 2.0 * values[1:-1] + values[:-2]
