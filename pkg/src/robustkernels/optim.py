"""Optimizers: plain SGD/GD baselines and the adaptive alternation loop.

The adaptive loop alternates three moves:

1. *scale update* -- with the current per-sample losses D, pick the kernel
   scale c so the mean weight (1/|D|) sum_i sigma'_c(f_i) hits a target
   ``zeta`` (bisection; empirical zeta-quantile for the truncated kernel);
2. *coefficient update* -- freeze weights u_i = sigma'_c(f_i);
3. *weight update* -- T stochastic steps on the u-weighted mean loss.

With all weights at 1 a step reduces exactly to plain SGD (same code path,
bit for bit).  Runs are deterministic given (problem, config, seed) and
stream per-step metrics into a RunRecord.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ._core import mean_weight as _mean_weight
from ._core import solve_scale as _solve_scale
from .kernels import KernelKind, RobustKernel, kernel_eval, kernel_weight
from .problems import ProblemInstance


class NonFiniteUpdateError(RuntimeError):
    """A gradient or iterate became non-finite; the run aborts."""


# ---------------------------------------------------------------------------
# configs and state
# ---------------------------------------------------------------------------

BASELINE_MODES = ("sgd", "gd", "momentum", "clip", "normalized")


@dataclass(frozen=True)
class BaselineConfig:
    mode: str = "sgd"
    eta: float = 1e-3
    batch_size: int = 1
    momentum: float = 0.9       # momentum mode
    clip_tau: float = 1.0       # clip mode: max gradient norm
    max_iters: int = 10_000
    stop_epsilon: float = 0.0   # 0 disables the loss-plateau stop
    stop_patience: int = 5
    logging_period: int = 500

    def __post_init__(self):
        if self.mode not in BASELINE_MODES:
            raise ValueError(f"unknown baseline mode {self.mode!r}")
        if self.eta <= 0 or self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("eta, batch_size and max_iters must be positive")


@dataclass(frozen=True)
class AAAConfig:
    kernel: RobustKernel
    eta: float = 1e-3
    batch_size: int = 1
    T: int = 1                       # weight-update steps per alternation block
    zeta: float = 0.9                # target mean coefficient weight
    c0: float | None = None          # None: max of the first loss pass
    param_update_period: int | None = None  # None: equal to T
    c_bracket: tuple[float, float] | None = None  # None: adaptive from the losses
    bisection_tol: float = 1e-6
    max_iters: int = 10_000
    stop_epsilon: float = 1e-6
    stop_patience: int = 5
    logging_period: int = 500
    loss_buffer: str = "full"        # 'full': recompute all losses per refresh;
    buffer_size: int = 4096          # 'recent': ring buffer of batch losses
    record_diagnostics: bool = False

    def __post_init__(self):
        if self.eta <= 0 or self.T < 1 or self.batch_size < 1 or self.max_iters < 1:
            raise ValueError("eta, T, batch_size and max_iters must be positive")
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        if self.loss_buffer not in ("full", "recent"):
            raise ValueError(f"loss_buffer must be 'full' or 'recent', got {self.loss_buffer!r}")
        if self.c_bracket is not None and not self.c_bracket[0] < self.c_bracket[1]:
            raise ValueError("c_bracket must satisfy c_min < c_max")

    @property
    def period(self) -> int:
        return self.T if self.param_update_period is None else self.param_update_period


@dataclass
class TrainState:
    """Mutable optimizer state: weights, frozen coefficients, scale, counters."""

    w: np.ndarray
    u: np.ndarray
    c: float
    t: int = 0
    s: int = 0  # iteration of the last coefficient refresh


# ---------------------------------------------------------------------------
# coefficient and scale updates
# ---------------------------------------------------------------------------


def coefficient_update(kernel: RobustKernel, c: float, losses: np.ndarray) -> np.ndarray:
    """u_i = sigma'_c(f_i), clipped into [0, 1] (clipping only binds for
    non-conformant kernels whose derivative strays outside the unit interval)."""
    u = kernel_weight(kernel.with_scale(c), np.asarray(losses, dtype=np.float64))
    return np.clip(u, 0.0, 1.0)


@dataclass(frozen=True)
class ScaleUpdate:
    c: float
    mean_weight: float
    residual: float
    status: str          # 'converged' | 'quantile' | 'saturated_high' | 'saturated_low' | 'bracket_exhausted'
    iterations: int = 0

    @property
    def saturated(self) -> bool:
        return self.status in ("saturated_high", "saturated_low")


def default_bracket(losses: np.ndarray) -> tuple[float, float]:
    """[1e-6 * median(positive losses), 1e6 * max(losses)], with a tiny floor."""
    losses = np.asarray(losses)
    positive = losses[losses > 0]
    if positive.size == 0:
        return 1e-12, 1.0
    lo = 1e-6 * float(np.median(positive))
    hi = 1e6 * float(np.max(losses))
    return max(lo, 1e-300), max(hi, 2e-300)


def parameter_update(
    kernel: RobustKernel,
    losses: np.ndarray,
    zeta: float,
    bracket: tuple[float, float] | None = None,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> ScaleUpdate:
    """Solve (1/|D|) sum sigma'_c(f_i) = zeta for the scale c.

    Smooth kernels: log-space bisection, after verifying the mean weight is
    nondecreasing between the bracket endpoints.  Truncated kernel: the
    empirical zeta-quantile (smallest loss value with at least a zeta
    fraction of losses at or below it).  Unreachable targets return the
    nearest endpoint with a saturation status.
    """
    losses = np.ascontiguousarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ValueError("losses must be nonempty")
    if not 0.0 < zeta <= 1.0:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")

    if kernel.kind is KernelKind.LINEAR_TRUNCATED:
        m = int(np.ceil(zeta * losses.size))
        c = float(np.partition(losses, m - 1)[m - 1])
        u = coefficient_update(kernel, c, losses) if c > 0 else np.ones_like(losses)
        if c <= 0:
            # zeta-quantile of all-zero (or zero-heavy) losses; weights are all 1 at any c
            lo, _ = default_bracket(losses)
            return ScaleUpdate(c=lo, mean_weight=1.0, residual=abs(1.0 - zeta), status="saturated_low")
        return ScaleUpdate(c=c, mean_weight=float(np.mean(u)), residual=abs(float(np.mean(u)) - zeta), status="quantile")

    lo, hi = bracket if bracket is not None else default_bracket(losses)
    p1, p2 = kernel.packed_params
    z = kernel.norm_divisor
    if not np.any(losses > 0):
        return ScaleUpdate(c=lo, mean_weight=1.0, residual=abs(1.0 - zeta), status="saturated_low")
    m_lo = _mean_weight(kernel.code, losses, lo, p1, p2, z)
    m_hi = _mean_weight(kernel.code, losses, hi, p1, p2, z)
    if m_hi < m_lo - 1e-9:
        raise RuntimeError(
            f"mean weight decreased between bracket endpoints ({m_lo:.6g} -> {m_hi:.6g}); "
            "bisection assumes a nondecreasing mean weight in c"
        )
    if m_hi < zeta:
        return ScaleUpdate(c=hi, mean_weight=m_hi, residual=abs(m_hi - zeta), status="saturated_high")
    if m_lo >= zeta:
        return ScaleUpdate(c=lo, mean_weight=m_lo, residual=abs(m_lo - zeta), status="saturated_low")
    c, m, resid, iters = _solve_scale(
        kernel.code, losses, zeta, lo, hi, tol, max_iter, p1, p2, z
    )
    status = "converged" if resid <= tol else "bracket_exhausted"
    return ScaleUpdate(c=float(c), mean_weight=float(m), residual=float(resid), status=status, iterations=int(iters))


def _warm_bracket(
    kernel: RobustKernel, losses: np.ndarray, zeta: float, hint: float
) -> tuple[float, float] | None:
    """Narrow bracket around the previous scale, expanded until it straddles zeta."""
    lo_full, hi_full = default_bracket(losses)
    if not (lo_full < hint < hi_full):
        return None
    p1, p2 = kernel.packed_params
    z = kernel.norm_divisor
    lo = max(hint / 8.0, lo_full)
    hi = min(hint * 8.0, hi_full)
    for _ in range(24):
        if _mean_weight(kernel.code, losses, lo, p1, p2, z) <= zeta:
            break
        lo = max(lo / 64.0, lo_full)
        if lo == lo_full:
            break
    for _ in range(24):
        if _mean_weight(kernel.code, losses, hi, p1, p2, z) >= zeta:
            break
        hi = min(hi * 64.0, hi_full)
        if hi == hi_full:
            break
    return lo, hi


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------


def baseline_step(
    problem: ProblemInstance,
    w: np.ndarray,
    batch: np.ndarray,
    eta: float,
    mode: str = "sgd",
    velocity: np.ndarray | None = None,
    momentum: float = 0.9,
    clip_tau: float = 1.0,
) -> tuple[np.ndarray, np.ndarray | None]:
    """One baseline update; returns (new w, new velocity).

    ``g`` is the batch-mean gradient; momentum accumulates v <- beta v + g,
    clip rescales g to norm ``clip_tau`` when it exceeds it, normalized
    rescales to exactly unit norm.
    """
    g = problem.grad_mean(w, batch)
    if not np.all(np.isfinite(g)):
        raise NonFiniteUpdateError(f"non-finite gradient in mode {mode!r}")
    if mode == "momentum":
        velocity = g if velocity is None else momentum * velocity + g
        g = velocity
    elif mode == "clip":
        norm = float(np.linalg.norm(g))
        if norm > clip_tau:
            g = g * (clip_tau / norm)
    elif mode == "normalized":
        norm = float(np.linalg.norm(g))
        if norm > 0.0:
            g = g / norm
    with np.errstate(over="ignore", invalid="ignore"):
        return w - eta * g, velocity


def aaa_step(problem: ProblemInstance, state: TrainState, batch: np.ndarray, eta: float) -> TrainState:
    """One weighted stochastic step; coefficients stay frozen, t advances."""
    g = problem.grad_mean(state.w, batch, weights=state.u[batch])
    if not np.all(np.isfinite(g)):
        raise NonFiniteUpdateError("non-finite gradient in adaptive step")
    with np.errstate(over="ignore", invalid="ignore"):
        state.w = state.w - eta * g
    state.t += 1
    return state


# ---------------------------------------------------------------------------
# run records
# ---------------------------------------------------------------------------

LOG_COLUMNS = ("t", "train_loss", "clean_loss", "test_metric", "c", "mean_u", "min_u")


@dataclass
class RunRecord:
    """Per-run log: periodic metric rows plus a final summary."""

    method: str
    seed: int
    rows: list[tuple] = field(default_factory=list)
    final_w: np.ndarray | None = None
    iterations_run: int = 0
    stopped_early: bool = False
    failed: bool = False
    failure_reason: str = ""
    saturation_events: int = 0
    final_test_metric: float = math.nan
    final_train_loss: float = math.nan
    final_clean_loss: float = math.nan
    diagnostics: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def log(self, t, train_loss, clean_loss, test_metric, c, mean_u, min_u):
        self.rows.append(
            (
                int(t),
                float(train_loss),
                float(clean_loss),
                float(test_metric),
                float(c),
                float(mean_u),
                float(min_u),
            )
        )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(LOG_COLUMNS)
            for row in self.rows:
                writer.writerow([repr(v) if isinstance(v, float) else str(v) for v in row])

    def summary(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "iterations_run": self.iterations_run,
            "stopped_early": self.stopped_early,
            "failed": self.failed,
            "failure_reason": self.failure_reason,
            "saturation_events": self.saturation_events,
            "final_test_metric": self.final_test_metric,
            "final_train_loss": self.final_train_loss,
            "final_clean_loss": self.final_clean_loss,
            "final_w": None if self.final_w is None else [repr(float(v)) for v in self.final_w],
            "meta": self.meta,
        }

    def to_json(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)


def _plateaued(history: list[float], epsilon: float, patience: int) -> bool:
    if epsilon <= 0 or len(history) < patience + 1:
        return False
    recent = history[-(patience + 1):]
    for prev, cur in zip(recent, recent[1:]):
        denom = max(abs(prev), 1e-300)
        if abs(cur - prev) / denom >= epsilon:
            return False
    return True


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------


def _finalize(record: RunRecord, problem: ProblemInstance, w: np.ndarray, robust_loss, c, mean_u, min_u, t):
    clean = float(np.mean(problem.clean_losses(w)))
    test = problem.test_metric(w)
    record.log(t, robust_loss, clean, test, c, mean_u, min_u)
    record.final_w = w.copy()
    record.final_test_metric = test
    record.final_train_loss = float(np.mean(problem.losses(w)))
    record.final_clean_loss = clean
    record.iterations_run = t


def run_baseline(problem: ProblemInstance, config: BaselineConfig, seed: int) -> RunRecord:
    rng = np.random.default_rng(seed)
    w = problem.init_weights()
    velocity = None
    record = RunRecord(method=config.mode, seed=int(seed))
    n = problem.n
    full = np.arange(n)
    history: list[float] = []
    t = 0
    try:
        for t in range(config.max_iters):
            if t % config.logging_period == 0:
                train = float(np.mean(problem.losses(w)))
                record.log(
                    t, train, float(np.mean(problem.clean_losses(w))),
                    problem.test_metric(w), math.nan, 1.0, 1.0,
                )
                history.append(train)
                if _plateaued(history, config.stop_epsilon, config.stop_patience):
                    record.stopped_early = True
                    break
            batch = full if config.mode == "gd" else rng.integers(0, n, config.batch_size)
            w, velocity = baseline_step(
                problem, w, batch, config.eta, config.mode,
                velocity=velocity, momentum=config.momentum, clip_tau=config.clip_tau,
            )
        else:
            t = config.max_iters
    except NonFiniteUpdateError as exc:
        record.failed = True
        record.failure_reason = str(exc)
        w = np.where(np.isfinite(w), w, 0.0)
    _finalize(record, problem, w, float(np.mean(problem.losses(w))), math.nan, 1.0, 1.0, t)
    return record


def run_aaa(problem: ProblemInstance, config: AAAConfig, seed: int) -> RunRecord:
    """Adaptive alternation: scale update, coefficient refresh, T weighted steps.

    The accumulated loss set D is the full training set's current losses,
    recomputed each refresh ('full' mode), or a ring buffer of recently seen
    batch losses ('recent' mode; weights are then evaluated lazily per batch
    at the current iterate).  The first refresh initializes c to max(D)
    unless ``config.c0`` pins it, so early training resembles plain SGD.
    """
    rng = np.random.default_rng(seed)
    kernel = config.kernel
    n = problem.n
    state = TrainState(w=problem.init_weights(), u=np.ones(n), c=math.nan)
    record = RunRecord(method=f"aaa-{kernel.kind.value}", seed=int(seed))
    record.meta["kernel"] = kernel.to_dict()

    buffered = config.loss_buffer == "recent"
    ring: list[np.ndarray] = []
    history: list[float] = []
    first_refresh = True
    t = 0
    try:
        for t in range(config.max_iters):
            if t % config.period == 0:
                if buffered and ring:
                    d_losses = np.concatenate(ring)[-config.buffer_size:]
                else:
                    d_losses = problem.losses(state.w)
                if first_refresh:
                    state.c = config.c0 if config.c0 is not None else max(float(np.max(d_losses)), 1e-12)
                    first_refresh = False
                else:
                    bracket = config.c_bracket
                    if bracket is None and kernel.kind is not KernelKind.LINEAR_TRUNCATED:
                        bracket = _warm_bracket(kernel, d_losses, config.zeta, state.c)
                    upd = parameter_update(
                        kernel, d_losses, config.zeta, bracket=bracket, tol=config.bisection_tol
                    )
                    state.c = upd.c
                    if upd.saturated:
                        record.saturation_events += 1
                if not buffered:
                    full_losses = problem.losses(state.w)
                    state.u = coefficient_update(kernel, state.c, full_losses)
                    robust = float(np.mean(kernel_eval(kernel.with_scale(state.c), full_losses)))
                    history.append(robust)
                    if _plateaued(history, config.stop_epsilon, config.stop_patience):
                        record.stopped_early = True
                        break
                state.s = t

            if t % config.logging_period == 0:
                losses_now = problem.losses(state.w)
                record.log(
                    t,
                    float(np.mean(kernel_eval(kernel.with_scale(state.c), losses_now))),
                    float(np.mean(problem.clean_losses(state.w))),
                    problem.test_metric(state.w),
                    state.c,
                    float(np.mean(state.u)),
                    float(np.min(state.u)),
                )
                if config.record_diagnostics:
                    from .diagnostics import region_report  # local import: avoid cycle

                    record.diagnostics.append(
                        {"t": t, **region_report(problem, state.w, kernel, state.c).to_dict()}
                    )

            batch = rng.integers(0, n, config.batch_size)
            if buffered:
                # lazy weights at the current iterate (streaming approximation)
                bl = problem.batch_losses(state.w, batch)
                state.u[batch] = coefficient_update(kernel, state.c, bl)
                ring.append(bl)
                if len(ring) > max(1, config.buffer_size // config.batch_size):
                    ring.pop(0)
            state = aaa_step(problem, state, batch, config.eta)
        else:
            t = config.max_iters
    except NonFiniteUpdateError as exc:
        record.failed = True
        record.failure_reason = str(exc)
        state.w = np.where(np.isfinite(state.w), state.w, 0.0)

    losses_final = problem.losses(state.w)
    robust_final = float(np.mean(kernel_eval(kernel.with_scale(state.c), losses_final)))
    _finalize(
        record, problem, state.w, robust_final, state.c,
        float(np.mean(state.u)), float(np.min(state.u)), t,
    )
    return record
