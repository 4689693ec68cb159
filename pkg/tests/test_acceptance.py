"""Acceptance gate: one test per criterion, at the stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one pass/fail line
per criterion.  Criterion 5 executes the full regression sweep preset
(10 outlier fractions x 4 methods x 5 trials at 10^4 iterations) and takes
a few minutes; everything else finishes in seconds.
"""

import csv
import math
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from robustkernels.config import load_config, preset_path, validate_config
from robustkernels.diagnostics import finite_diff_check, region_report, variance_report
from robustkernels.duality import duality_residual, outlier_process, penalized_argmin_oracle
from robustkernels.experiment import run_experiment
from robustkernels.kernels import (
    KernelKind,
    RobustKernel,
    conformance_check,
    kernel_eval,
    kernel_weight,
    kernel_weight_inverse,
)
from robustkernels.optim import parameter_update
from robustkernels.problems import gen_blob_classification, gen_linear_regression

from conftest import smooth_conformant_kernels


def conclude(number: str, label: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    line = f"[ACCEPTANCE] criterion {number} ({label}): {status}"
    if detail:
        line += f" -- {detail}"
    print(line)
    assert ok, line


# ---------------------------------------------------------------------------
# 1. kernel conformance
# ---------------------------------------------------------------------------


def test_criterion_1_kernel_conformance():
    passing = smooth_conformant_kernels() + [RobustKernel(KernelKind.LINEAR_TRUNCATED)]
    failures = []
    for kernel in passing:
        rep = conformance_check(kernel, n_points=200)
        if not (rep.cond_i_error < 1e-3 and rep.cond_ii_value < 1e-3 and rep.cond_iii_pass):
            failures.append(rep.kernel_id)
    sce = conformance_check(RobustKernel(KernelKind.SCE, A=1.0), n_points=200)
    sce_ok = (not sce.cond_ii_pass) and abs(sce.cond_ii_value - 0.5) <= 1e-6
    conclude(
        "1", "kernel conformance", not failures and sce_ok,
        f"12 kinds pass; sce limit={sce.cond_ii_value:.9f}; failures={failures}",
    )


# ---------------------------------------------------------------------------
# 2. duality identity
# ---------------------------------------------------------------------------


def test_criterion_2_duality_identity():
    kinds = {
        KernelKind.GEMAN_MCCLURE: {},
        KernelKind.WELSCH: {},
        KernelKind.CAUCHY: {},
        KernelKind.GCE: {"q": 0.7},
        KernelKind.MEAN_ERROR: {},
        KernelKind.TAYLOR_CE: {"t": 2},
    }
    worst = 0.0
    for kind, shape in kinds.items():
        kernel = RobustKernel(kind, c=1.9, **shape)
        grid = kernel.c * np.logspace(-3, 3, 200)
        worst = max(worst, float(np.max(duality_residual(kernel, grid))))
    closed_gap = 0.0
    u = np.linspace(0.01, 0.99, 99)
    for kind in (KernelKind.GEMAN_MCCLURE, KernelKind.WELSCH, KernelKind.CAUCHY):
        kernel = RobustKernel(kind, c=2.6)
        r = kernel_weight_inverse(kernel, u)
        numeric = kernel_eval(kernel, r) - u * r
        closed_gap = max(closed_gap, float(np.max(np.abs(outlier_process(kernel, u) - numeric))))
    conclude(
        "2", "duality identity", worst <= 1e-8 and closed_gap <= 1e-10,
        f"max residual={worst:.2e}, closed-form gap={closed_gap:.2e}",
    )


# ---------------------------------------------------------------------------
# 3. analytic weight vs grid oracle
# ---------------------------------------------------------------------------


def test_criterion_3_argmin_oracle_equivalence():
    rng = np.random.default_rng(30303)
    grid_size = 10**5
    pool = smooth_conformant_kernels() + [RobustKernel(KernelKind.LINEAR_TRUNCATED)]
    worst = 0.0
    for _ in range(100):
        kernel = pool[int(rng.integers(0, len(pool)))].with_scale(float(rng.uniform(0.1, 10.0)))
        f = float(rng.exponential(2.0 * kernel.c))
        gap = abs(penalized_argmin_oracle(kernel, f, grid_size) - kernel_weight(kernel, f))
        worst = max(worst, gap)
    conclude("3", "analytic weight equals grid argmin", worst <= 2.0 / grid_size,
             f"max |u_grid - sigma'(f)| = {worst:.2e} (allowed {2.0 / grid_size:.1e})")


# ---------------------------------------------------------------------------
# 4. scale solve
# ---------------------------------------------------------------------------


def test_criterion_4_parameter_update():
    rng = np.random.default_rng(40404)
    smooth = [
        RobustKernel(KernelKind.GEMAN_MCCLURE),
        RobustKernel(KernelKind.WELSCH),
        RobustKernel(KernelKind.CAUCHY),
        RobustKernel(KernelKind.CHARBONNIER),
        RobustKernel(KernelKind.BARRON, alpha=1.0),
    ]
    worst = 0.0
    for _ in range(100):
        kernel = smooth[int(rng.integers(0, len(smooth)))]
        losses = rng.exponential(float(rng.uniform(0.1, 10.0)), int(rng.integers(20, 400)))
        zeta = float(rng.uniform(0.1, 0.95))
        upd = parameter_update(kernel, losses, zeta, tol=1e-6)
        assert upd.status == "converged", (kernel.describe(), upd)
        worst = max(worst, upd.residual)
    lt = RobustKernel(KernelKind.LINEAR_TRUNCATED)
    quantile_ok = True
    for _ in range(100):
        losses = rng.exponential(1.0, int(rng.integers(5, 300)))
        zeta = float(rng.uniform(0.05, 1.0))
        upd = parameter_update(lt, losses, zeta)
        m = int(np.ceil(zeta * len(losses)))
        quantile_ok &= upd.c == np.sort(losses)[m - 1]
    conclude("4", "scale solve", worst <= 1e-6 and quantile_ok,
             f"max |mean weight - zeta| = {worst:.2e}; truncated quantile exact: {quantile_ok}")


# ---------------------------------------------------------------------------
# 5. regression sweep (full preset)
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def fig3a_summary(tmp_path_factory):
    outdir = tmp_path_factory.mktemp("fig3a")
    config = load_config(preset_path("fig3a"))
    workers = min(4, os.cpu_count() or 1)
    run_experiment(config, outdir=outdir, workers=workers, echo=lambda *_: None)
    table: dict[tuple[float, str], float] = {}
    with open(Path(outdir) / "summary.csv") as fh:
        for row in csv.DictReader(fh):
            table[(float(row["lambda"]), row["method"])] = float(row["metric_mean"])
    lams = sorted({lam for lam, _ in table})
    lines = ["lambda   gd      sgd     aaa-tl  aaa-gm"]
    for lam in lams:
        lines.append(
            f"{lam:.1f}    {table[(lam, 'gd')]:.4f}  {table[(lam, 'sgd')]:.4f}  "
            f"{table[(lam, 'aaa-tl')]:.4f}  {table[(lam, 'aaa-gm')]:.4f}"
        )
    print("\n".join(["", "fig3a sweep (mean final test RMSE over 5 trials):"] + lines))
    return table


def test_criterion_5a_gd_absolute_rmse(fig3a_summary):
    lams = sorted({lam for lam, _ in fig3a_summary})
    worst = max(fig3a_summary[(lam, "gd")] for lam in lams)
    conclude("5a", "gd final RMSE <= 0.15 at every lambda", worst <= 0.15,
             f"max over lambda = {worst:.4f}")


def test_criterion_5b_adaptive_tracks_gd(fig3a_summary):
    lams = sorted({lam for lam, _ in fig3a_summary})
    ratios = {
        method: max(fig3a_summary[(lam, method)] / fig3a_summary[(lam, "gd")] for lam in lams)
        for method in ("aaa-tl", "aaa-gm")
    }
    ok = all(r <= 2.0 for r in ratios.values())
    conclude("5b", "adaptive methods within 2x of gd at every lambda", ok,
             f"max ratios: tl={ratios['aaa-tl']:.2f}, gm={ratios['aaa-gm']:.2f}")


def test_criterion_5c_sgd_degrades(fig3a_summary):
    lams = [lam for lam, _ in fig3a_summary]
    high = sorted({lam for lam in lams if lam >= 0.5})
    ratios = [fig3a_summary[(lam, "sgd")] / fig3a_summary[(lam, "gd")] for lam in high]
    conclude("5c", "sgd at least 3x worse than gd for lambda >= 0.5",
             min(ratios) >= 3.0,
             "ratios " + ", ".join(f"{lam:.1f}:{r:.2f}" for lam, r in zip(high, ratios)))


# ---------------------------------------------------------------------------
# 6. descent-direction variance bounds
# ---------------------------------------------------------------------------


def test_criterion_6_variance_chain():
    problem = gen_linear_regression(1000, 10, 0.3, 0.1, 5.0, seed=606060)
    kernel = RobustKernel(KernelKind.GEMAN_MCCLURE)
    rng = np.random.default_rng(6)
    eta = 7e-4
    checked = skipped = 0
    ordering_ok = True
    chain_ok = True
    for _ in range(20):
        w = rng.standard_normal(10)
        rep = variance_report(problem, w, kernel, float(rng.uniform(0.1, 10.0)), eta)
        ordering_ok &= rep.bound_aaa <= rep.bound_sgd
        if rep.assumption2_violation_fraction == 0.0:
            checked += 1
            chain_ok &= rep.empirical_sgd <= rep.inlier_term + rep.bound_sgd + 1e-15
        else:
            skipped += 1
    # the benchmark instance essentially always has a few small offsets, so
    # exercise the chain inequality on an instance with no violations as well
    forced = None
    for seed in range(500):
        cand = gen_linear_regression(40, 4, 0.1, 0.01, 8.0, seed=seed)
        w = cand.w_star
        rep = variance_report(cand, w, kernel, 1.0, 1e-2)
        if rep.assumption2_violation_fraction == 0.0:
            forced = rep
            break
    assert forced is not None
    chain_ok &= forced.empirical_sgd <= forced.inlier_term + forced.bound_sgd + 1e-15
    conclude(
        "6", "variance bound ordering and outlier-energy chain",
        ordering_ok and chain_ok,
        f"bound ordering on 20 draws; chain checked on {checked + 1}, skipped {skipped} "
        "(violation fraction > 0, reported)",
    )


# ---------------------------------------------------------------------------
# 7. toy classification (preset)
# ---------------------------------------------------------------------------


def test_criterion_7_noisy_label_classification(tmp_path):
    config = load_config(preset_path("blobs-noisy"))
    workers = min(4, os.cpu_count() or 1)
    run_experiment(config, outdir=tmp_path, workers=workers, echo=lambda *_: None)
    table = {}
    with open(tmp_path / "summary.csv") as fh:
        for row in csv.DictReader(fh):
            table[row["method"]] = float(row["metric_mean"])
    gap = table["aaa-gm"] - table["sgd"]
    ok = gap >= 0.05 and table["aaa-gm"] > 1 / 3 and table["sgd"] > 1 / 3
    conclude("7", "adaptive beats sgd on noisy labels by 5 points", ok,
             f"sgd={table['sgd']:.3f}, aaa-gm={table['aaa-gm']:.3f}, gap={100 * gap:.1f}pp")


# ---------------------------------------------------------------------------
# 8. region-expansion evidence
# ---------------------------------------------------------------------------


def test_criterion_8_region_expansion():
    problem = gen_linear_regression(1000, 10, 0.3, 0.1, 5.0, seed=808080)
    gm = RobustKernel(KernelKind.GEMAN_MCCLURE)
    rng = np.random.default_rng(8)
    ok = True
    strict_checked = 0
    for _ in range(50):
        w = rng.standard_normal(10)
        c = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e4))))
        rep = region_report(problem, w, gm, c)
        u_out = kernel_weight(gm.with_scale(c), problem.losses(w))[problem.outlier_indices]
        if np.any(u_out < 1.0):
            strict_checked += 1
            ok &= rep.m_aaa < rep.m_sgd
        else:
            ok &= rep.m_aaa <= rep.m_sgd
    # truncated kernel with the threshold just below every outlier loss
    w = problem.w_star
    out_losses = problem.losses(w)[problem.outlier_indices]
    c_gate = float(np.min(out_losses)) * (1 - 1e-9)
    rep = region_report(problem, w, RobustKernel(KernelKind.LINEAR_TRUNCATED), c_gate)
    gate_ok = rep.m_aaa == 0.0 and rep.m_sgd > 0.0
    conclude("8", "weighted region statistic dominated", ok and gate_ok,
             f"strict on {strict_checked}/50 draws; truncated gate m_aaa={rep.m_aaa}, "
             f"m_sgd={rep.m_sgd:.1f}")


# ---------------------------------------------------------------------------
# 9. infrastructure determinism + gradient checks
# ---------------------------------------------------------------------------


def test_criterion_9_determinism_and_gradients(tmp_path):
    raw = {
        "problem": {
            "kind": "linear_regression", "n": 120, "k": 5, "noise_sd": 0.1,
            "outlier_sd": 5.0, "test_fraction": 0.25, "lambda_sweep": [0.0, 0.4],
        },
        "methods": [
            {"name": "sgd", "mode": "sgd", "eta": 0.01, "max_iters": 400},
            {"name": "aaa-tl", "mode": "aaa", "kernel": {"kind": "linear_truncated"},
             "eta": 0.01, "zeta": 0.8, "max_iters": 400},
        ],
        "trials": 2,
        "base_seed": 909090,
        "outputs": {"directory": str(tmp_path / "a"), "logging_period": 200},
    }
    cfg = validate_config(raw)
    run_experiment(cfg, outdir=tmp_path / "a", echo=lambda *_: None)
    run_experiment(cfg, outdir=tmp_path / "b", echo=lambda *_: None)
    identical = (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()

    rng = np.random.default_rng(9)
    reg = gen_linear_regression(80, 6, 0.3, 0.1, 5.0, seed=91)
    cls = gen_blob_classification(80, 5, 3, 0.3, 3.0, seed=92)
    fd_worst = 0.0
    for prob in (reg, cls):
        for _ in range(5):
            w = 0.5 * rng.standard_normal(prob.dim)
            i = int(rng.integers(0, prob.n))
            fd_worst = max(fd_worst, finite_diff_check(prob, w, i, h=1e-6))
    conclude("9", "byte-identical reruns and gradient checks",
             identical and fd_worst < 1e-5,
             f"summary identical={identical}, max fd relative error={fd_worst:.2e}")
