"""Sweep execution: (lambda, method, trial) grid with Monte Carlo aggregation.

Every run derives its problem instance from (base_seed, sweep index, trial)
and its batch stream from (base_seed, sweep index, trial, method name), so
methods at the same grid point train on the identical instance and the
output is byte-stable across reruns and worker counts.  One diverged run is
recorded with a failure flag and excluded from the mean; the sweep continues.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from ._core import BACKEND
from .config import ExperimentConfig, MethodSpec, instance_seed, run_seed
from .diagnostics import variance_report
from .kernels import KernelKind, RobustKernel, conformance_check
from .optim import AAAConfig, BaselineConfig, RunRecord, run_aaa, run_baseline
from .problems import LinearRegression, ProblemInstance, gen_blob_classification, gen_linear_regression

SUMMARY_COLUMNS = (
    "lambda",
    "method",
    "trials",
    "metric_mean",
    "metric_std",
    "n_failed",
    "config_hash",
    "base_seed",
)

LANDSCAPE_COLUMNS = ("lambda", "kappa", "observed_loss", "clean_loss")


def schema_hash(columns: tuple[str, ...]) -> str:
    return hashlib.sha256(",".join(columns).encode()).hexdigest()[:16]


# frozen in docs/formats.md; a changed hash means the schema drifted
SUMMARY_SCHEMA_HASH = "0517537101cee38a"
LOG_SCHEMA_HASH = "5e5ce0850870a79c"
LANDSCAPE_SCHEMA_HASH = "d3f61fd9791d405b"


def make_problem(problem_cfg: dict, lam: float, seed: int) -> ProblemInstance:
    if problem_cfg["kind"] == LinearRegression:
        return gen_linear_regression(
            n=problem_cfg["n"],
            k=problem_cfg["k"],
            lam=lam,
            noise_sd=problem_cfg["noise_sd"],
            outlier_sd=problem_cfg["outlier_sd"],
            seed=seed,
            test_fraction=problem_cfg["test_fraction"],
        )
    return gen_blob_classification(
        n=problem_cfg["n"],
        k=problem_cfg["k"],
        K=problem_cfg["K"],
        lam=lam,
        separation=problem_cfg["separation"],
        seed=seed,
        test_fraction=problem_cfg["test_fraction"],
    )


def build_run_config(method: MethodSpec, logging_period: int, diagnostics: bool):
    if method.mode == "aaa":
        return AAAConfig(
            kernel=method.kernel,
            eta=method.eta,
            batch_size=method.batch_size,
            T=method.T,
            zeta=method.zeta,
            c0=method.c0,
            param_update_period=method.param_update_period,
            bisection_tol=method.bisection_tol,
            max_iters=method.max_iters,
            stop_epsilon=method.stop_epsilon,
            stop_patience=method.stop_patience,
            logging_period=logging_period,
            loss_buffer=method.loss_buffer,
            buffer_size=method.buffer_size,
            record_diagnostics=diagnostics,
        )
    return BaselineConfig(
        mode=method.mode,
        eta=method.eta,
        batch_size=method.batch_size,
        momentum=method.momentum,
        clip_tau=method.clip_tau,
        max_iters=method.max_iters,
        stop_epsilon=method.stop_epsilon,
        stop_patience=method.stop_patience,
        logging_period=logging_period,
    )


@dataclass(frozen=True)
class RunTask:
    sweep_index: int
    lam: float
    trial: int
    method: MethodSpec
    problem_cfg: dict
    base_seed: int
    logging_period: int
    diagnostics: bool


def execute_run(task: RunTask) -> RunRecord:
    problem = make_problem(
        task.problem_cfg, task.lam, instance_seed(task.base_seed, task.sweep_index, task.trial)
    )
    seed = run_seed(task.base_seed, task.sweep_index, task.trial, task.method.name)
    cfg = build_run_config(task.method, task.logging_period, task.diagnostics)
    if task.method.mode == "aaa":
        record = run_aaa(problem, cfg, seed)
    else:
        record = run_baseline(problem, cfg, seed)
    record.meta.update(
        {
            "lambda": task.lam,
            "trial": task.trial,
            "method": task.method.name,
            "instance_seed": problem.seed,
            "problem": {**task.problem_cfg, "lambda": task.lam},
        }
    )
    if task.diagnostics:
        record.meta["variance_final"] = _final_variance(problem, task.method, record)
    return record


def _final_variance(problem: ProblemInstance, method: MethodSpec, record: RunRecord) -> dict:
    # baselines are unweighted: report against a wide-open truncated kernel (all u = 1)
    if method.mode == "aaa":
        kernel = method.kernel
        c = record.rows[-1][4] if record.rows else 1.0
        if not math.isfinite(c):
            c = 1.0
    else:
        kernel = RobustKernel(KernelKind.LINEAR_TRUNCATED, c=1.0)
        c = float(np.max(problem.losses(record.final_w))) * 2.0 + 1.0
    rep = variance_report(problem, record.final_w, kernel, c, method.eta)
    return {"kernel": kernel.with_scale(c).describe(), **rep.to_dict()}


def run_tag(lam: float, method: str, trial: int) -> str:
    return f"lam{lam:.2f}_{method}_t{trial:02d}"


def run_experiment(
    config: ExperimentConfig,
    outdir: str | Path | None = None,
    workers: int | None = None,
    echo=print,
) -> Path:
    """Execute the sweep and write summary.csv, per-run records and
    diagnostics.json under the output directory.  Returns that directory."""
    outdir = Path(outdir if outdir is not None else config.outdir)
    runs_dir = outdir / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    workers = workers if workers is not None else config.workers

    flagged = []
    for method in config.methods:
        if method.mode == "aaa":
            report = conformance_check(method.kernel)
            if not report.passes:
                flagged.append(report.to_dict())
                echo(f"[conformance] {report.kernel_id} flagged: "
                     f"i={report.cond_i_pass} ii={report.cond_ii_pass} iii={report.cond_iii_pass}")

    tasks = [
        RunTask(
            sweep_index=m,
            lam=lam,
            trial=j,
            method=method,
            problem_cfg=config.problem,
            base_seed=config.base_seed,
            logging_period=config.logging_period,
            diagnostics=config.diagnostics,
        )
        for m, lam in enumerate(config.lambdas)
        for method in config.methods
        for j in range(config.trials)
    ]

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(execute_run, tasks, chunksize=1))
    else:
        records = [execute_run(t) for t in tasks]

    diagnostics: dict[str, dict] = {}
    for task, record in zip(tasks, records):
        tag = run_tag(task.lam, task.method.name, task.trial)
        record.meta["config_hash"] = config.hash
        record.meta["base_seed"] = config.base_seed
        record.to_csv(runs_dir / f"{tag}.csv")
        record.to_json(runs_dir / f"{tag}.json")
        if config.diagnostics:
            diagnostics[tag] = {
                "variance_final": record.meta.get("variance_final"),
                "region_trajectory": record.diagnostics,
                "failed": record.failed,
            }

    summary_rows = []
    for m, lam in enumerate(config.lambdas):
        for method in config.methods:
            group = [
                rec
                for task, rec in zip(tasks, records)
                if task.sweep_index == m and task.method.name == method.name
            ]
            metrics = [r.final_test_metric for r in group if not r.failed]
            n_failed = sum(1 for r in group if r.failed)
            mean = float(np.mean(metrics)) if metrics else math.nan
            std = float(np.std(metrics)) if metrics else math.nan
            summary_rows.append(
                (repr(lam), method.name, len(group), repr(mean), repr(std), n_failed,
                 config.hash, config.base_seed)
            )
            echo(f"lambda={lam:g} method={method.name}: "
                 f"metric={mean:.4f} +- {std:.4f} ({n_failed} failed)")

    assert schema_hash(SUMMARY_COLUMNS) == SUMMARY_SCHEMA_HASH, "summary schema drifted"
    with open(outdir / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(summary_rows)

    if config.diagnostics:
        with open(outdir / "diagnostics.json", "w") as fh:
            json.dump(diagnostics, fh, indent=2, sort_keys=True)

    provenance = {
        "config": config.raw,
        "config_hash": config.hash,
        "base_seed": config.base_seed,
        "version": __version__,
        "backend": BACKEND,
        "flagged_kernels": flagged,
    }
    with open(outdir / "config_resolved.json", "w") as fh:
        json.dump(provenance, fh, indent=2, sort_keys=True, default=str)
    return outdir
